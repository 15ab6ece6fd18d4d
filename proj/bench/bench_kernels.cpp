#include <benchmark/benchmark.h>

#include <vector>

#include "seil/nn.hpp"
#include "seil/parallel.hpp"
#include "seil/policy.hpp"
#include "seil/prng.hpp"
#include "seil/sim.hpp"

// Serial reference vs OpenMP kernels. The parallel paths write disjoint
// output slots, so both variants produce bit-identical results; these
// benchmarks compare their throughput.

namespace {

using namespace seil;

std::vector<float> random_buffer(std::size_t n, std::uint64_t seed) {
    rng::SplitMix s(seed);
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(s.next_sym(1.0));
    return v;
}

constexpr int kRows = 1024;
constexpr int kCols = 448;
constexpr int kBatch = 16;

void bench_gemm_wx_serial(benchmark::State& state) {
    const auto w = random_buffer(static_cast<std::size_t>(kRows) * kCols, 1);
    const auto b = random_buffer(kRows, 2);
    const auto x = random_buffer(static_cast<std::size_t>(kCols) * kBatch, 3);
    std::vector<float> z(static_cast<std::size_t>(kRows) * kBatch);
    for (auto _ : state) {
        nn::gemm_wx_serial(w.data(), b.data(), x.data(), z.data(), kRows, kCols, kBatch);
        benchmark::DoNotOptimize(z.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(kRows) * kCols *
                            kBatch);
}

void bench_gemm_wx_parallel(benchmark::State& state) {
    par::set_max_threads(static_cast<int>(state.range(0)));
    const auto w = random_buffer(static_cast<std::size_t>(kRows) * kCols, 1);
    const auto b = random_buffer(kRows, 2);
    const auto x = random_buffer(static_cast<std::size_t>(kCols) * kBatch, 3);
    std::vector<float> z(static_cast<std::size_t>(kRows) * kBatch);
    for (auto _ : state) {
        nn::gemm_wx_parallel(w.data(), b.data(), x.data(), z.data(), kRows, kCols, kBatch);
        benchmark::DoNotOptimize(z.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(kRows) * kCols *
                            kBatch);
    par::set_max_threads(0);
}

void run_eval_batch(int threads) {
    par::set_max_threads(threads);
    const policy::TaskSuite suite = policy::make_suite(5);
    static const nn::ParamSet params = policy::init_policy(7);
    policy::evaluate(policy::constant_factory(policy::as_policy(params)), suite, 4, "base",
                     0);
    par::set_max_threads(0);
}

void bench_rollout_batch_serial(benchmark::State& state) {
    for (auto _ : state) run_eval_batch(1);
}

void bench_rollout_batch_parallel(benchmark::State& state) {
    for (auto _ : state) run_eval_batch(static_cast<int>(state.range(0)));
}

BENCHMARK(bench_gemm_wx_serial);
BENCHMARK(bench_gemm_wx_parallel)->Arg(2)->Arg(4)->Arg(8);
BENCHMARK(bench_rollout_batch_serial);
BENCHMARK(bench_rollout_batch_parallel)->Arg(4);

} // namespace

BENCHMARK_MAIN();
