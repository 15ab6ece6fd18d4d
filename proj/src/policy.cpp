#include "seil/policy.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "seil/parallel.hpp"

namespace seil::policy {

nn::MlpSpec policy_spec() { return {"policy", {sim::kObsDim, 128, 128, sim::kActionDim}, nn::Act::kNone}; }

nn::ParamSet init_policy(std::uint64_t seed) {
    const nn::MlpSpec spec = policy_spec();
    nn::ParamSet ps;
    nn::add_mlp_params(ps, spec);
    rng::SplitMix stream(seed);
    nn::init_mlp_params(ps, spec, stream);
    return ps;
}

namespace {

sim::Action forward_clamped(const nn::ParamSet& params, const sim::Observation& obs) {
    static const nn::MlpSpec spec = policy_spec();
    std::vector<float> y(sim::kActionDim);
    nn::mlp_forward_batch(params, spec, obs.data(), 1, y.data(), nullptr);
    return sim::clamp_action({y[0], y[1], y[2]});
}

} // namespace

sim::Action predict(const nn::ParamSet& params, const sim::Observation& obs) {
    return forward_clamped(params, obs);
}

sim::PolicyFn as_policy(const nn::ParamSet& params) {
    return [&params](const sim::SimState&, const sim::Observation& obs) {
        return forward_clamped(params, obs);
    };
}

sim::PolicyFn as_ema_policy(const nn::ParamSet& params) {
    if (!params.has_ema()) throw std::logic_error("as_ema_policy: shadow missing");
    // view of the shadow with the same names/shapes
    auto shadow = std::make_shared<nn::ParamSet>();
    shadow->names = params.names;
    shadow->values = params.ema;
    return [shadow](const sim::SimState&, const sim::Observation& obs) {
        return forward_clamped(*shadow, obs);
    };
}

void train_bc(nn::ParamSet& params, const std::vector<sim::Trajectory>& demos,
              const TrainOptions& opts) {
    if (opts.steps == 0) return;
    if (demos.empty()) throw std::invalid_argument("train_bc: no demonstrations");
    const nn::MlpSpec spec = policy_spec();

    // pool all (obs, action) pairs
    std::vector<const sim::Observation*> obs;
    std::vector<const sim::Action*> act;
    for (const auto& d : demos)
        for (const auto& [o, a] : d.steps) {
            obs.push_back(&o);
            act.push_back(&a);
        }
    const std::size_t n = obs.size();
    if (n == 0) throw std::invalid_argument("train_bc: demonstrations have no steps");

    if (!params.has_adam()) params.init_adam_state();
    if (!params.has_ema()) params.init_ema_from_values();

    rng::SplitMix shuffle(opts.shuffle_seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    nn::GradAccum acc;
    acc.init(params);
    nn::ParamSet grads = params.zeros_clone();

    const int B = opts.batch_size;
    std::vector<float> X(static_cast<std::size_t>(sim::kObsDim) * B);
    std::vector<float> T(static_cast<std::size_t>(sim::kActionDim) * B);
    std::vector<float> Y(static_cast<std::size_t>(sim::kActionDim) * B);
    std::vector<float> dY(static_cast<std::size_t>(sim::kActionDim) * B);

    int done = 0;
    std::size_t cursor = n; // forces a shuffle on the first step
    while (done < opts.steps) {
        if (cursor >= n) {
            for (std::size_t i = n - 1; i > 0; --i) {
                const std::size_t j = shuffle.next_below(i + 1);
                std::swap(order[i], order[j]);
            }
            cursor = 0;
        }
        const int bn = static_cast<int>(std::min<std::size_t>(B, n - cursor));
        for (int b = 0; b < bn; ++b) {
            const std::size_t idx = order[cursor + static_cast<std::size_t>(b)];
            for (int d = 0; d < sim::kObsDim; ++d)
                X[static_cast<std::size_t>(d) * bn + b] = (*obs[idx])[d];
            for (int d = 0; d < sim::kActionDim; ++d)
                T[static_cast<std::size_t>(d) * bn + b] = (*act[idx])[d];
        }
        cursor += static_cast<std::size_t>(bn);

        nn::MlpCache cache;
        nn::mlp_forward_batch(params, spec, X.data(), bn, Y.data(), &cache);
        const double loss = nn::mse_loss(Y.data(), T.data(), sim::kActionDim, bn, dY.data());
        if (!std::isfinite(loss))
            throw std::runtime_error("train_bc: non-finite loss at step " +
                                     std::to_string(done) + " (batch of " +
                                     std::to_string(bn) + " samples)");
        acc.clear();
        nn::mlp_backward_batch(params, spec, cache, dY.data(), acc, nullptr);
        acc.scale_to(1.0, grads);
        nn::adam_step(params, grads, opts.adam);
        nn::ema_update(params, opts.tau);
        ++done;
        if (opts.on_step) opts.on_step(params);
    }
}

TaskSuite make_suite(std::uint64_t master_seed) {
    TaskSuite suite;
    suite.master_seed = master_seed;
    for (int t = 0; t < sim::kNumTasks; ++t) suite.tasks.push_back(sim::make_task(t));
    return suite;
}

PolicyFactory constant_factory(sim::PolicyFn pol) {
    return [pol = std::move(pol)](std::uint64_t) { return pol; };
}

PolicyFactory expert_factory() {
    return [](std::uint64_t env_seed) { return sim::expert_policy(env_seed); };
}

SRReport evaluate(const PolicyFactory& factory, const TaskSuite& suite,
                  int rollouts_per_task, const std::string& model_tag, int round) {
    if (rollouts_per_task < 1) throw std::invalid_argument("evaluate: need E >= 1");
    const int total = sim::kNumTasks * rollouts_per_task;
    std::vector<unsigned char> ok(static_cast<std::size_t>(total), 0);
    par::for_each(total, [&](std::int64_t i) {
        const int task_id = static_cast<int>(i) / rollouts_per_task;
        const int idx = static_cast<int>(i) % rollouts_per_task;
        const std::uint64_t seed = suite.eval_seed(task_id, idx);
        const sim::Trajectory t =
            sim::rollout(factory(seed), suite.tasks[static_cast<std::size_t>(task_id)],
                         seed, suite.eval_aug, sim::Source::kBase, round,
                         static_cast<std::uint64_t>(idx));
        ok[static_cast<std::size_t>(i)] = t.success ? 1 : 0;
    });
    SRReport report;
    report.model = model_tag;
    report.round = round;
    report.rollouts_per_task = rollouts_per_task;
    for (int i = 0; i < total; ++i)
        report.successes[static_cast<std::size_t>(i / rollouts_per_task)] += ok[i];
    return report;
}

} // namespace seil::policy
