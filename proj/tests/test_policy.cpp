#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "seil/evolution.hpp"
#include "seil/policy.hpp"

using namespace seil;

namespace {

std::vector<sim::Trajectory> expert_set(std::uint64_t master, int shots) {
    evo::ExperimentConfig cfg;
    cfg.master_seed = master;
    cfg.shots = shots;
    return evo::generate_expert_demos(policy::make_suite(master), cfg);
}

double pooled_mse(const nn::ParamSet& params, const std::vector<sim::Trajectory>& demos) {
    double acc = 0.0;
    std::int64_t n = 0;
    for (const auto& d : demos)
        for (const auto& [obs, act] : d.steps) {
            const sim::Action pred = policy::predict(params, obs);
            for (int i = 0; i < sim::kActionDim; ++i) {
                const double e = static_cast<double>(pred[i]) - act[i];
                acc += e * e;
            }
            n += sim::kActionDim;
        }
    return acc / static_cast<double>(n);
}

} // namespace

TEST_CASE("predict clamps and is deterministic") {
    const sim::Observation obs = sim::observe(sim::canonical_state(), sim::make_task(0));

    SUBCASE("zero parameters give the zero action") {
        nn::ParamSet zero;
        nn::add_mlp_params(zero, policy::policy_spec());
        const sim::Action a = policy::predict(zero, obs);
        CHECK(a == sim::Action{0.0f, 0.0f, 0.0f});
    }
    SUBCASE("same inputs give the same action") {
        const nn::ParamSet params = policy::init_policy(5);
        CHECK(policy::predict(params, obs) == policy::predict(params, obs));
    }
    SUBCASE("outputs past the unit box are clamped per component") {
        nn::ParamSet params;
        nn::add_mlp_params(params, policy::policy_spec());
        nn::Tensor& bias = params.at("policy.b2");
        bias.data = {1.7f, -0.2f, -3.0f};
        const sim::Action a = policy::predict(params, obs);
        CHECK(a[0] == 1.0f);
        CHECK(a[1] == -0.2f);
        CHECK(a[2] == -1.0f);
    }
}

TEST_CASE("train_bc with zero steps leaves parameters bit-unchanged") {
    nn::ParamSet params = policy::init_policy(3);
    const auto demos = expert_set(3, 1);
    const nn::ParamSet before = params;
    policy::TrainOptions opts;
    opts.steps = 0;
    policy::train_bc(params, demos, opts);
    for (std::size_t i = 0; i < params.size(); ++i)
        CHECK(params.values[i].data == before.values[i].data);
}

TEST_CASE("train_bc overfits a single pair") {
    nn::ParamSet params = policy::init_policy(7);
    sim::Trajectory demo = sim::rollout(sim::expert_policy(9), sim::make_task(2), 9,
                                        {true, 0.05}, sim::Source::kExpert, 0, 0);
    demo.steps.resize(1);
    policy::TrainOptions opts;
    opts.steps = 2000;
    opts.shuffle_seed = 1;
    policy::train_bc(params, {demo}, opts);
    const sim::Action pred = policy::predict(params, demo.steps[0].first);
    for (int i = 0; i < sim::kActionDim; ++i)
        CHECK(std::abs(pred[i] - demo.steps[0].second[i]) < 0.02);
}

TEST_CASE("training reduces the pooled loss on the few-shot set") {
    nn::ParamSet params = policy::init_policy(11);
    const auto demos = expert_set(11, 2);
    const double before = pooled_mse(params, demos);
    policy::TrainOptions opts;
    opts.steps = 400;
    opts.shuffle_seed = 2;
    policy::train_bc(params, demos, opts);
    CHECK(pooled_mse(params, demos) < before);
}

TEST_CASE("the shadow follows the tau-recurrence of the parameter history") {
    nn::ParamSet params = policy::init_policy(13);
    const auto demos = expert_set(13, 1);

    // replay the recurrence in double from the logged history
    std::vector<std::vector<double>> shadow;
    for (const nn::Tensor& t : params.values)
        shadow.emplace_back(t.data.begin(), t.data.end()); // initialized to the entry params
    const double tau = 0.999;

    policy::TrainOptions opts;
    opts.steps = 150;
    opts.tau = static_cast<float>(tau);
    opts.shuffle_seed = 3;
    opts.on_step = [&](const nn::ParamSet& ps) {
        for (std::size_t i = 0; i < ps.size(); ++i)
            for (std::size_t j = 0; j < shadow[i].size(); ++j)
                shadow[i][j] = tau * shadow[i][j] + (1.0 - tau) * ps.values[i].data[j];
    };
    policy::train_bc(params, demos, opts);

    REQUIRE(params.has_ema());
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = 0; j < shadow[i].size(); ++j)
            CHECK(params.ema[i].data[j] == doctest::Approx(shadow[i][j]).epsilon(1e-5));
}

TEST_CASE("the shadow persists across training calls") {
    nn::ParamSet params = policy::init_policy(17);
    const auto demos = expert_set(17, 1);
    policy::TrainOptions opts;
    opts.steps = 50;
    opts.shuffle_seed = 4;
    policy::train_bc(params, demos, opts);
    const std::vector<float> shadow_after_first = params.ema[0].data;
    policy::train_bc(params, demos, opts);
    CHECK(params.ema[0].data != shadow_after_first); // updated, not reset
}

TEST_CASE("evaluate") {
    const policy::TaskSuite suite = policy::make_suite(21);

    SUBCASE("constant zero policy never succeeds") {
        nn::ParamSet zero;
        nn::add_mlp_params(zero, policy::policy_spec());
        const SRReport r = policy::evaluate(
            policy::constant_factory(policy::as_policy(zero)), suite, 5, "base", 0);
        CHECK(r.mean_sr() == 0.0);
        for (int t = 0; t < sim::kNumTasks; ++t) CHECK(r.successes[t] == 0);
    }
    SUBCASE("deterministic and side-effect free") {
        nn::ParamSet params = policy::init_policy(23);
        params.init_ema_from_values();
        const nn::ParamSet snapshot = params;
        const SRReport a = policy::evaluate(
            policy::constant_factory(policy::as_policy(params)), suite, 4, "base", 0);
        const SRReport b = policy::evaluate(
            policy::constant_factory(policy::as_policy(params)), suite, 4, "base", 0);
        CHECK(a.successes == b.successes);
        for (std::size_t i = 0; i < params.size(); ++i) {
            CHECK(params.values[i].data == snapshot.values[i].data);
            CHECK(params.ema[i].data == snapshot.ema[i].data);
        }
    }
    SUBCASE("mean is the average of per-task rates") {
        SRReport r;
        r.rollouts_per_task = 10;
        r.successes = {10, 5, 0, 0, 0, 0, 0, 1};
        CHECK(r.mean_sr() == doctest::Approx((1.0 + 0.5 + 0.1) / 8.0));
    }
}
