#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "seil/evolution.hpp"
#include "seil/storage.hpp"

using namespace seil;

namespace {

// small enough to run in seconds, still exercising every stage
evo::ExperimentConfig tiny_config(std::uint64_t seed) {
    evo::ExperimentConfig cfg;
    cfg.master_seed = seed;
    cfg.shots = 1;
    cfg.rollouts_per_model = 3;
    cfg.selected_per_task = 2;
    cfg.max_rounds = 2;
    cfg.eval_rollouts = 3;
    cfg.round0_steps = 200;
    cfg.refine_steps = 100;
    cfg.selector_epochs = 2;
    return cfg;
}

std::string report_csv(const EvolutionReport& report) {
    const std::string path = "/tmp/seil-evo-test-" + std::to_string(::getpid()) + ".csv";
    io::write_report(path, report);
    std::ifstream in(path, std::ios::binary);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::filesystem::remove(path);
    return s;
}

} // namespace

TEST_CASE("check_convergence") {
    CHECK(evo::check_convergence({0.63, 0.70, 0.701, 0.702}, 2, 0.005));
    CHECK_FALSE(evo::check_convergence({0.63, 0.70}, 2, 0.005));
    CHECK_FALSE(evo::check_convergence({0.5, 0.51, 0.52, 0.53, 0.54, 0.55}, 2, 0.005));
    CHECK(evo::check_convergence({0.5, 0.5, 0.5}, 2, 0.005));
    CHECK_THROWS(evo::check_convergence({}, 2, 0.005));
}

TEST_CASE("growth_rate") {
    CHECK(*evo::growth_rate(4.6, 14.6) == doctest::Approx(217.391304).epsilon(1e-6));
    CHECK(*evo::growth_rate(63.4, 75.4) == doctest::Approx(18.9274448).epsilon(1e-6));
    CHECK(*evo::growth_rate(0.5, 0.5) == 0.0);
    CHECK_FALSE(evo::growth_rate(0.0, 0.5).has_value());
}

TEST_CASE("record_round contracts") {
    const evo::ExperimentConfig cfg = tiny_config(31);
    const policy::TaskSuite suite = policy::make_suite(cfg.master_seed);

    SUBCASE("untrained policies essentially never succeed") {
        nn::ParamSet params = policy::init_policy(1);
        params.init_ema_from_values();
        evo::ExperimentConfig big = cfg;
        big.rollouts_per_model = 25;
        const auto recorded = evo::record_round(params, suite, big, 1);
        CHECK(recorded.empty());
    }
    SUBCASE("m_aug off records only base trajectories; everything replays") {
        evo::ExperimentConfig c = cfg;
        c.m_aug = false;
        evo::RunResult run = evo::run_seil(tiny_config(32));
        const auto recorded = evo::record_round(run.policy_params, suite, c, 1);
        for (const auto& t : recorded) {
            CHECK(t.source == sim::Source::kBase);
            CHECK(t.success);
            CHECK(t.round == 1);
            CHECK(sim::replay_check(t));
        }
    }
    SUBCASE("round zero is rejected") {
        nn::ParamSet params = policy::init_policy(1);
        params.init_ema_from_values();
        CHECK_THROWS(evo::record_round(params, suite, cfg, 0));
    }
}

TEST_CASE("identical starts without e_aug reproduce the inconsistency condition") {
    evo::ExperimentConfig cfg = tiny_config(33);
    cfg.e_aug = false;
    const policy::TaskSuite suite = policy::make_suite(cfg.master_seed);
    evo::RunResult run = evo::run_seil(tiny_config(33));

    const auto base = evo::record_model(
        policy::constant_factory(policy::as_policy(run.policy_params)), sim::Source::kBase,
        suite, cfg, 1, cfg.e_aug);
    const auto ema = evo::record_model(
        policy::constant_factory(policy::as_ema_policy(run.policy_params)),
        sim::Source::kEma, suite, cfg, 1, cfg.e_aug);
    for (const auto& b : base)
        for (const auto& e : ema)
            if (b.task_id == e.task_id && b.rollout_idx == e.rollout_idx) {
                CHECK(b.init_state.ee_pos.x == e.init_state.ee_pos.x);
                for (int blk = 0; blk < sim::kNumBlocks; ++blk) {
                    CHECK(b.init_state.block_pos[blk].x == e.init_state.block_pos[blk].x);
                    CHECK(b.init_state.block_pos[blk].y == e.init_state.block_pos[blk].y);
                }
            }
}

TEST_CASE("derivation tuples are unique across a whole experiment") {
    const evo::ExperimentConfig cfg = tiny_config(34);
    std::set<std::uint64_t> seeds;
    std::size_t count = 0;
    auto insert = [&](std::uint64_t s) {
        seeds.insert(s);
        ++count;
    };
    const policy::TaskSuite suite = policy::make_suite(cfg.master_seed);
    for (int t = 0; t < sim::kNumTasks; ++t) {
        for (int i = 0; i < cfg.shots; ++i)
            insert(rng::derive_seed(cfg.master_seed, 0, rng::StreamTag::kExpert,
                                    static_cast<std::uint64_t>(t),
                                    static_cast<std::uint64_t>(i)));
        for (int r = 1; r <= cfg.max_rounds; ++r)
            for (int i = 0; i < cfg.rollouts_per_model; ++i) {
                insert(rng::derive_seed(cfg.master_seed, static_cast<std::uint64_t>(r),
                                        rng::StreamTag::kBase, static_cast<std::uint64_t>(t),
                                        static_cast<std::uint64_t>(i)));
                insert(rng::derive_seed(cfg.master_seed, static_cast<std::uint64_t>(r),
                                        rng::StreamTag::kEma, static_cast<std::uint64_t>(t),
                                        static_cast<std::uint64_t>(i)));
            }
        for (int i = 0; i < cfg.eval_rollouts; ++i) insert(suite.eval_seed(t, i));
    }
    CHECK(seeds.size() == count);
}

TEST_CASE("run_seil") {
    SUBCASE("max_rounds zero gives the pure few-shot baseline") {
        evo::ExperimentConfig cfg = tiny_config(35);
        cfg.max_rounds = 0;
        const evo::RunResult run = evo::run_seil(cfg);
        REQUIRE(run.report.rounds.size() == 1);
        CHECK(run.report.rounds[0].round == 0);
        CHECK(run.report.rounds[0].pool_size == sim::kNumTasks * cfg.shots);
        CHECK(run.report.rounds[0].selected_this_round == 0);
    }
    SUBCASE("same config and seed is bit-identical; different seed is not required to be") {
        const evo::RunResult a = evo::run_seil(tiny_config(36));
        const evo::RunResult b = evo::run_seil(tiny_config(36));
        CHECK(report_csv(a.report) == report_csv(b.report));
        for (std::size_t i = 0; i < a.policy_params.size(); ++i)
            CHECK(a.policy_params.values[i].data == b.policy_params.values[i].data);
    }
    SUBCASE("pool sizes are non-decreasing and per-round additions are bounded") {
        evo::ExperimentConfig cfg = tiny_config(37);
        cfg.max_rounds = 3;
        const evo::RunResult run = evo::run_seil(cfg);
        std::int64_t prev = 0;
        for (const RoundEntry& e : run.report.rounds) {
            CHECK(e.pool_size >= prev);
            prev = e.pool_size;
            CHECK(e.selected_this_round <= cfg.selected_per_task * sim::kNumTasks);
        }
        // rounds are contiguous from zero
        for (std::size_t i = 0; i < run.report.rounds.size(); ++i)
            CHECK(run.report.rounds[i].round == static_cast<int>(i));
    }
    SUBCASE("without the selector, additions are bounded by both recording passes") {
        evo::ExperimentConfig cfg = tiny_config(38);
        cfg.use_selector = false;
        cfg.max_rounds = 1;
        const evo::RunResult run = evo::run_seil(cfg);
        CHECK(run.report.rounds.back().selected_this_round <=
              2 * cfg.rollouts_per_model * sim::kNumTasks);
    }
}

TEST_CASE("record_pools cross-tabulates success by start") {
    evo::ExperimentConfig cfg = tiny_config(39);
    evo::RunResult run = evo::run_seil(tiny_config(39));
    const policy::TaskSuite suite = policy::make_suite(cfg.master_seed);
    auto pools = evo::record_pools(run.policy_params, suite, cfg, 1, true);

    for (const auto& t : pools[evo::PoolTag::kP1]) CHECK(t.source == sim::Source::kBase);
    for (const auto& t : pools[evo::PoolTag::kP2]) CHECK(t.source == sim::Source::kBase);
    for (const auto& t : pools[evo::PoolTag::kP3]) CHECK(t.source == sim::Source::kEma);
    for (const auto& t : pools[evo::PoolTag::kP4]) CHECK(t.source == sim::Source::kEma);
    for (const auto& t : pools[evo::PoolTag::kP5]) {
        CHECK(t.source == sim::Source::kEma);
        CHECK(t.env_augmented);
        CHECK(t.rollout_idx >= static_cast<std::uint64_t>(cfg.rollouts_per_model));
    }
    // P2 and P3 pair up one-to-one on (task, rollout)
    CHECK(pools[evo::PoolTag::kP2].size() == pools[evo::PoolTag::kP3].size());
    // fixed starts: P1..P4 all carry the canonical initial block layout
    for (const auto* tag_pool : {&pools[evo::PoolTag::kP1], &pools[evo::PoolTag::kP2]})
        for (const auto& t : *tag_pool) {
            CHECK_FALSE(t.env_augmented);
            CHECK(t.init_state.block_pos[0].x == 0.3f);
        }
}

TEST_CASE("pool filter restricts what enters the training pool") {
    evo::ExperimentConfig cfg = tiny_config(40);
    cfg.use_selector = false;
    cfg.max_rounds = 1;
    cfg.pool_filter = {evo::PoolTag::kP1, evo::PoolTag::kP2};
    const evo::RunResult run = evo::run_seil(cfg);
    CHECK(run.report.rounds.back().selected_this_round <=
          cfg.rollouts_per_model * sim::kNumTasks);
}

TEST_CASE("ablation study validation") {
    CHECK_THROWS(evo::run_ablation("bogus", tiny_config(1), ""));
    const auto names = evo::ablation_study_names();
    CHECK(std::find(names.begin(), names.end(), "selection") != names.end());
    CHECK(names.size() == 5);
}

TEST_CASE("selection study emits all four schemes") {
    evo::ExperimentConfig cfg = tiny_config(41);
    cfg.rollouts_per_model = 2;
    cfg.eval_rollouts = 2;
    cfg.round0_steps = 100;
    cfg.refine_steps = 50;
    const std::string csv = evo::run_ablation("selection", cfg, "");
    CHECK(csv.find("uniform,") != std::string::npos);
    CHECK(csv.find("descending,") != std::string::npos);
    CHECK(csv.find("ascending,") != std::string::npos);
    CHECK(csv.find("mixed,") != std::string::npos);
}
