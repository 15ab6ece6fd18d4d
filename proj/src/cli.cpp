#include "seil/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <unistd.h>

#include <CLI11.hpp>

#include "seil/evolution.hpp"
#include "seil/parallel.hpp"
#include "seil/storage.hpp"

namespace seil::cli {

namespace {

namespace fs = std::filesystem;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
    bool verify = false;
    std::vector<std::string> overrides;
};

evo::ExperimentConfig effective_config(const CommonArgs& args) {
    evo::ExperimentConfig cfg;
    if (!args.config_path.empty()) cfg = evo::load_config(args.config_path);
    if (args.seed_set) cfg.master_seed = args.seed;
    for (const std::string& kv : args.overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects key=value, got: " + kv);
        evo::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void prepare_out(const CommonArgs& args, const evo::ExperimentConfig& cfg) {
    fs::create_directories(args.out_dir);
    io::write_text_file(args.out_dir + "/config_echo.json", evo::config_echo_json(cfg));
}

void print_sr(const SRReport& r) {
    std::printf("round %d %s mean SR %.4f\n", r.round, r.model.c_str(), r.mean_sr());
}

int cmd_gen_demos(const CommonArgs& args) {
    const evo::ExperimentConfig cfg = effective_config(args);
    prepare_out(args, cfg);
    const policy::TaskSuite suite = policy::make_suite(cfg.master_seed);
    const auto demos = evo::generate_expert_demos(suite, cfg);
    const std::string path = args.out_dir + "/expert_demos.jsonl";
    io::write_demos(path, demos);
    if (args.verify) io::read_demos(path, true);
    std::printf("wrote %zu expert demos to %s\n", demos.size(), path.c_str());
    return 0;
}

int cmd_train_baseline(const CommonArgs& args) {
    const evo::ExperimentConfig cfg = effective_config(args);
    prepare_out(args, cfg);
    const policy::TaskSuite suite = policy::make_suite(cfg.master_seed);
    const auto demos = evo::generate_expert_demos(suite, cfg);
    io::write_demos(args.out_dir + "/expert_demos.jsonl", demos);

    nn::ParamSet params = policy::init_policy(
        rng::derive_seed(cfg.master_seed, 0, rng::StreamTag::kInit, 0, 0));
    policy::TrainOptions opts;
    opts.steps = cfg.round0_steps;
    opts.tau = cfg.tau;
    opts.batch_size = cfg.batch_size;
    opts.adam.lr = cfg.lr;
    opts.shuffle_seed = rng::derive_seed(cfg.master_seed, 0, rng::StreamTag::kShuffle, 0, 0);
    policy::train_bc(params, demos, opts);

    const SRReport base = policy::evaluate(
        policy::constant_factory(policy::as_policy(params)), suite, cfg.eval_rollouts,
        "base", 0);
    const SRReport ema = policy::evaluate(
        policy::constant_factory(policy::as_ema_policy(params)), suite, cfg.eval_rollouts,
        "ema", 0);
    io::write_checkpoint(args.out_dir + "/policy_round0.ckpt", params);
    io::write_sr_reports(args.out_dir + "/baseline_report.csv", {base, ema});
    print_sr(base);
    print_sr(ema);
    return 0;
}

int cmd_evolve(const CommonArgs& args) {
    const evo::ExperimentConfig cfg = effective_config(args);
    prepare_out(args, cfg);
    const evo::RunResult result = evo::run_seil(cfg, args.out_dir);
    for (const RoundEntry& e : result.report.rounds) {
        print_sr(e.base);
        print_sr(e.ema);
    }
    if (result.report.growth_rate_pct)
        std::printf("growth rate %.1f%% (best round vs round 0)\n",
                    *result.report.growth_rate_pct);
    if (result.report.convergence_round >= 0)
        std::printf("converged at round %d\n", result.report.convergence_round);
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& ckpt) {
    const evo::ExperimentConfig cfg = effective_config(args);
    prepare_out(args, cfg);
    const nn::ParamSet params = io::read_checkpoint(ckpt);
    const policy::TaskSuite suite = policy::make_suite(cfg.master_seed);
    std::vector<SRReport> reports;
    reports.push_back(policy::evaluate(policy::constant_factory(policy::as_policy(params)),
                                       suite, cfg.eval_rollouts, "base", 0));
    if (params.has_ema())
        reports.push_back(
            policy::evaluate(policy::constant_factory(policy::as_ema_policy(params)), suite,
                             cfg.eval_rollouts, "ema", 0));
    io::write_sr_reports(args.out_dir + "/eval_report.csv", reports);
    for (const SRReport& r : reports) print_sr(r);
    return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& study) {
    const evo::ExperimentConfig cfg = effective_config(args);
    prepare_out(args, cfg);
    const std::string csv = evo::run_ablation(study, cfg, args.out_dir);
    std::fputs(csv.c_str(), stdout);
    return 0;
}

// Built-in verification: gradient checks, the EMA recurrence closed form,
// replay integrity, and codec round-trips.
int cmd_selftest() {
    bool ok = true;

    double max_err = 0.0;
    std::string worst;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const nn::GradCheckReport rep = nn::grad_check(seed);
        if (rep.max_rel_err > max_err) {
            max_err = rep.max_rel_err;
            worst = rep.worst_case;
        }
    }
    std::printf("grad_check: max relative error %.3e (%s): %s\n", max_err, worst.c_str(),
                max_err < 1e-3 ? "ok" : "FAIL");
    ok = ok && max_err < 1e-3;

    {
        bool ema_ok = true;
        rng::SplitMix stream(7);
        nn::ParamSet ps;
        ps.add("w", nn::Tensor({4, 3}));
        for (float& v : ps.at("w").data) v = static_cast<float>(stream.next_sym(1.0));
        for (float tau : {0.0f, 0.5f, 0.9f, 0.999f}) {
            nn::ParamSet run = ps;
            run.init_ema_from_values();
            for (float& v : run.ema[0].data) v = static_cast<float>(stream.next_sym(1.0));
            const std::vector<float> s0 = run.ema[0].data;
            int applied = 0;
            for (int target : {1, 10, 100}) {
                while (applied < target) {
                    nn::ema_update(run, tau);
                    ++applied;
                }
                const double decay = std::pow(static_cast<double>(tau), target);
                for (std::size_t j = 0; j < s0.size(); ++j) {
                    const double theta = ps.at("w").data[j];
                    const double expect = theta + decay * (s0[j] - theta);
                    if (std::abs(run.ema[0].data[j] - expect) > 1e-5) ema_ok = false;
                    if (tau == 0.0f && run.ema[0].data[j] != ps.at("w").data[j])
                        ema_ok = false;
                }
            }
        }
        std::printf("ema closed form: %s\n", ema_ok ? "ok" : "FAIL");
        ok = ok && ema_ok;
    }

    {
        bool replay_ok = true;
        const policy::TaskSuite suite = policy::make_suite(11);
        nn::ParamSet random_net = policy::init_policy(99);
        for (int i = 0; i < 24; ++i) {
            const int task_id = i % sim::kNumTasks;
            const sim::EnvAugConfig aug{i % 2 == 0, 0.05};
            const std::uint64_t seed =
                rng::derive_seed(11, 1, rng::StreamTag::kBase,
                                 static_cast<std::uint64_t>(task_id),
                                 static_cast<std::uint64_t>(i));
            const sim::PolicyFn pol = (i % 3 == 0)
                                          ? sim::expert_policy(seed)
                                          : policy::as_policy(random_net);
            const sim::Trajectory t =
                sim::rollout(pol, suite.tasks[static_cast<std::size_t>(task_id)], seed, aug,
                             sim::Source::kBase, 1, static_cast<std::uint64_t>(i));
            if (!sim::replay_check(t)) replay_ok = false;
        }
        std::printf("replay integrity: %s\n", replay_ok ? "ok" : "FAIL");
        ok = ok && replay_ok;
    }

    {
        bool codec_ok = true;
        const fs::path dir =
            fs::temp_directory_path() / ("seil-selftest-" + std::to_string(::getpid()));
        fs::create_directories(dir);
        const sim::Trajectory demo =
            sim::rollout(sim::expert_policy(5), sim::make_task(3), 5, {true, 0.05},
                         sim::Source::kExpert, 0, 0);
        io::write_demos((dir / "demo.jsonl").string(), {demo});
        const auto demos = io::read_demos((dir / "demo.jsonl").string(), true);
        codec_ok = codec_ok && demos.size() == 1 && demos[0].steps == demo.steps &&
                   demos[0].first_frame == demo.first_frame;

        nn::ParamSet params = policy::init_policy(123);
        params.init_adam_state();
        params.init_ema_from_values();
        io::write_checkpoint((dir / "p.ckpt").string(), params);
        const nn::ParamSet loaded = io::read_checkpoint((dir / "p.ckpt").string());
        codec_ok = codec_ok && loaded.names == params.names &&
                   loaded.values[0].data == params.values[0].data &&
                   loaded.ema[1].data == params.ema[1].data;
        fs::remove_all(dir);
        std::printf("codec round-trips: %s\n", codec_ok ? "ok" : "FAIL");
        ok = ok && codec_ok;
    }

    std::printf("selftest: %s\n", ok ? "ok" : "FAIL");
    return ok ? 0 : 2;
}

} // namespace

int run_command(int argc, const char* const* argv) {
    CLI::App app{"self-evolving imitation-learning lab"};
    app.require_subcommand(1);

    CommonArgs args;
    app.add_option("--config", args.config_path, "experiment config (JSON)");
    app.add_option("--out", args.out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", args.seed, "master seed override");
    app.add_option("--threads", args.threads, "rollout/kernel thread cap (0 = hardware)");
    app.add_flag("--verify", args.verify, "replay-verify demo files after IO");
    app.add_option("--set", args.overrides, "config override key=value (repeatable)");

    auto* gen = app.add_subcommand("gen-demos", "write the few-shot expert demo set");
    auto* baseline = app.add_subcommand("train-baseline", "train and evaluate the few-shot policy");
    auto* evolve = app.add_subcommand("evolve", "run the full self-evolution loop");
    auto* eval = app.add_subcommand("eval", "evaluate a policy checkpoint");
    std::string ckpt;
    eval->add_option("--ckpt", ckpt, "policy checkpoint")->required();
    auto* ablate = app.add_subcommand("ablate", "run a study harness");
    std::string study;
    ablate->add_option("--study", study, "components|rollouts|selection|pools|selector_inputs")
        ->required();
    auto* selftest = app.add_subcommand("selftest", "run built-in verification suites");

    try {
        app.parse(argc, const_cast<char**>(argv));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    args.seed_set = seed_opt->count() > 0;
    par::set_max_threads(args.threads);

    const bool needs_out = !selftest->parsed();
    if (needs_out && args.out_dir.empty()) {
        std::fprintf(stderr, "error: --out DIR is required for this command\n");
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_demos(args);
        if (baseline->parsed()) return cmd_train_baseline(args);
        if (evolve->parsed()) return cmd_evolve(args);
        if (eval->parsed()) return cmd_eval(args, ckpt);
        if (ablate->parsed()) return cmd_ablate(args, study);
        if (selftest->parsed()) return cmd_selftest();
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}

int run_command(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("seil");
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run_command(static_cast<int>(argv.size()), argv.data());
}

} // namespace seil::cli
