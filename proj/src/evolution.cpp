#include "seil/evolution.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <stdexcept>

#include "seil/parallel.hpp"
#include "seil/storage.hpp"

namespace seil::evo {

namespace {

sim::EnvAugConfig recording_aug(const ExperimentConfig& cfg, bool enabled) {
    return {enabled, cfg.delta};
}

selector::SelectorSpec selector_spec_for(const ExperimentConfig& cfg) {
    selector::SelectorSpec spec;
    spec.sequence_only = cfg.sequence_only_selector;
    return spec;
}

policy::TrainOptions bc_options(const ExperimentConfig& cfg, int steps,
                                std::uint64_t shuffle_seed) {
    policy::TrainOptions opts;
    opts.steps = steps;
    opts.tau = cfg.tau;
    opts.batch_size = cfg.batch_size;
    opts.adam.lr = cfg.lr;
    opts.shuffle_seed = shuffle_seed;
    return opts;
}

} // namespace

std::vector<sim::Trajectory> generate_expert_demos(const policy::TaskSuite& suite,
                                                   const ExperimentConfig& cfg) {
    // Few-shot demos mirror the benchmark distribution: perturbed starts.
    const sim::EnvAugConfig aug{true, cfg.delta};
    const int total = sim::kNumTasks * cfg.shots;
    std::vector<sim::Trajectory> demos(static_cast<std::size_t>(total));
    par::for_each(total, [&](std::int64_t i) {
        const int task_id = static_cast<int>(i) / cfg.shots;
        const int idx = static_cast<int>(i) % cfg.shots;
        const std::uint64_t seed =
            rng::derive_seed(cfg.master_seed, 0, rng::StreamTag::kExpert,
                             static_cast<std::uint64_t>(task_id),
                             static_cast<std::uint64_t>(idx));
        demos[static_cast<std::size_t>(i)] =
            sim::rollout(sim::expert_policy(seed), suite.tasks[static_cast<std::size_t>(task_id)],
                         seed, aug, sim::Source::kExpert, 0,
                         static_cast<std::uint64_t>(idx));
    });
    for (const auto& d : demos)
        if (!d.success)
            throw std::runtime_error("expert rollout failed for demo " + d.demo_id());
    return demos;
}

std::vector<sim::Trajectory> generate_validation_demos(const policy::TaskSuite& suite,
                                                       const ExperimentConfig& cfg,
                                                       int count) {
    rng::SplitMix task_stream(
        rng::derive_seed(cfg.master_seed, 0, rng::StreamTag::kValidation, 0, 0));
    std::vector<int> task_ids(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j)
        task_ids[static_cast<std::size_t>(j)] =
            static_cast<int>(task_stream.next_below(sim::kNumTasks));

    const sim::EnvAugConfig aug{true, cfg.delta};
    std::vector<sim::Trajectory> demos(static_cast<std::size_t>(count));
    par::for_each(count, [&](std::int64_t j) {
        const int task_id = task_ids[static_cast<std::size_t>(j)];
        const std::uint64_t idx = 1000 + static_cast<std::uint64_t>(j); // outside the training block
        const std::uint64_t seed = rng::derive_seed(
            cfg.master_seed, 0, rng::StreamTag::kValidation,
            static_cast<std::uint64_t>(task_id), idx);
        demos[static_cast<std::size_t>(j)] =
            sim::rollout(sim::expert_policy(seed), suite.tasks[static_cast<std::size_t>(task_id)],
                         seed, aug, sim::Source::kExpert, 0, idx);
    });
    for (const auto& d : demos)
        if (!d.success)
            throw std::runtime_error("expert rollout failed for validation demo " + d.demo_id());
    return demos;
}

namespace {

std::vector<sim::Trajectory> record_model_at(const policy::PolicyFactory& factory,
                                             sim::Source source,
                                             const policy::TaskSuite& suite,
                                             const ExperimentConfig& cfg, int round,
                                             bool env_aug, int idx_offset) {
    const sim::EnvAugConfig aug = recording_aug(cfg, env_aug);
    const int total = sim::kNumTasks * cfg.rollouts_per_model;
    std::vector<sim::Trajectory> slots(static_cast<std::size_t>(total));
    par::for_each(total, [&](std::int64_t i) {
        const int task_id = static_cast<int>(i) / cfg.rollouts_per_model;
        const std::uint64_t idx = static_cast<std::uint64_t>(
            i % cfg.rollouts_per_model + idx_offset);
        const std::uint64_t seed = rng::derive_seed(
            cfg.master_seed, static_cast<std::uint64_t>(round), sim::source_tag(source),
            static_cast<std::uint64_t>(task_id), idx);
        slots[static_cast<std::size_t>(i)] =
            sim::rollout(factory(seed), suite.tasks[static_cast<std::size_t>(task_id)],
                         seed, aug, source, round, idx);
    });
    std::vector<sim::Trajectory> successes;
    for (auto& t : slots)
        if (t.success) successes.push_back(std::move(t));
    return successes;
}

} // namespace

std::vector<sim::Trajectory> record_model(const policy::PolicyFactory& factory,
                                          sim::Source source,
                                          const policy::TaskSuite& suite,
                                          const ExperimentConfig& cfg, int round,
                                          bool env_aug) {
    return record_model_at(factory, source, suite, cfg, round, env_aug, 0);
}

std::map<PoolTag, std::vector<sim::Trajectory>> record_pools(const nn::ParamSet& params,
                                                             const policy::TaskSuite& suite,
                                                             const ExperimentConfig& cfg,
                                                             int round, bool with_p5) {
    // Base and EMA record under shared fixed starts so their successes can be
    // cross-tabulated; the P5 pass re-runs the EMA model under perturbed
    // starts with rollout indices offset by R to keep seed tuples unique.
    const auto base_fixed =
        record_model(policy::constant_factory(policy::as_policy(params)),
                     sim::Source::kBase, suite, cfg, round, false);
    const auto ema_fixed =
        record_model(policy::constant_factory(policy::as_ema_policy(params)),
                     sim::Source::kEma, suite, cfg, round, false);

    auto succeeded = [](const std::vector<sim::Trajectory>& demos, int task,
                        std::uint64_t idx) {
        for (const auto& t : demos)
            if (t.task_id == task && t.rollout_idx == idx) return true;
        return false;
    };

    std::map<PoolTag, std::vector<sim::Trajectory>> pools;
    for (const auto& t : base_fixed)
        pools[succeeded(ema_fixed, t.task_id, t.rollout_idx) ? PoolTag::kP2 : PoolTag::kP1]
            .push_back(t);
    for (const auto& t : ema_fixed)
        pools[succeeded(base_fixed, t.task_id, t.rollout_idx) ? PoolTag::kP3 : PoolTag::kP4]
            .push_back(t);
    if (with_p5)
        pools[PoolTag::kP5] = record_model_at(
            policy::constant_factory(policy::as_ema_policy(params)), sim::Source::kEma,
            suite, cfg, round, true, cfg.rollouts_per_model);
    return pools;
}

std::vector<sim::Trajectory> record_round(const nn::ParamSet& params,
                                          const policy::TaskSuite& suite,
                                          const ExperimentConfig& cfg, int round) {
    if (round < 1) throw std::invalid_argument("record_round: round must be >= 1");
    std::vector<sim::Trajectory> out = record_model(
        policy::constant_factory(policy::as_policy(params)), sim::Source::kBase, suite, cfg,
        round, cfg.e_aug);
    if (cfg.m_aug) {
        std::vector<sim::Trajectory> ema = record_model(
            policy::constant_factory(policy::as_ema_policy(params)), sim::Source::kEma,
            suite, cfg, round, cfg.e_aug);
        for (auto& t : ema) out.push_back(std::move(t));
    }
    return out;
}

bool check_convergence(const std::vector<double>& mean_sr_history, int patience,
                       double min_delta) {
    if (mean_sr_history.empty())
        throw std::invalid_argument("check_convergence: empty history");
    double best = mean_sr_history[0];
    int stale = 0;
    for (std::size_t i = 1; i < mean_sr_history.size(); ++i) {
        const double sr = mean_sr_history[i];
        if (sr > best + min_delta) {
            stale = 0;
        } else {
            ++stale;
        }
        best = std::max(best, sr);
        if (stale >= patience) return true;
    }
    return false;
}

std::optional<double> growth_rate(double baseline, double final_value) {
    if (baseline == 0.0) return std::nullopt;
    return 100.0 * (final_value - baseline) / baseline;
}

namespace {

struct SelectionOutcome {
    std::vector<sim::Trajectory> selected;
    std::vector<io::ScoredRow> rows; // full scored pool with selection marks
};

// Scores the recorded pool and keeps k per task under the scheme; without a
// selector every recorded success is kept.
SelectionOutcome curate(const std::vector<sim::Trajectory>& recorded,
                        const nn::ParamSet& selector_params,
                        const selector::SelectorSpec& spec, const ExperimentConfig& cfg,
                        int round) {
    SelectionOutcome outcome;
    if (!cfg.use_selector) {
        outcome.selected = recorded;
        for (const auto& t : recorded)
            outcome.rows.push_back({t.demo_id(), t.task_id, sim::source_name(t.source),
                                    t.round, 1.0, true, "none"});
        return outcome;
    }

    // group per task, preserving recording order
    std::map<int, std::vector<const sim::Trajectory*>> per_task;
    for (const auto& t : recorded) per_task[t.task_id].push_back(&t);

    for (auto& [task_id, demos] : per_task) {
        std::vector<selector::ScoredDemo> scored(demos.size());
        par::for_each(static_cast<std::int64_t>(demos.size()), [&](std::int64_t i) {
            scored[static_cast<std::size_t>(i)] = selector::score_confidence(
                selector_params, spec, *demos[static_cast<std::size_t>(i)]);
        });
        rng::SplitMix stream(rng::derive_seed(cfg.master_seed,
                                              static_cast<std::uint64_t>(round),
                                              rng::StreamTag::kSelect,
                                              static_cast<std::uint64_t>(task_id), 0));
        const std::vector<selector::ScoredDemo> picked =
            selector::select(scored, cfg.selected_per_task, cfg.scheme, stream);
        std::vector<const sim::Trajectory*> picked_ptrs;
        for (const auto& s : picked) picked_ptrs.push_back(s.demo);
        for (const auto& s : scored) {
            const bool chosen = std::find(picked_ptrs.begin(), picked_ptrs.end(), s.demo) !=
                                picked_ptrs.end();
            outcome.rows.push_back({s.demo->demo_id(), s.demo->task_id,
                                    sim::source_name(s.demo->source), s.demo->round,
                                    s.confidence, chosen, selector::scheme_name(cfg.scheme)});
            if (chosen) outcome.selected.push_back(*s.demo);
        }
    }
    return outcome;
}

std::vector<sim::Trajectory> training_set(const std::vector<sim::Trajectory>& expert,
                                          const std::vector<sim::Trajectory>& pool) {
    std::vector<sim::Trajectory> all = expert;
    all.insert(all.end(), pool.begin(), pool.end());
    return all;
}

} // namespace

RunResult run_seil(const ExperimentConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    const bool persist = !out_dir.empty();
    if (persist) std::filesystem::create_directories(out_dir);

    const policy::TaskSuite suite = policy::make_suite(cfg.master_seed);
    const std::vector<sim::Trajectory> expert = generate_expert_demos(suite, cfg);
    if (persist) io::write_demos(out_dir + "/expert_demos.jsonl", expert);

    RunResult result;
    nn::ParamSet& params = result.policy_params;
    params = policy::init_policy(
        rng::derive_seed(cfg.master_seed, 0, rng::StreamTag::kInit, 0, 0));
    train_bc(params, expert,
             bc_options(cfg, cfg.round0_steps,
                        rng::derive_seed(cfg.master_seed, 0, rng::StreamTag::kShuffle, 0, 0)));

    const selector::SelectorSpec spec = selector_spec_for(cfg);
    if (cfg.use_selector) {
        result.selector_params = selector::init_selector(
            spec, rng::derive_seed(cfg.master_seed, 0, rng::StreamTag::kInit, 1, 0));
        selector::TrainOptions opts;
        opts.epochs = cfg.selector_epochs;
        opts.batch_size = cfg.selector_batch;
        opts.adam.lr = cfg.selector_lr;
        opts.shuffle_seed =
            rng::derive_seed(cfg.master_seed, 0, rng::StreamTag::kShuffle, 1, 0);
        selector::train_selector(result.selector_params, spec, expert, opts);
        if (persist) io::write_checkpoint(out_dir + "/selector.ckpt", result.selector_params);
    }

    EvolutionReport& report = result.report;
    std::vector<sim::Trajectory> pool; // selected recorded demonstrations
    std::vector<double> history;

    auto evaluate_round = [&](int round) {
        RoundEntry entry;
        entry.round = round;
        entry.base = policy::evaluate(policy::constant_factory(policy::as_policy(params)),
                                      suite, cfg.eval_rollouts, "base", round);
        entry.ema = policy::evaluate(policy::constant_factory(policy::as_ema_policy(params)),
                                     suite, cfg.eval_rollouts, "ema", round);
        entry.pool_size = static_cast<std::int64_t>(expert.size() + pool.size());
        return entry;
    };

    auto flush = [&]() {
        if (!persist) return;
        io::write_report(out_dir + "/report.csv", report);
        io::write_demos(out_dir + "/pool.jsonl", pool);
        io::write_checkpoint(out_dir + "/policy_final.ckpt", params);
    };

    try {
        RoundEntry entry0 = evaluate_round(0);
        history.push_back(entry0.base.mean_sr());
        report.rounds.push_back(entry0);

        for (int round = 1; round <= cfg.max_rounds; ++round) {
            std::vector<sim::Trajectory> recorded;
            if (cfg.pool_filter.empty()) {
                recorded = record_round(params, suite, cfg, round);
            } else {
                auto pools = record_pools(params, suite, cfg, round,
                                          cfg.pool_filter.count(PoolTag::kP5) > 0);
                for (PoolTag tag : cfg.pool_filter)
                    for (auto& t : pools[tag]) recorded.push_back(std::move(t));
            }

            if (cfg.use_selector && cfg.retrain_selector_each_round && round > 1) {
                selector::TrainOptions opts;
                opts.epochs = cfg.selector_epochs;
                opts.batch_size = cfg.selector_batch;
                opts.adam.lr = cfg.selector_lr;
                opts.shuffle_seed = rng::derive_seed(
                    cfg.master_seed, static_cast<std::uint64_t>(round),
                    rng::StreamTag::kShuffle, 1, 0);
                result.selector_params = selector::init_selector(
                    spec, rng::derive_seed(cfg.master_seed,
                                           static_cast<std::uint64_t>(round),
                                           rng::StreamTag::kInit, 1, 0));
                selector::train_selector(result.selector_params, spec,
                                         training_set(expert, pool), opts);
            }

            SelectionOutcome outcome =
                curate(recorded, result.selector_params, spec, cfg, round);
            if (persist)
                io::write_scored_csv(out_dir + "/scored_round_" + std::to_string(round) +
                                         ".csv",
                                     outcome.rows);
            for (auto& t : outcome.selected) pool.push_back(std::move(t));

            if (cfg.retrain_from_scratch) {
                nn::ParamSet fresh = policy::init_policy(rng::derive_seed(
                    cfg.master_seed, static_cast<std::uint64_t>(round),
                    rng::StreamTag::kInit, 0, 0));
                fresh.ema = std::move(params.ema); // the shadow is never reset
                params = std::move(fresh);
            }
            const int steps = cfg.retrain_from_scratch ? cfg.round0_steps : cfg.refine_steps;
            train_bc(params, training_set(expert, pool),
                     bc_options(cfg, steps,
                                rng::derive_seed(cfg.master_seed,
                                                 static_cast<std::uint64_t>(round),
                                                 rng::StreamTag::kShuffle, 0, 0)));

            RoundEntry entry = evaluate_round(round);
            entry.selected_this_round = static_cast<int>(outcome.selected.size());
            history.push_back(entry.base.mean_sr());
            entry.converged = check_convergence(history, cfg.patience, cfg.min_delta);
            report.rounds.push_back(entry);
            if (entry.converged) {
                report.convergence_round = round;
                break;
            }
        }
    } catch (...) {
        flush();
        throw;
    }

    double best = history.empty() ? 0.0 : history[0];
    for (double sr : history) best = std::max(best, sr);
    report.growth_rate_pct = growth_rate(history.empty() ? 0.0 : history[0], best);
    flush();
    return result;
}

// ---------------------------------------------------------------------------
// Study harnesses

namespace {

std::string sr_cell(double sr) { return io::format_double(sr); }

double base_sr_at(const EvolutionReport& report, int round) {
    for (const RoundEntry& e : report.rounds)
        if (e.round == round) return e.base.mean_sr();
    // converged earlier; the policy no longer changes, so the last entry stands
    return report.rounds.empty() ? 0.0 : report.rounds.back().base.mean_sr();
}

std::string components_study(const ExperimentConfig& cfg) {
    struct Row {
        const char* label;
        bool evolve, m_aug, e_aug, selector;
    };
    const Row rows[] = {
        {"baseline", false, false, false, false},
        {"evolve", true, false, false, false},
        {"evolve+m_aug", true, true, false, false},
        {"evolve+e_aug", true, false, true, false},
        {"evolve+m_aug+e_aug", true, true, true, false},
        {"evolve+m_aug+e_aug+selector", true, true, true, true},
    };
    std::string csv = "label,evolve,m_aug,e_aug,selector,sr1,sr4\n";
    for (const Row& row : rows) {
        ExperimentConfig c = cfg;
        c.max_rounds = row.evolve ? 4 : 0;
        c.m_aug = row.m_aug;
        c.e_aug = row.e_aug;
        c.use_selector = row.selector;
        const RunResult res = run_seil(c);
        const double sr1 = base_sr_at(res.report, row.evolve ? 1 : 0);
        const double sr4 = base_sr_at(res.report, row.evolve ? 4 : 0);
        csv += std::string(row.label) + "," + (row.evolve ? "1" : "0") + "," +
               (row.m_aug ? "1" : "0") + "," + (row.e_aug ? "1" : "0") + "," +
               (row.selector ? "1" : "0") + "," + sr_cell(sr1) + "," + sr_cell(sr4) + "\n";
    }
    return csv;
}

std::string rollouts_study(const ExperimentConfig& cfg) {
    std::string csv = "rollouts,baseline,round1,round2,round3,round4,round5\n";
    for (int rollouts : {10, 20, 50, 100}) {
        ExperimentConfig c = cfg;
        c.rollouts_per_model = rollouts;
        c.m_aug = false; // base model only, all demos kept
        c.e_aug = true;
        c.use_selector = false;
        c.selected_per_task = std::min(c.selected_per_task, 2 * rollouts);
        c.max_rounds = 5;
        const RunResult res = run_seil(c);
        csv += std::to_string(rollouts) + "," + sr_cell(base_sr_at(res.report, 0));
        for (int r = 1; r <= 5; ++r) csv += "," + sr_cell(base_sr_at(res.report, r));
        csv += "\n";
    }
    return csv;
}

// One round, k = 20 per task from the 2R-attempt base+EMA pool at the
// default R = 25; smaller configs scale k down with the pool.
std::string selection_study(const ExperimentConfig& cfg) {
    std::string csv = "scheme,sr\n";
    for (selector::Scheme scheme :
         {selector::Scheme::kUniform, selector::Scheme::kDescending,
          selector::Scheme::kAscending, selector::Scheme::kMixed}) {
        ExperimentConfig c = cfg;
        c.scheme = scheme;
        c.selected_per_task = std::min(20, 2 * c.rollouts_per_model);
        c.m_aug = true;
        c.use_selector = true;
        c.max_rounds = 1;
        const RunResult res = run_seil(c);
        csv += std::string(selector::scheme_name(scheme)) + "," +
               sr_cell(base_sr_at(res.report, 1)) + "\n";
    }
    return csv;
}

std::string pools_study(const ExperimentConfig& cfg) {
    const std::vector<std::set<PoolTag>> combos = {
        {PoolTag::kP1, PoolTag::kP2},
        {PoolTag::kP3, PoolTag::kP4},
        {PoolTag::kP1, PoolTag::kP2, PoolTag::kP3, PoolTag::kP4},
        {PoolTag::kP1, PoolTag::kP2, PoolTag::kP4},
        {PoolTag::kP1, PoolTag::kP3, PoolTag::kP4},
        {PoolTag::kP1, PoolTag::kP2, PoolTag::kP5},
    };
    std::string csv = "combo,selected,base_sr,ema_sr\n";
    for (const auto& combo : combos) {
        ExperimentConfig c = cfg;
        c.pool_filter = combo;
        c.use_selector = false;
        c.max_rounds = 1;
        const RunResult res = run_seil(c);
        const RoundEntry& entry = res.report.rounds.back();
        std::string name;
        for (PoolTag tag : combo) {
            if (!name.empty()) name += '+';
            name += pool_tag_name(tag);
        }
        csv += name + "," + std::to_string(entry.selected_this_round) + "," +
               sr_cell(entry.base.mean_sr()) + "," + sr_cell(entry.ema.mean_sr()) + "\n";
    }
    return csv;
}

std::string selector_inputs_study(const ExperimentConfig& cfg) {
    std::string csv = "shots,input,accuracy\n";
    for (int shots : {1, 2, 4, 8}) {
        ExperimentConfig c = cfg;
        c.shots = shots;
        const policy::TaskSuite suite = policy::make_suite(c.master_seed);
        const std::vector<sim::Trajectory> expert = generate_expert_demos(suite, c);
        const std::vector<sim::Trajectory> held_out =
            generate_validation_demos(suite, c, 20);
        for (bool sequence_only : {true, false}) {
            selector::SelectorSpec spec;
            spec.sequence_only = sequence_only;
            nn::ParamSet params = selector::init_selector(
                spec, rng::derive_seed(c.master_seed, 0, rng::StreamTag::kInit, 1, 0));
            selector::TrainOptions opts;
            opts.epochs = c.selector_epochs;
            opts.batch_size = c.selector_batch;
            opts.adam.lr = c.selector_lr;
            opts.shuffle_seed =
                rng::derive_seed(c.master_seed, 0, rng::StreamTag::kShuffle, 1, 0);
            selector::train_selector(params, spec, expert, opts);
            const double acc = selector::classification_accuracy(params, spec, held_out);
            csv += std::to_string(shots) + "," +
                   (sequence_only ? "sequence" : "img+sequence") + "," + sr_cell(acc) + "\n";
        }
    }
    return csv;
}

} // namespace

std::vector<std::string> ablation_study_names() {
    return {"components", "rollouts", "selection", "pools", "selector_inputs"};
}

std::string run_ablation(const std::string& study, const ExperimentConfig& cfg,
                         const std::string& out_dir) {
    std::string csv;
    if (study == "components")
        csv = components_study(cfg);
    else if (study == "rollouts")
        csv = rollouts_study(cfg);
    else if (study == "selection")
        csv = selection_study(cfg);
    else if (study == "pools")
        csv = pools_study(cfg);
    else if (study == "selector_inputs")
        csv = selector_inputs_study(cfg);
    else {
        std::string valid;
        for (const std::string& name : ablation_study_names()) {
            if (!valid.empty()) valid += ", ";
            valid += name;
        }
        throw std::invalid_argument("unknown study: " + study + " (valid: " + valid + ")");
    }
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        io::write_text_file(out_dir + "/" + study + ".csv", csv);
    }
    return csv;
}

} // namespace seil::evo
