#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seil/config.hpp"
#include "seil/policy.hpp"
#include "seil/report.hpp"
#include "seil/selector.hpp"
#include "seil/sim.hpp"

// The self-evolution orchestrator: train the few-shot policy, record
// rollouts with the base and EMA models under initial-state augmentation,
// curate them with the frozen selector, extend the pool, refine, evaluate,
// repeat until the success rate saturates. Also houses the study harnesses
// (component toggles, rollout budgets, selection schemes, pool
// compositions, selector inputs).

namespace seil::evo {

// N expert demos per task from the scripted controller, perturbed initial
// states, seeds from the expert stream. Every demo is success-verified.
std::vector<sim::Trajectory> generate_expert_demos(const policy::TaskSuite& suite,
                                                   const ExperimentConfig& cfg);

// Held-out expert demos for selector validation (task ids drawn from the
// validation stream, rollout indices disjoint from the training block).
std::vector<sim::Trajectory> generate_validation_demos(const policy::TaskSuite& suite,
                                                       const ExperimentConfig& cfg,
                                                       int count);

// One recording pass for a given model over all tasks: R rollouts per task,
// successes only, assembled in (task, rollout) order.
std::vector<sim::Trajectory> record_model(const policy::PolicyFactory& factory,
                                          sim::Source source,
                                          const policy::TaskSuite& suite,
                                          const ExperimentConfig& cfg, int round,
                                          bool env_aug);

// Base-model pass plus, when m_aug is on, an EMA pass; ordered by
// (model, task, rollout). Requires round >= 1.
std::vector<sim::Trajectory> record_round(const nn::ParamSet& params,
                                          const policy::TaskSuite& suite,
                                          const ExperimentConfig& cfg, int round);

// Pool-composition recording: base and EMA under shared fixed starts
// (cross-tabulated into P1..P4) plus an optional augmented EMA pass (P5).
std::map<PoolTag, std::vector<sim::Trajectory>> record_pools(const nn::ParamSet& params,
                                                             const policy::TaskSuite& suite,
                                                             const ExperimentConfig& cfg,
                                                             int round, bool with_p5);

// True once the best mean SR has not improved by more than min_delta for
// `patience` consecutive entries.
bool check_convergence(const std::vector<double>& mean_sr_history, int patience,
                       double min_delta);

// 100 * (final - baseline) / baseline; empty when the baseline is zero.
std::optional<double> growth_rate(double baseline, double final_value);

struct RunResult {
    EvolutionReport report;
    nn::ParamSet policy_params;   // with shadow and optimizer state
    nn::ParamSet selector_params; // empty when the selector is off
};

// Full train-record-select-train loop. When out_dir is non-empty, writes
// expert_demos.jsonl, pool.jsonl, scored_round_<r>.csv, report.csv and
// checkpoints there; a partial report is flushed if training aborts.
RunResult run_seil(const ExperimentConfig& cfg, const std::string& out_dir = "");

// Study harnesses; each writes one CSV (<study>.csv) under out_dir and
// returns the CSV text.
std::string run_ablation(const std::string& study, const ExperimentConfig& cfg,
                         const std::string& out_dir);

std::vector<std::string> ablation_study_names();

} // namespace seil::evo
