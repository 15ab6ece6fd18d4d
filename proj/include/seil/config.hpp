#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "seil/selector.hpp"

namespace seil::evo {

// Recorded-demonstration pool categories used by the rollout-composition
// study: base-only success (P1), both-success recorded by base (P2) or by
// EMA (P3), EMA-only success (P4), EMA under initial-state augmentation (P5).
enum class PoolTag { kP1, kP2, kP3, kP4, kP5 };

const char* pool_tag_name(PoolTag t);
PoolTag pool_tag_from_name(const std::string& name);

struct ExperimentConfig {
    std::uint64_t master_seed = 1;
    int shots = 8;                 // expert demos per task
    int rollouts_per_model = 25;   // R, per task per model per round
    int selected_per_task = 15;    // k
    float tau = 0.999f;
    double delta = 0.05;           // initial-state perturbation half-width
    int max_rounds = 5;
    int eval_rollouts = 50;        // E

    bool m_aug = true;             // EMA model records alongside the base model
    bool e_aug = true;             // perturbed initial states during recording
    bool use_selector = true;
    selector::Scheme scheme = selector::Scheme::kAscending;
    bool retrain_from_scratch = false;
    bool sequence_only_selector = false;
    bool retrain_selector_each_round = false;
    std::set<PoolTag> pool_filter; // empty = no filtering

    int round0_steps = 3000;
    int refine_steps = 1500;
    int batch_size = 64;
    double lr = 1e-3;

    int selector_epochs = 80;
    int selector_batch = 16;
    double selector_lr = 1e-3;

    int patience = 2;
    double min_delta = 0.005;

    void validate() const; // throws std::invalid_argument with the offending key
};

ExperimentConfig load_config(const std::string& path);

// Applies one `key=value` override; unknown keys or bad values throw.
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// All effective values, machine-readable; stable key order.
std::string config_echo_json(const ExperimentConfig& cfg);

} // namespace seil::evo
