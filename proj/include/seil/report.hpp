#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "seil/sim.hpp"

namespace seil {

// Per-model success-rate summary for one evaluation pass.
struct SRReport {
    std::string model; // "base" or "ema"
    int round = 0;
    std::array<int, sim::kNumTasks> successes{};
    int rollouts_per_task = 0;

    double task_sr(int task_id) const {
        return rollouts_per_task == 0
                   ? 0.0
                   : static_cast<double>(successes[static_cast<std::size_t>(task_id)]) /
                         rollouts_per_task;
    }
    double mean_sr() const {
        double acc = 0.0;
        for (int t = 0; t < sim::kNumTasks; ++t) acc += task_sr(t);
        return acc / sim::kNumTasks;
    }
};

struct RoundEntry {
    int round = 0;
    SRReport base;
    SRReport ema;
    std::int64_t pool_size = 0;  // training pool size: expert demos + accumulated RD
    int selected_this_round = 0;
    bool converged = false;
};

struct EvolutionReport {
    std::vector<RoundEntry> rounds;
    std::optional<double> growth_rate_pct; // vs. round-0 base SR; empty when baseline is 0
    int convergence_round = -1;            // -1 when max_rounds hit first
};

} // namespace seil
