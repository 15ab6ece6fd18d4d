#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "seil/nn.hpp"
#include "seil/report.hpp"
#include "seil/sim.hpp"

// Behavior-cloning policy: a dense net regressing actions on observations,
// trained with Adam while an EMA shadow tracks every update, plus
// success-rate evaluation on the fixed benchmark seeds.

namespace seil::policy {

// 20 -> 128 -> 128 -> 3, ReLU hidden, linear output (clamped at use).
nn::MlpSpec policy_spec();

nn::ParamSet init_policy(std::uint64_t seed);

sim::Action predict(const nn::ParamSet& params, const sim::Observation& obs);

// Frozen-parameter rollout adapter; `params` must outlive the closure.
sim::PolicyFn as_policy(const nn::ParamSet& params);

// EMA shadow wrapped for rollout use.
sim::PolicyFn as_ema_policy(const nn::ParamSet& params);

struct TrainOptions {
    int steps = 3000;
    float tau = 0.999f;
    int batch_size = 64;
    nn::AdamConfig adam;                             // lr 1e-3 defaults
    std::uint64_t shuffle_seed = 0;
    std::function<void(const nn::ParamSet&)> on_step; // observer, may be empty
};

// Minimizes MSE over all (obs, action) pairs pooled from the demos, running
// exactly opts.steps Adam updates with an ema_update after each. Batches are
// reshuffled every epoch from the given stream; the last partial batch is
// kept. The shadow is created from the incoming params on first use and
// never reset afterwards.
void train_bc(nn::ParamSet& params, const std::vector<sim::Trajectory>& demos,
              const TrainOptions& opts);

// Task definitions plus the fixed benchmark evaluation distribution. The
// evaluation stream tag and round are reserved values, so benchmark seeds
// can never collide with training rollouts.
struct TaskSuite {
    std::vector<sim::Task> tasks;
    std::uint64_t master_seed = 0;
    sim::EnvAugConfig eval_aug{true, 0.05};

    std::uint64_t eval_seed(int task_id, int rollout_idx) const {
        return rng::derive_seed(master_seed, rng::kEvalRound, rng::StreamTag::kEval,
                                static_cast<std::uint64_t>(task_id),
                                static_cast<std::uint64_t>(rollout_idx));
    }
};

TaskSuite make_suite(std::uint64_t master_seed);

// Builds the policy for one rollout from its env seed. Learned policies
// ignore the seed; the scripted expert derives its noise stream from it so
// rollouts stay independent under concurrency.
using PolicyFactory = std::function<sim::PolicyFn(std::uint64_t env_seed)>;

PolicyFactory constant_factory(sim::PolicyFn pol);
PolicyFactory expert_factory();

// Runs `rollouts_per_task` benchmark rollouts per task with the frozen
// policy; rollouts may execute concurrently, results assemble in
// (task, rollout) order.
SRReport evaluate(const PolicyFactory& factory, const TaskSuite& suite,
                  int rollouts_per_task, const std::string& model_tag, int round);

} // namespace seil::policy
