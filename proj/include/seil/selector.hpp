#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seil/nn.hpp"
#include "seil/prng.hpp"
#include "seil/sim.hpp"

// Lightweight trajectory selector: a task classifier over (first frame,
// action sequence). The frame embedding is computed once per trajectory and
// concatenated with the per-step action embedding; a two-layer LSTM reads
// the fused sequence and a linear head emits task logits. Softmax confidence
// on a demo's generating task ranks recorded demonstrations for selection.

namespace seil::selector {

struct SelectorSpec {
    int frame_dim = sim::kFrameLen; // flattened 16x16x3
    int image_emb = 128;
    int action_emb = 64;
    int hidden = 256;
    int lstm_layers = 2;
    int num_classes = sim::kNumTasks;
    bool sequence_only = false; // zero the image pathway (input-ablation mode)

    int fused_dim() const { return image_emb + action_emb; }
    nn::MlpSpec image_spec() const { return {"phi_i", {frame_dim, image_emb}, nn::Act::kRelu}; }
    nn::MlpSpec action_spec() const {
        return {"phi_a", {sim::kActionDim, action_emb}, nn::Act::kRelu};
    }
    nn::LstmSpec lstm_spec() const { return {"lstm", fused_dim(), hidden, lstm_layers}; }
    nn::MlpSpec head_spec() const { return {"head", {hidden, num_classes}, nn::Act::kNone}; }
};

nn::ParamSet init_selector(const SelectorSpec& spec, std::uint64_t seed);

// Logits for one trajectory (non-empty action sequence required).
std::vector<float> selector_logits(const nn::ParamSet& params, const SelectorSpec& spec,
                                   const float* first_frame,
                                   const std::vector<sim::Action>& actions);

std::vector<float> selector_logits(const nn::ParamSet& params, const SelectorSpec& spec,
                                   const sim::Trajectory& demo);

struct TrainOptions {
    int epochs = 80;
    int batch_size = 16;
    nn::AdamConfig adam; // lr 1e-3 defaults
    std::uint64_t shuffle_seed = 0;
};

struct TrainStats {
    double final_loss = 0.0;
    double train_accuracy = 0.0;
};

// Cross-entropy task classification over the expert demos; every task needs
// at least one demo. Returns params ready to be frozen.
TrainStats train_selector(nn::ParamSet& params, const SelectorSpec& spec,
                          const std::vector<sim::Trajectory>& expert_demos,
                          const TrainOptions& opts);

// Fraction of demos whose argmax logit matches their generating task.
double classification_accuracy(const nn::ParamSet& params, const SelectorSpec& spec,
                               const std::vector<sim::Trajectory>& demos);

struct ScoredDemo {
    const sim::Trajectory* demo = nullptr;
    double confidence = 0.0; // softmax probability of the generating task

    // stable ordering key for deterministic ties
    std::tuple<int, int, int, std::uint64_t> key() const {
        return {static_cast<int>(demo->source), demo->round, demo->task_id,
                demo->rollout_idx};
    }
};

ScoredDemo score_confidence(const nn::ParamSet& params, const SelectorSpec& spec,
                            const sim::Trajectory& demo);

enum class Scheme { kUniform, kDescending, kAscending, kMixed };

const char* scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

// Applied per task. Ascending keeps the k lowest-confidence demos,
// descending the k highest; mixed takes ceil(k/2) descending then fills from
// ascending without duplicates; uniform draws k without replacement from the
// stream. Fewer than k candidates returns all; ties break on the stable key.
std::vector<ScoredDemo> select(const std::vector<ScoredDemo>& scored, int k, Scheme scheme,
                               rng::SplitMix& stream);

} // namespace seil::selector
