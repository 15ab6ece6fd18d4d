#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "seil/prng.hpp"

// Deterministic 2-D tabletop pick-and-place world: 4 blocks, 2 drop zones,
// 8 tasks (block x zone), a scripted waypoint expert, initial-state
// augmentation, 16x16 rasterization, and bit-exact trajectory replay.

namespace seil::sim {

inline constexpr int kNumBlocks = 4;
inline constexpr int kNumZones = 2;
inline constexpr int kNumTasks = kNumBlocks * kNumZones;
inline constexpr int kObsDim = 4 + 2 * kNumBlocks + kNumTasks; // 20
inline constexpr int kActionDim = 3;
inline constexpr int kHorizon = 80;
inline constexpr double kMaxStep = 0.05;       // per-axis EE displacement at |d|=1
inline constexpr double kGraspRadius = 0.03;
inline constexpr double kSuccessEps = 0.08;    // closed ball: dist <= eps succeeds
inline constexpr int kFrameSize = 16;
inline constexpr int kFrameLen = kFrameSize * kFrameSize * 3;

struct Vec2 {
    float x = 0.0f;
    float y = 0.0f;
};

inline constexpr std::array<Vec2, kNumZones> kZoneCenters = {{{0.2f, 0.8f}, {0.8f, 0.8f}}};
inline constexpr std::array<Vec2, kNumBlocks> kCanonicalBlocks = {
    {{0.3f, 0.3f}, {0.5f, 0.3f}, {0.7f, 0.3f}, {0.5f, 0.5f}}};
inline constexpr Vec2 kCanonicalEE = {0.5f, 0.1f};

struct Task {
    int task_id = 0;
    int target_block = 0;
    int target_zone = 0;
    std::string name;
};

Task make_task(int task_id); // block = id % 4, zone = id / 4

struct SimState {
    Vec2 ee_pos;
    bool grip_closed = false;
    std::optional<int> held_block;
    std::array<Vec2, kNumBlocks> block_pos;
    int step_count = 0;
};

SimState canonical_state();

using Observation = std::array<float, kObsDim>;
using Action = std::array<float, kActionDim>; // (dx, dy, g), each in [-1, 1]

Action clamp_action(const Action& a);

// [ee_x, ee_y, grip, held, block positions x4, task one-hot x8]
Observation observe(const SimState& state, const Task& task);

enum class Source : int { kExpert = 0, kBase = 1, kEma = 2 };
const char* source_name(Source s);
Source source_from_name(const std::string& name);
rng::StreamTag source_tag(Source s);

struct Trajectory {
    int task_id = 0;
    std::uint64_t env_seed = 0;
    std::uint64_t rollout_idx = 0;
    SimState init_state;
    std::vector<std::pair<Observation, Action>> steps;
    std::array<float, kFrameLen> first_frame{};
    bool success = false;
    Source source = Source::kExpert;
    int round = 0;
    bool env_augmented = false;

    std::string demo_id() const;
};

struct EnvAugConfig {
    bool enabled = false;
    double delta = 0.05; // per-axis perturbation half-width
};

// Mirrors the initial-position transform: the horizontal coordinates move by
// at most delta each, the vertical coordinate passes through unchanged.
std::array<double, 3> augment_position(const std::array<double, 3>& pos, double delta,
                                       rng::SplitMix& stream);

// Canonical initial state, with block positions perturbed when aug.enabled.
// Offsets come from the splitmix64 stream seeded with env_seed (x then y per
// block, block order), computed in float64 and clipped to [0.05, 0.95]
// before the float32 cast.
SimState reset_with_aug(const Task& task, std::uint64_t env_seed, const EnvAugConfig& aug);

// Pure kinematic step: clamp the action, move the EE (clipped to the unit
// workspace), track a held block, then apply the grip command (g > 0.5
// closes and attaches the nearest free block within the grasp radius,
// g < -0.5 opens and releases in place).
SimState step(const SimState& state, const Action& action);

// Target block within kSuccessEps of the target zone center and not held.
bool is_success(const SimState& state, const Task& task);

// Waypoint controller: approach the target block, close within reach, carry
// to the zone, release. Every emitted (dx, dy) carries additive noise drawn
// uniform in [-0.2, 0.2] from the stream before clamping.
Action scripted_expert_action(const SimState& state, const Task& task,
                              rng::SplitMix& stream);

// Zones tinted 0.3 in their channel over 2x2 cells, blocks 1.0 in their
// channel pattern, EE 1.0 in all channels; cell = floor(16 * coord),
// clamped. Layout is row-major [y][x][channel].
std::array<float, kFrameLen> render_frame(const SimState& state);

// Policy signature used by rollouts. Learned policies read the observation;
// the scripted expert reads the state.
using PolicyFn = std::function<Action(const SimState& state, const Observation& obs)>;

// Wraps the scripted expert for rollout use; the noise stream is seeded from
// sm64(env_seed) so it is disjoint from the reset stream.
PolicyFn expert_policy(std::uint64_t env_seed);

Trajectory rollout(const PolicyFn& policy, const Task& task, std::uint64_t env_seed,
                   const EnvAugConfig& aug, Source source, int round,
                   std::uint64_t rollout_idx);

// Re-simulates the stored actions from init_state; true iff every
// observation and the success flag reproduce bit-exactly.
bool replay_check(const Trajectory& traj);

} // namespace seil::sim
