#include "seil/sim.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <cstring>
#include <stdexcept>

namespace seil::sim {

namespace {

double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

double dist2(const Vec2& a, const Vec2& b) {
    const double dx = static_cast<double>(a.x) - b.x;
    const double dy = static_cast<double>(a.y) - b.y;
    return dx * dx + dy * dy;
}

} // namespace

Task make_task(int task_id) {
    if (task_id < 0 || task_id >= kNumTasks)
        throw std::out_of_range("make_task: task_id out of range");
    Task t;
    t.task_id = task_id;
    t.target_block = task_id % kNumBlocks;
    t.target_zone = task_id / kNumBlocks;
    t.name = "block" + std::to_string(t.target_block) + "_to_zone" +
             std::string(t.target_zone == 0 ? "A" : "B");
    return t;
}

SimState canonical_state() {
    SimState s;
    s.ee_pos = kCanonicalEE;
    s.block_pos = kCanonicalBlocks;
    return s;
}

Action clamp_action(const Action& a) {
    Action out;
    for (int i = 0; i < kActionDim; ++i)
        out[i] = static_cast<float>(clip(a[i], -1.0, 1.0));
    return out;
}

Observation observe(const SimState& state, const Task& task) {
    Observation o{};
    o[0] = state.ee_pos.x;
    o[1] = state.ee_pos.y;
    o[2] = state.grip_closed ? 1.0f : 0.0f;
    o[3] = state.held_block.has_value() ? 1.0f : 0.0f;
    for (int b = 0; b < kNumBlocks; ++b) {
        o[4 + 2 * b] = state.block_pos[b].x;
        o[4 + 2 * b + 1] = state.block_pos[b].y;
    }
    o[4 + 2 * kNumBlocks + task.task_id] = 1.0f;
    return o;
}

const char* source_name(Source s) {
    switch (s) {
    case Source::kExpert: return "expert";
    case Source::kBase: return "base";
    case Source::kEma: return "ema";
    }
    return "expert";
}

Source source_from_name(const std::string& name) {
    if (name == "expert") return Source::kExpert;
    if (name == "base") return Source::kBase;
    if (name == "ema") return Source::kEma;
    throw std::invalid_argument("unknown trajectory source: " + name);
}

rng::StreamTag source_tag(Source s) {
    switch (s) {
    case Source::kExpert: return rng::StreamTag::kExpert;
    case Source::kBase: return rng::StreamTag::kBase;
    case Source::kEma: return rng::StreamTag::kEma;
    }
    return rng::StreamTag::kExpert;
}

std::string Trajectory::demo_id() const {
    return std::string(source_name(source)) + "-r" + std::to_string(round) + "-t" +
           std::to_string(task_id) + "-i" + std::to_string(rollout_idx);
}

std::array<double, 3> augment_position(const std::array<double, 3>& pos, double delta,
                                       rng::SplitMix& stream) {
    std::array<double, 3> out;
    out[0] = clip(pos[0] + stream.next_sym(delta), 0.05, 0.95);
    out[1] = clip(pos[1] + stream.next_sym(delta), 0.05, 0.95);
    out[2] = pos[2]; // vertical coordinate passes through untouched
    return out;
}

SimState reset_with_aug(const Task& task, std::uint64_t env_seed, const EnvAugConfig& aug) {
    (void)task; // initial layout is shared by all tasks
    SimState s = canonical_state();
    if (!aug.enabled) return s;
    rng::SplitMix stream(env_seed);
    for (int b = 0; b < kNumBlocks; ++b) {
        const std::array<double, 3> canon = {static_cast<double>(s.block_pos[b].x),
                                             static_cast<double>(s.block_pos[b].y), 0.0};
        const std::array<double, 3> moved = augment_position(canon, aug.delta, stream);
        s.block_pos[b].x = static_cast<float>(moved[0]);
        s.block_pos[b].y = static_cast<float>(moved[1]);
    }
    return s;
}

SimState step(const SimState& state, const Action& action) {
    SimState s = state;
    const Action a = clamp_action(action);
    s.ee_pos.x = static_cast<float>(clip(s.ee_pos.x + kMaxStep * a[0], 0.0, 1.0));
    s.ee_pos.y = static_cast<float>(clip(s.ee_pos.y + kMaxStep * a[1], 0.0, 1.0));
    if (s.held_block) s.block_pos[*s.held_block] = s.ee_pos;

    if (a[2] > 0.5f) {
        s.grip_closed = true;
        if (!s.held_block) {
            int best = -1;
            double best_d2 = kGraspRadius * kGraspRadius;
            for (int b = 0; b < kNumBlocks; ++b) {
                const double d2 = dist2(s.ee_pos, s.block_pos[b]);
                if (d2 < best_d2 || (d2 == best_d2 && best < 0)) {
                    best = b;
                    best_d2 = d2;
                }
            }
            if (best >= 0) {
                s.held_block = best;
                s.block_pos[best] = s.ee_pos;
            }
        }
    } else if (a[2] < -0.5f) {
        s.grip_closed = false;
        s.held_block.reset();
    }
    s.step_count += 1;
    return s;
}

bool is_success(const SimState& state, const Task& task) {
    if (state.held_block && *state.held_block == task.target_block) return false;
    const Vec2& zone = kZoneCenters[task.target_zone];
    return dist2(state.block_pos[task.target_block], zone) <= kSuccessEps * kSuccessEps;
}

Action scripted_expert_action(const SimState& state, const Task& task,
                              rng::SplitMix& stream) {
    // Phase is derived from the state alone; the only memory is the noise stream.
    const double nx = stream.next_sym(0.2);
    const double ny = stream.next_sym(0.2);

    double dx = 0.0, dy = 0.0, g = 0.0;
    // Landing within kReach of a waypoint guarantees the next grip command
    // keeps the EE inside the grasp radius despite the noise displacement.
    constexpr double kReach = 0.015;

    if (state.held_block && *state.held_block != task.target_block) {
        g = -1.0; // wrong block, drop it
    } else if (!state.held_block) {
        const Vec2& blk = state.block_pos[task.target_block];
        if (dist2(state.ee_pos, blk) <= kReach * kReach) {
            g = 1.0;
        } else {
            dx = (static_cast<double>(blk.x) - state.ee_pos.x) / kMaxStep;
            dy = (static_cast<double>(blk.y) - state.ee_pos.y) / kMaxStep;
        }
    } else {
        const Vec2& zone = kZoneCenters[task.target_zone];
        if (dist2(state.ee_pos, zone) <= kReach * kReach) {
            g = -1.0;
        } else {
            dx = (static_cast<double>(zone.x) - state.ee_pos.x) / kMaxStep;
            dy = (static_cast<double>(zone.y) - state.ee_pos.y) / kMaxStep;
        }
    }
    return clamp_action({static_cast<float>(dx + nx), static_cast<float>(dy + ny),
                         static_cast<float>(g)});
}

std::array<float, kFrameLen> render_frame(const SimState& state) {
    std::array<float, kFrameLen> frame{};
    auto cell = [](float coord) {
        return std::clamp(static_cast<int>(kFrameSize * coord), 0, kFrameSize - 1);
    };
    auto px = [&frame](int x, int y, int c) -> float& {
        return frame[static_cast<std::size_t>((y * kFrameSize + x) * 3 + c)];
    };
    for (int z = 0; z < kNumZones; ++z) {
        const int cx = cell(kZoneCenters[z].x);
        const int cy = cell(kZoneCenters[z].y);
        for (int oy = 0; oy < 2; ++oy)
            for (int ox = 0; ox < 2; ++ox) {
                const int x = std::min(cx + ox, kFrameSize - 1);
                const int y = std::min(cy + oy, kFrameSize - 1);
                px(x, y, z) = 0.3f;
            }
    }
    // block channel patterns: R, G, B, R+G
    static constexpr std::array<std::array<bool, 3>, kNumBlocks> kPattern = {
        {{true, false, false}, {false, true, false}, {false, false, true},
         {true, true, false}}};
    for (int b = 0; b < kNumBlocks; ++b) {
        const int x = cell(state.block_pos[b].x);
        const int y = cell(state.block_pos[b].y);
        for (int c = 0; c < 3; ++c)
            if (kPattern[b][c]) px(x, y, c) = 1.0f;
    }
    const int ex = cell(state.ee_pos.x);
    const int ey = cell(state.ee_pos.y);
    for (int c = 0; c < 3; ++c) px(ex, ey, c) = 1.0f;
    return frame;
}

PolicyFn expert_policy(std::uint64_t env_seed) {
    auto stream = std::make_shared<rng::SplitMix>(rng::sm64(env_seed));
    return [stream](const SimState& state, const Observation& obs) {
        int task_id = 0;
        for (int i = 0; i < kNumTasks; ++i)
            if (obs[4 + 2 * kNumBlocks + i] == 1.0f) {
                task_id = i;
                break;
            }
        return scripted_expert_action(state, make_task(task_id), *stream);
    };
}

Trajectory rollout(const PolicyFn& policy, const Task& task, std::uint64_t env_seed,
                   const EnvAugConfig& aug, Source source, int round,
                   std::uint64_t rollout_idx) {
    Trajectory traj;
    traj.task_id = task.task_id;
    traj.env_seed = env_seed;
    traj.rollout_idx = rollout_idx;
    traj.source = source;
    traj.round = round;
    traj.env_augmented = aug.enabled;
    SimState state = reset_with_aug(task, env_seed, aug);
    traj.init_state = state;
    traj.first_frame = render_frame(state);
    while (state.step_count < kHorizon && !is_success(state, task)) {
        const Observation obs = observe(state, task);
        const Action a = clamp_action(policy(state, obs));
        traj.steps.emplace_back(obs, a);
        state = step(state, a);
    }
    traj.success = is_success(state, task);
    return traj;
}

bool replay_check(const Trajectory& traj) {
    const Task task = make_task(traj.task_id);
    SimState state = traj.init_state;
    for (const auto& [obs, action] : traj.steps) {
        if (state.step_count >= kHorizon || is_success(state, task)) return false;
        const Observation expected = observe(state, task);
        if (std::memcmp(expected.data(), obs.data(), sizeof(expected)) != 0) return false;
        state = step(state, action);
    }
    return is_success(state, task) == traj.success &&
           (traj.success || state.step_count == kHorizon);
}

} // namespace seil::sim
