#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "seil/policy.hpp"
#include "seil/sim.hpp"

using namespace seil;

namespace {

float from_bits(std::uint32_t bits) {
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
}

double dist(sim::Vec2 a, sim::Vec2 b) {
    return std::hypot(static_cast<double>(a.x) - b.x, static_cast<double>(a.y) - b.y);
}

} // namespace

TEST_CASE("reset without augmentation is the canonical layout") {
    const sim::Task task = sim::make_task(0);
    for (std::uint64_t seed : {0ULL, 42ULL, 12345ULL}) {
        const sim::SimState s = sim::reset_with_aug(task, seed, {false, 0.05});
        CHECK(s.ee_pos.x == 0.5f);
        CHECK(s.ee_pos.y == 0.1f);
        CHECK(s.block_pos[0].x == 0.3f);
        CHECK(s.block_pos[1].x == 0.5f);
        CHECK(s.block_pos[2].x == 0.7f);
        CHECK(s.block_pos[3].y == 0.5f);
        CHECK_FALSE(s.grip_closed);
        CHECK_FALSE(s.held_block.has_value());
        CHECK(s.step_count == 0);
    }
}

TEST_CASE("augmented reset stays within the per-axis half-width") {
    const sim::Task task = sim::make_task(3);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const sim::SimState s = sim::reset_with_aug(task, seed, {true, 0.05});
        CHECK(s.block_pos[0].x >= 0.25f);
        CHECK(s.block_pos[0].x <= 0.35f);
        CHECK(s.block_pos[0].y >= 0.25f);
        CHECK(s.block_pos[0].y <= 0.35f);
    }
}

// Frozen from the reference PRNG stream: seed 42, delta 0.05, float32 casts.
TEST_CASE("augmented reset matches the frozen golden positions") {
    const sim::SimState s = sim::reset_with_aug(sim::make_task(0), 42, {true, 0.05});
    CHECK(s.block_pos[0].x == from_bits(0x3ea5f7d7));
    CHECK(s.block_pos[0].y == from_bits(0x3e882ffb));
    CHECK(s.block_pos[1].x == from_bits(0x3ef4aa15));
    CHECK(s.block_pos[1].y == from_bits(0x3e919f61));
    CHECK(s.block_pos[2].x == from_bits(0x3f275fa2));
    CHECK(s.block_pos[2].y == from_bits(0x3eac740a));
    CHECK(s.block_pos[3].x == from_bits(0x3ef19515));
    CHECK(s.block_pos[3].y == from_bits(0x3f07b238));
}

TEST_CASE("the vertical coordinate passes through augmentation untouched") {
    rng::SplitMix stream(9);
    for (double z : {0.0, 0.125, -3.5}) {
        const std::array<double, 3> out = sim::augment_position({0.5, 0.5, z}, 0.05, stream);
        CHECK(out[2] == z);
        CHECK(std::abs(out[0] - 0.5) <= 0.05);
        CHECK(std::abs(out[1] - 0.5) <= 0.05);
    }
}

TEST_CASE("step clamps, moves, and clips") {
    sim::SimState s = sim::canonical_state();
    s.ee_pos = {0.5f, 0.5f};

    SUBCASE("max step") {
        const sim::SimState next = sim::step(s, {1.0f, 0.0f, 0.0f});
        CHECK(next.ee_pos.x == doctest::Approx(0.55).epsilon(1e-6));
        CHECK(next.ee_pos.y == 0.5f);
        CHECK(next.step_count == 1);
    }
    SUBCASE("component clamping before simulation") {
        const sim::SimState a = sim::step(s, {5.0f, 0.0f, 0.0f});
        const sim::SimState b = sim::step(s, {1.0f, 0.0f, 0.0f});
        CHECK(a.ee_pos.x == b.ee_pos.x);
    }
    SUBCASE("workspace clipping") {
        s.ee_pos = {0.99f, 0.5f};
        const sim::SimState next = sim::step(s, {1.0f, 0.0f, 0.0f});
        CHECK(next.ee_pos.x == 1.0f);
    }
}

TEST_CASE("grasp and release") {
    sim::SimState s = sim::canonical_state();
    s.ee_pos = {0.3f, 0.32f}; // 0.02 above block 0

    const sim::SimState closed = sim::step(s, {0.0f, 0.0f, 1.0f});
    CHECK(closed.grip_closed);
    REQUIRE(closed.held_block.has_value());
    CHECK(*closed.held_block == 0);
    CHECK(closed.block_pos[0].x == closed.ee_pos.x);
    CHECK(closed.block_pos[0].y == closed.ee_pos.y);

    // held block tracks the EE
    const sim::SimState moved = sim::step(closed, {1.0f, 0.0f, 0.0f});
    CHECK(moved.block_pos[0].x == moved.ee_pos.x);
    REQUIRE(moved.held_block.has_value());

    const sim::SimState released = sim::step(moved, {0.0f, 0.0f, -1.0f});
    CHECK_FALSE(released.grip_closed);
    CHECK_FALSE(released.held_block.has_value());
    CHECK(released.block_pos[0].x == released.ee_pos.x); // released in place

    // closing far away grabs nothing
    sim::SimState far = sim::canonical_state();
    const sim::SimState closed_air = sim::step(far, {0.0f, 0.0f, 1.0f});
    CHECK(closed_air.grip_closed);
    CHECK_FALSE(closed_air.held_block.has_value());
}

TEST_CASE("success predicate is a closed ball and requires release") {
    const sim::Task task = sim::make_task(0); // block 0 to zone A (0.2, 0.8)
    sim::SimState s = sim::canonical_state();

    s.block_pos[0] = {0.2f, 0.8f};
    CHECK(sim::is_success(s, task));

    // boundary: 0.08 along one axis (float arithmetic lands just inside)
    s.block_pos[0] = {0.2f + 0.08f, 0.8f};
    CHECK(sim::is_success(s, task));

    s.block_pos[0] = {0.2f + 0.0801f, 0.8f};
    CHECK_FALSE(sim::is_success(s, task));

    // held target does not count
    s.block_pos[0] = {0.2f, 0.8f};
    s.ee_pos = s.block_pos[0];
    s.grip_closed = true;
    s.held_block = 0;
    CHECK_FALSE(sim::is_success(s, task));

    // holding a different block is fine
    s.held_block = 2;
    s.block_pos[2] = s.ee_pos;
    CHECK(sim::is_success(s, task));
}

TEST_CASE("observation layout and invariants") {
    const sim::Task task = sim::make_task(5); // block 1, zone B
    sim::SimState s = sim::canonical_state();
    const sim::Observation o = sim::observe(s, task);
    CHECK(o[0] == 0.5f);
    CHECK(o[1] == 0.1f);
    CHECK(o[2] == 0.0f);
    CHECK(o[3] == 0.0f);
    CHECK(o[4] == 0.3f); // block 0 x
    CHECK(o[11] == 0.5f); // block 3 y
    float onehot = 0.0f;
    for (int i = 0; i < sim::kNumTasks; ++i) onehot += o[12 + i];
    CHECK(onehot == 1.0f);
    CHECK(o[12 + 5] == 1.0f);
    for (float v : o) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("expert heads toward the block, closes in reach, and always wins") {
    const sim::Task task = sim::make_task(2); // block 2 at (0.7, 0.3)
    rng::SplitMix stream(4);

    sim::SimState s = sim::canonical_state();
    s.ee_pos = {0.2f, 0.3f}; // far left of the target block
    const sim::Action far_action = sim::scripted_expert_action(s, task, stream);
    CHECK(far_action[0] > 0.0f);

    s.ee_pos = {0.7f, 0.3f};
    const sim::Action near_action = sim::scripted_expert_action(s, task, stream);
    CHECK(near_action[2] == 1.0f);

    // full episodes: every task, canonical and perturbed starts
    for (int task_id = 0; task_id < sim::kNumTasks; ++task_id) {
        for (std::uint64_t seed : {0ULL, 7ULL, 99ULL}) {
            for (bool aug : {false, true}) {
                const sim::Trajectory t = sim::rollout(
                    sim::expert_policy(seed), sim::make_task(task_id), seed, {aug, 0.05},
                    sim::Source::kExpert, 0, 0);
                CHECK(t.success);
                CHECK(t.steps.size() <= sim::kHorizon);
            }
        }
    }
}

TEST_CASE("expert completes from every benchmark evaluation start") {
    const policy::TaskSuite suite = policy::make_suite(2024);
    const SRReport r =
        policy::evaluate(policy::expert_factory(), suite, 20, "expert", 0);
    CHECK(r.mean_sr() == 1.0);
}

TEST_CASE("render frame puts cells where the rasterization rule says") {
    sim::SimState s = sim::canonical_state();
    s.block_pos = {{{0.98f, 0.98f}, {0.98f, 0.02f}, {0.02f, 0.98f}, {0.02f, 0.02f}}};
    const auto frame = sim::render_frame(s);
    auto px = [&frame](int x, int y, int c) {
        return frame[static_cast<std::size_t>((y * 16 + x) * 3 + c)];
    };
    // EE at (0.5, 0.1) -> white cell (8, 1)
    for (int c = 0; c < 3; ++c) CHECK(px(8, 1, c) == 1.0f);
    // zones tinted 0.3 over 2x2 in their channel
    CHECK(px(3, 12, 0) == 0.3f);
    CHECK(px(4, 13, 0) == 0.3f);
    CHECK(px(12, 12, 1) == 0.3f);
    CHECK(px(13, 13, 1) == 0.3f);
    // exactly one white cell
    int white = 0;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            if (px(x, y, 0) == 1.0f && px(x, y, 1) == 1.0f && px(x, y, 2) == 1.0f) ++white;
    CHECK(white == 1);

    sim::SimState s2 = sim::canonical_state();
    const auto frame2 = sim::render_frame(s2);
    auto px2 = [&frame2](int x, int y, int c) {
        return frame2[static_cast<std::size_t>((y * 16 + x) * 3 + c)];
    };
    CHECK(px2(4, 4, 0) == 1.0f); // block 0 at (0.3, 0.3) -> cell (4,4), red channel

    for (int i = 0; i < 100; ++i) {
        const sim::SimState rs = sim::reset_with_aug(sim::make_task(0),
                                                     static_cast<std::uint64_t>(i),
                                                     {true, 0.05});
        for (float v : sim::render_frame(rs)) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
}

TEST_CASE("rollouts are pure functions of their inputs") {
    const sim::Task task = sim::make_task(6);
    const sim::Trajectory a = sim::rollout(sim::expert_policy(11), task, 11, {true, 0.05},
                                           sim::Source::kExpert, 0, 3);
    const sim::Trajectory b = sim::rollout(sim::expert_policy(11), task, 11, {true, 0.05},
                                           sim::Source::kExpert, 0, 3);
    CHECK(a.steps == b.steps);
    CHECK(a.first_frame == b.first_frame);
    CHECK(a.success == b.success);

    // constant zero policy moves nothing
    const sim::PolicyFn zero = [](const sim::SimState&, const sim::Observation&) {
        return sim::Action{0.0f, 0.0f, 0.0f};
    };
    const sim::Trajectory z =
        sim::rollout(zero, task, 5, {false, 0.05}, sim::Source::kBase, 1, 0);
    CHECK_FALSE(z.success);
    CHECK(z.steps.size() == sim::kHorizon);
}

TEST_CASE("replay_check accepts genuine recordings and rejects tampering") {
    for (int i = 0; i < 100; ++i) {
        const int task_id = i % sim::kNumTasks;
        const auto source = static_cast<sim::Source>(i % 3);
        const bool aug = (i / 3) % 2 == 0;
        const std::uint64_t seed = rng::derive_seed(
            77, 1, sim::source_tag(source), static_cast<std::uint64_t>(task_id),
            static_cast<std::uint64_t>(i));
        sim::Trajectory t = sim::rollout(sim::expert_policy(seed), sim::make_task(task_id),
                                         seed, {aug, 0.05}, source, 1,
                                         static_cast<std::uint64_t>(i));
        CHECK(sim::replay_check(t));
    }

    sim::Trajectory t = sim::rollout(sim::expert_policy(3), sim::make_task(1), 3,
                                     {true, 0.05}, sim::Source::kExpert, 0, 0);
    REQUIRE(t.steps.size() > 4);
    t.steps[2].second[0] = -t.steps[2].second[0] + 0.3f;
    CHECK_FALSE(sim::replay_check(t));
}

TEST_CASE("held block equals the EE position at every step of a grasping episode") {
    const sim::Trajectory t = sim::rollout(sim::expert_policy(21), sim::make_task(4), 21,
                                           {true, 0.05}, sim::Source::kExpert, 0, 0);
    sim::SimState s = t.init_state;
    bool ever_held = false;
    for (const auto& [obs, action] : t.steps) {
        s = sim::step(s, action);
        if (s.held_block) {
            ever_held = true;
            CHECK(s.block_pos[*s.held_block].x == s.ee_pos.x);
            CHECK(s.block_pos[*s.held_block].y == s.ee_pos.y);
        }
    }
    CHECK(ever_held);
}
