#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "seil/policy.hpp"
#include "seil/storage.hpp"

using namespace seil;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("seil-test-" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<sim::Trajectory> sample_demos(int per_task) {
    std::vector<sim::Trajectory> demos;
    for (int task = 0; task < sim::kNumTasks; ++task)
        for (int i = 0; i < per_task; ++i) {
            const std::uint64_t seed = rng::derive_seed(
                3, 0, rng::StreamTag::kExpert, static_cast<std::uint64_t>(task),
                static_cast<std::uint64_t>(i));
            demos.push_back(sim::rollout(sim::expert_policy(seed), sim::make_task(task),
                                         seed, {true, 0.05}, sim::Source::kExpert, 0,
                                         static_cast<std::uint64_t>(i)));
        }
    return demos;
}

} // namespace

TEST_CASE("demo files round-trip bit-exactly") {
    TempDir dir;
    const auto demos = sample_demos(2);
    const std::string path = dir.file("demos.jsonl");
    io::write_demos(path, demos);
    const auto loaded = io::read_demos(path, true);
    REQUIRE(loaded.size() == demos.size());
    for (std::size_t i = 0; i < demos.size(); ++i) {
        CHECK(loaded[i].task_id == demos[i].task_id);
        CHECK(loaded[i].env_seed == demos[i].env_seed);
        CHECK(loaded[i].rollout_idx == demos[i].rollout_idx);
        CHECK(loaded[i].source == demos[i].source);
        CHECK(loaded[i].round == demos[i].round);
        CHECK(loaded[i].env_augmented == demos[i].env_augmented);
        CHECK(loaded[i].success == demos[i].success);
        CHECK(loaded[i].steps == demos[i].steps);
        CHECK(loaded[i].first_frame == demos[i].first_frame);
        CHECK(loaded[i].init_state.ee_pos.x == demos[i].init_state.ee_pos.x);
        CHECK(loaded[i].init_state.block_pos[2].y == demos[i].init_state.block_pos[2].y);
        CHECK(loaded[i].demo_id() == demos[i].demo_id());
    }
}

TEST_CASE("an 8-per-task expert file holds exactly N*L records") {
    TempDir dir;
    const auto demos = sample_demos(8);
    const std::string path = dir.file("demos.jsonl");
    io::write_demos(path, demos);
    CHECK(io::read_demos(path).size() == 8u * sim::kNumTasks);
}

TEST_CASE("malformed demo lines name the line number") {
    TempDir dir;
    const auto demos = sample_demos(1);
    const std::string path = dir.file("demos.jsonl");
    io::write_demos(path, demos);
    {
        std::ifstream in(path);
        std::string all((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
        all.resize(all.size() / 2); // chop the file mid-record
        std::ofstream out(path, std::ios::trunc);
        out << all;
    }
    bool threw = false;
    try {
        io::read_demos(path);
    } catch (const std::exception& e) {
        threw = true;
        CHECK(std::string(e.what()).find(":") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("tampered demos fail replay verification by demo id") {
    TempDir dir;
    auto demos = sample_demos(1);
    demos[0].steps[1].second[0] += 0.5f;
    const std::string path = dir.file("demos.jsonl");
    io::write_demos(path, demos);
    CHECK_NOTHROW(io::read_demos(path, false)); // reading alone never simulates
    bool threw = false;
    try {
        io::read_demos(path, true);
    } catch (const std::exception& e) {
        threw = true;
        CHECK(std::string(e.what()).find(demos[0].demo_id()) != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("checkpoints round-trip bit-identically") {
    TempDir dir;
    nn::ParamSet params = policy::init_policy(42);
    params.init_adam_state();
    params.init_ema_from_values();
    params.adam_step = 137;
    params.adam_m[1].data[5] = 0.25f;

    const std::string path = dir.file("p.ckpt");
    io::write_checkpoint(path, params);
    const nn::ParamSet loaded = io::read_checkpoint(path);
    CHECK(loaded.names == params.names);
    CHECK(loaded.adam_step == 137);
    for (std::size_t i = 0; i < params.size(); ++i) {
        CHECK(loaded.values[i].shape == params.values[i].shape);
        CHECK(loaded.values[i].data == params.values[i].data);
        CHECK(loaded.ema[i].data == params.ema[i].data);
        CHECK(loaded.adam_m[i].data == params.adam_m[i].data);
        CHECK(loaded.adam_v[i].data == params.adam_v[i].data);
    }
}

TEST_CASE("checkpoint corruption gives distinct error kinds") {
    TempDir dir;
    nn::ParamSet params = policy::init_policy(1);
    const std::string path = dir.file("p.ckpt");
    io::write_checkpoint(path, params);

    auto blob = [&]() {
        std::ifstream in(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    }();

    SUBCASE("bad magic") {
        std::string bad = blob;
        bad[0] = 'X';
        std::ofstream(path, std::ios::binary) << bad;
        try {
            io::read_checkpoint(path);
            FAIL("expected CheckpointError");
        } catch (const io::CheckpointError& e) {
            CHECK(e.kind() == io::CheckpointErrorKind::kBadMagic);
        }
    }
    SUBCASE("flipped payload byte fails the checksum") {
        std::string bad = blob;
        bad[bad.size() / 2] = static_cast<char>(bad[bad.size() / 2] ^ 0x40);
        std::ofstream(path, std::ios::binary) << bad;
        try {
            io::read_checkpoint(path);
            FAIL("expected CheckpointError");
        } catch (const io::CheckpointError& e) {
            CHECK(e.kind() == io::CheckpointErrorKind::kChecksumMismatch);
        }
    }
    SUBCASE("header-only truncation is a format error, not a crash") {
        std::string bad = blob.substr(0, 40);
        std::ofstream(path, std::ios::binary) << bad;
        try {
            io::read_checkpoint(path);
            FAIL("expected CheckpointError");
        } catch (const io::CheckpointError& e) {
            CHECK(e.kind() == io::CheckpointErrorKind::kBadFormat);
        }
    }
}

TEST_CASE("fnv1a64 reference value") {
    // FNV-1a 64 of "a" per the published constants
    const unsigned char a = 'a';
    CHECK(io::fnv1a64(&a, 1) == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("report CSV is deterministic and mean rows average the task rows") {
    TempDir dir;
    EvolutionReport report;
    RoundEntry e;
    e.round = 0;
    e.base.model = "base";
    e.base.rollouts_per_task = 20;
    e.base.successes = {20, 13, 7, 0, 19, 11, 2, 5};
    e.ema = e.base;
    e.ema.model = "ema";
    e.ema.successes = {18, 14, 9, 1, 20, 10, 3, 4};
    e.pool_size = 64;
    report.rounds.push_back(e);

    const std::string p1 = dir.file("r1.csv"), p2 = dir.file("r2.csv");
    io::write_report(p1, report);
    io::write_report(p2, report);
    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    const std::string c1 = slurp(p1);
    CHECK(c1 == slurp(p2));
    CHECK(c1.rfind("round,model,task_id,sr,pool_size,selected_this_round,converged\n", 0) ==
          0);

    // parse back and check the mean row consistency
    std::istringstream in(c1);
    std::string line;
    std::getline(in, line);
    double task_sum = 0.0;
    int task_rows = 0;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        REQUIRE(cells.size() == 7);
        if (cells[1] != "base") continue;
        if (cells[2] == "mean") {
            CHECK(std::stod(cells[3]) ==
                  doctest::Approx(task_sum / task_rows).epsilon(1e-9));
        } else {
            task_sum += std::stod(cells[3]);
            ++task_rows;
        }
    }
    CHECK(task_rows == sim::kNumTasks);

    // a single-round report renders header plus round-0 rows only
    const int lines = static_cast<int>(std::count(c1.begin(), c1.end(), '\n'));
    CHECK(lines == 1 + 2 * (sim::kNumTasks + 1));
}

TEST_CASE("scored pool CSV layout") {
    TempDir dir;
    std::vector<io::ScoredRow> rows = {
        {"base-r1-t0-i4", 0, "base", 1, 0.875, true, "ascending"},
        {"ema-r1-t0-i2", 0, "ema", 1, 0.125, false, "ascending"},
    };
    const std::string path = dir.file("scored.csv");
    io::write_scored_csv(path, rows);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "demo_id,task_id,source,round,confidence,selected,scheme");
    std::getline(in, line);
    CHECK(line == "base-r1-t0-i4,0,base,1,0.875,1,ascending");
}
