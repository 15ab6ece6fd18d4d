#include "seil/storage.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace seil::io {

using nlohmann::json;

// --- demonstrations ---------------------------------------------------------

namespace {

json state_to_json(const sim::SimState& s) {
    json j;
    j["ee"] = {s.ee_pos.x, s.ee_pos.y};
    j["grip"] = s.grip_closed;
    j["held"] = s.held_block ? *s.held_block : -1;
    json blocks = json::array();
    for (const auto& b : s.block_pos) blocks.push_back({b.x, b.y});
    j["blocks"] = std::move(blocks);
    j["step_count"] = s.step_count;
    return j;
}

sim::SimState state_from_json(const json& j) {
    sim::SimState s;
    s.ee_pos.x = j.at("ee").at(0).get<float>();
    s.ee_pos.y = j.at("ee").at(1).get<float>();
    s.grip_closed = j.at("grip").get<bool>();
    const int held = j.at("held").get<int>();
    if (held >= 0) s.held_block = held;
    const auto& blocks = j.at("blocks");
    if (blocks.size() != sim::kNumBlocks)
        throw std::runtime_error("bad block count in init_state");
    for (int b = 0; b < sim::kNumBlocks; ++b) {
        s.block_pos[b].x = blocks.at(b).at(0).get<float>();
        s.block_pos[b].y = blocks.at(b).at(1).get<float>();
    }
    s.step_count = j.at("step_count").get<int>();
    return s;
}

json demo_to_json(const sim::Trajectory& t) {
    json j;
    j["demo_id"] = t.demo_id();
    j["task_id"] = t.task_id;
    j["source"] = sim::source_name(t.source);
    j["round"] = t.round;
    j["env_seed"] = t.env_seed;
    j["rollout_idx"] = t.rollout_idx;
    j["env_augmented"] = t.env_augmented;
    j["init_state"] = state_to_json(t.init_state);
    json steps = json::array();
    for (const auto& [obs, act] : t.steps) {
        json pair = json::array();
        pair.push_back(json(obs));
        pair.push_back(json(act));
        steps.push_back(std::move(pair));
    }
    j["steps"] = std::move(steps);
    j["first_frame"] = t.first_frame;
    j["success"] = t.success;
    return j;
}

sim::Trajectory demo_from_json(const json& j) {
    sim::Trajectory t;
    t.task_id = j.at("task_id").get<int>();
    t.source = sim::source_from_name(j.at("source").get<std::string>());
    t.round = j.at("round").get<int>();
    t.env_seed = j.at("env_seed").get<std::uint64_t>();
    t.rollout_idx = j.at("rollout_idx").get<std::uint64_t>();
    t.env_augmented = j.at("env_augmented").get<bool>();
    t.init_state = state_from_json(j.at("init_state"));
    for (const auto& pair : j.at("steps")) {
        sim::Observation obs;
        sim::Action act;
        const auto& jo = pair.at(0);
        const auto& ja = pair.at(1);
        if (jo.size() != obs.size() || ja.size() != act.size())
            throw std::runtime_error("bad step dimensions");
        for (std::size_t i = 0; i < obs.size(); ++i) obs[i] = jo.at(i).get<float>();
        for (std::size_t i = 0; i < act.size(); ++i) act[i] = ja.at(i).get<float>();
        t.steps.emplace_back(obs, act);
    }
    const auto& jf = j.at("first_frame");
    if (jf.size() != t.first_frame.size()) throw std::runtime_error("bad frame length");
    for (std::size_t i = 0; i < t.first_frame.size(); ++i)
        t.first_frame[i] = jf.at(i).get<float>();
    t.success = j.at("success").get<bool>();
    return t;
}

} // namespace

void write_demos(const std::string& path, const std::vector<sim::Trajectory>& demos) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& demo : demos) out << demo_to_json(demo).dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<sim::Trajectory> read_demos(const std::string& path, bool verify) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<sim::Trajectory> demos;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        sim::Trajectory t;
        try {
            t = demo_from_json(json::parse(line));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": malformed demo record: " + e.what());
        }
        if (verify && !sim::replay_check(t))
            throw std::runtime_error(path + ": replay mismatch for demo " + t.demo_id());
        demos.push_back(std::move(t));
    }
    return demos;
}

// --- checkpoints -------------------------------------------------------------

std::uint64_t fnv1a64(const unsigned char* data, std::size_t len) {
    std::uint64_t h = 14695981039346656037ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= data[i];
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

struct HeaderEntry {
    std::string name;
    std::string role;
    std::vector<int> shape;
};

void append_entries(std::ostringstream& hdr, std::vector<const nn::Tensor*>& order,
                    const std::vector<std::string>& names,
                    const std::vector<nn::Tensor>& tensors, const char* role) {
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        hdr << "tensor " << names[i] << ' ' << role << ' ' << tensors[i].shape.size();
        for (int d : tensors[i].shape) hdr << ' ' << d;
        hdr << '\n';
        order.push_back(&tensors[i]);
    }
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

} // namespace

void write_checkpoint(const std::string& path, const nn::ParamSet& params) {
    std::ostringstream hdr;
    hdr << "step " << params.adam_step << '\n';
    std::vector<const nn::Tensor*> order;
    append_entries(hdr, order, params.names, params.values, "param");
    if (params.has_ema()) append_entries(hdr, order, params.names, params.ema, "ema");
    if (params.has_adam()) {
        append_entries(hdr, order, params.names, params.adam_m, "adam_m");
        append_entries(hdr, order, params.names, params.adam_v, "adam_v");
    }
    const std::string header = hdr.str();

    std::string payload;
    for (const nn::Tensor* t : order) {
        const std::size_t bytes = t->data.size() * sizeof(float);
        const std::size_t off = payload.size();
        payload.resize(off + bytes);
        std::memcpy(payload.data() + off, t->data.data(), bytes);
    }

    std::string out;
    out.append(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    out += payload;
    put_u64(out, fnv1a64(reinterpret_cast<const unsigned char*>(payload.data()),
                         payload.size()));

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

nn::ParamSet read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError(CheckpointErrorKind::kBadFormat, "cannot open: " + path);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    const std::size_t magic_len = sizeof(kCheckpointMagic) - 1;
    if (blob.size() < magic_len + 4 ||
        std::memcmp(blob.data(), kCheckpointMagic, magic_len) != 0)
        throw CheckpointError(CheckpointErrorKind::kBadMagic,
                              path + ": not a SEILCKPT1 checkpoint");

    std::uint32_t hlen = 0;
    for (int i = 0; i < 4; ++i)
        hlen |= static_cast<std::uint32_t>(
                    static_cast<unsigned char>(blob[magic_len + static_cast<std::size_t>(i)]))
                << (8 * i);
    const std::size_t hdr_off = magic_len + 4;
    if (blob.size() < hdr_off + hlen)
        throw CheckpointError(CheckpointErrorKind::kBadFormat, path + ": truncated header");

    std::istringstream hdr(blob.substr(hdr_off, hlen));
    std::string keyword;
    std::int64_t step = 0;
    std::vector<HeaderEntry> entries;
    while (hdr >> keyword) {
        if (keyword == "step") {
            if (!(hdr >> step))
                throw CheckpointError(CheckpointErrorKind::kBadFormat, path + ": bad step");
        } else if (keyword == "tensor") {
            HeaderEntry e;
            std::size_t rank = 0;
            if (!(hdr >> e.name >> e.role >> rank) || rank == 0 || rank > 8)
                throw CheckpointError(CheckpointErrorKind::kBadFormat,
                                      path + ": bad tensor entry");
            if (e.role != "param" && e.role != "ema" && e.role != "adam_m" &&
                e.role != "adam_v")
                throw CheckpointError(CheckpointErrorKind::kBadFormat,
                                      path + ": unknown role " + e.role);
            e.shape.resize(rank);
            for (std::size_t i = 0; i < rank; ++i)
                if (!(hdr >> e.shape[i]) || e.shape[i] <= 0)
                    throw CheckpointError(CheckpointErrorKind::kBadFormat,
                                          path + ": bad tensor shape");
            entries.push_back(std::move(e));
        } else {
            throw CheckpointError(CheckpointErrorKind::kBadFormat,
                                  path + ": unknown header keyword " + keyword);
        }
    }

    nn::ParamSet ps;
    ps.adam_step = step;
    for (const HeaderEntry& e : entries)
        if (e.role == "param") {
            if (ps.index_of(e.name) >= 0)
                throw CheckpointError(CheckpointErrorKind::kBadFormat,
                                      path + ": duplicate param " + e.name);
            ps.add(e.name, nn::Tensor(e.shape));
        }
    if (ps.size() == 0)
        throw CheckpointError(CheckpointErrorKind::kBadFormat, path + ": no parameters");

    // Every non-param role group must mirror the param list name-by-name.
    for (const char* role : {"ema", "adam_m", "adam_v"}) {
        std::vector<const HeaderEntry*> group;
        for (const HeaderEntry& e : entries)
            if (e.role == role) group.push_back(&e);
        if (group.empty()) continue;
        if (group.size() != ps.size())
            throw CheckpointError(CheckpointErrorKind::kShapeMismatch,
                                  path + ": role " + role + " does not cover all params");
        for (std::size_t i = 0; i < group.size(); ++i)
            if (group[i]->name != ps.names[i] || group[i]->shape != ps.values[i].shape)
                throw CheckpointError(CheckpointErrorKind::kShapeMismatch,
                                      path + ": role " + std::string(role) +
                                          " does not mirror param " + group[i]->name);
    }

    std::size_t payload_len = 0;
    for (const HeaderEntry& e : entries) {
        std::size_t n = 1;
        for (int d : e.shape) n *= static_cast<std::size_t>(d);
        payload_len += n * sizeof(float);
    }
    const std::size_t payload_off = hdr_off + hlen;
    if (blob.size() != payload_off + payload_len + 8)
        throw CheckpointError(CheckpointErrorKind::kBadFormat,
                              path + ": payload size mismatch");

    const std::uint64_t want = fnv1a64(
        reinterpret_cast<const unsigned char*>(blob.data() + payload_off), payload_len);
    std::uint64_t got = 0;
    for (int i = 0; i < 8; ++i)
        got |= static_cast<std::uint64_t>(static_cast<unsigned char>(
                   blob[payload_off + payload_len + static_cast<std::size_t>(i)]))
               << (8 * i);
    if (want != got)
        throw CheckpointError(CheckpointErrorKind::kChecksumMismatch,
                              path + ": payload checksum mismatch");

    std::size_t off = payload_off;
    auto read_into = [&](nn::Tensor& t) {
        const std::size_t bytes = t.data.size() * sizeof(float);
        std::memcpy(t.data.data(), blob.data() + off, bytes);
        off += bytes;
    };
    for (const HeaderEntry& e : entries) {
        nn::Tensor t{e.shape};
        read_into(t);
        const std::size_t idx = static_cast<std::size_t>(ps.index_of(e.name));
        if (e.role == "param") {
            ps.values[idx] = std::move(t);
        } else if (e.role == "ema") {
            if (ps.ema.empty()) ps.ema.resize(ps.size());
            ps.ema[idx] = std::move(t);
        } else if (e.role == "adam_m") {
            if (ps.adam_m.empty()) ps.adam_m.resize(ps.size());
            ps.adam_m[idx] = std::move(t);
        } else if (e.role == "adam_v") {
            if (ps.adam_v.empty()) ps.adam_v.resize(ps.size());
            ps.adam_v[idx] = std::move(t);
        } else {
            throw CheckpointError(CheckpointErrorKind::kBadFormat,
                                  path + ": unknown role " + e.role);
        }
    }
    return ps;
}

// --- reports -----------------------------------------------------------------

std::string format_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

namespace {

void append_model_rows(std::string& out, const RoundEntry& e, const SRReport& r) {
    for (int t = 0; t < sim::kNumTasks; ++t) {
        out += std::to_string(e.round) + "," + r.model + "," + std::to_string(t) + "," +
               format_double(r.task_sr(t)) + "," + std::to_string(e.pool_size) + "," +
               std::to_string(e.selected_this_round) + "," + (e.converged ? "1" : "0") +
               "\n";
    }
    out += std::to_string(e.round) + "," + r.model + ",mean," +
           format_double(r.mean_sr()) + "," + std::to_string(e.pool_size) + "," +
           std::to_string(e.selected_this_round) + "," + (e.converged ? "1" : "0") + "\n";
}

} // namespace

void write_report(const std::string& path, const EvolutionReport& report) {
    std::string out = "round,model,task_id,sr,pool_size,selected_this_round,converged\n";
    for (const RoundEntry& e : report.rounds) {
        append_model_rows(out, e, e.base);
        append_model_rows(out, e, e.ema);
    }
    write_text_file(path, out);
}

void write_sr_reports(const std::string& path, const std::vector<SRReport>& reports) {
    std::string out = "round,model,task_id,sr,pool_size,selected_this_round,converged\n";
    for (const SRReport& r : reports) {
        RoundEntry shim;
        shim.round = r.round;
        append_model_rows(out, shim, r);
    }
    write_text_file(path, out);
}

void write_scored_csv(const std::string& path, const std::vector<ScoredRow>& rows) {
    std::string out = "demo_id,task_id,source,round,confidence,selected,scheme\n";
    for (const ScoredRow& r : rows) {
        out += r.demo_id + "," + std::to_string(r.task_id) + "," + r.source + "," +
               std::to_string(r.round) + "," + format_double(r.confidence) + "," +
               (r.selected ? "1" : "0") + "," + r.scheme + "\n";
    }
    write_text_file(path, out);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

} // namespace seil::io
