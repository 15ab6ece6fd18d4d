#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "seil/report.hpp"
#include "seil/sim.hpp"
#include "seil/tensor.hpp"

// Bit-exact persistence. Demonstrations are line-delimited JSON (inspectable,
// diff-able); checkpoints are binary with a payload checksum; reports are
// deterministic CSV.

namespace seil::io {

// --- demonstrations ---------------------------------------------------------

// One JSON object per line; floats carry their shortest round-trip decimal
// form, so decode(encode(t)) == t bit-exactly.
void write_demos(const std::string& path, const std::vector<sim::Trajectory>& demos);

// `verify` replays every record through the simulator and rejects mismatches.
std::vector<sim::Trajectory> read_demos(const std::string& path, bool verify = false);

// --- checkpoints -------------------------------------------------------------

inline constexpr char kCheckpointMagic[] = "SEILCKPT1";

enum class CheckpointErrorKind { kBadMagic, kBadFormat, kChecksumMismatch, kShapeMismatch };

class CheckpointError : public std::runtime_error {
public:
    CheckpointError(CheckpointErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    CheckpointErrorKind kind() const { return kind_; }

private:
    CheckpointErrorKind kind_;
};

// Magic bytes, a length-prefixed text header of (name, role, shape) lines in
// payload order, little-endian float32 payloads, then a trailing FNV-1a64
// checksum of the payload bytes.
void write_checkpoint(const std::string& path, const nn::ParamSet& params);
nn::ParamSet read_checkpoint(const std::string& path);

std::uint64_t fnv1a64(const unsigned char* data, std::size_t len);

// --- reports -----------------------------------------------------------------

// Columns: round, model, task_id (or "mean"), sr, pool_size,
// selected_this_round, converged. Byte-stable for identical reports.
void write_report(const std::string& path, const EvolutionReport& report);

// Same column layout for standalone evaluations (pool columns zero).
void write_sr_reports(const std::string& path, const std::vector<SRReport>& reports);

struct ScoredRow {
    std::string demo_id;
    int task_id = 0;
    std::string source;
    int round = 0;
    double confidence = 0.0;
    bool selected = false;
    std::string scheme;
};

// Columns: demo_id, task_id, source, round, confidence, selected, scheme.
void write_scored_csv(const std::string& path, const std::vector<ScoredRow>& rows);

// Shortest stable decimal form used by every CSV writer.
std::string format_double(double v);

void write_text_file(const std::string& path, const std::string& content);

} // namespace seil::io
