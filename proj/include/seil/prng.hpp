#pragma once

#include <cstdint>

// Deterministic PRNG shared by every module. All randomness in the project
// flows through splitmix64 streams whose seeds are derived from the
// experiment master seed, so any value is reproducible from (master_seed,
// derivation tuple) alone.

namespace seil::rng {

// One splitmix64 output step applied to x.
constexpr std::uint64_t sm64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Stream roles used in seed derivation. Rollout streams use expert/base/ema;
// evaluation uses kEval together with kEvalRound so its tuples can never
// collide with training rollouts; the remaining tags salt internal streams
// (weight init, batch shuffling, uniform selection, validation sampling).
enum class StreamTag : std::uint64_t {
    kExpert = 0,
    kBase = 1,
    kEma = 2,
    kEval = 3,
    kInit = 4,
    kShuffle = 5,
    kSelect = 6,
    kValidation = 7,
};

inline constexpr std::uint64_t kEvalRound = 0xFFFFFFFFULL; // 2^32 - 1

constexpr std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t round,
                                    StreamTag tag, std::uint64_t task_id,
                                    std::uint64_t rollout_idx) {
    return sm64(sm64(sm64(sm64(master_seed ^ round) ^ static_cast<std::uint64_t>(tag)) ^
                     task_id) ^
                rollout_idx);
}

class SplitMix {
public:
    explicit constexpr SplitMix(std::uint64_t seed) : state_(seed) {}

    constexpr std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1): 24 high bits, exactly representable in float32.
    double next_unit() { return static_cast<double>(next_u64() >> 40) / 16777216.0; }

    // Uniform in [-d, d].
    double next_sym(double d) { return d * (2.0 * next_unit() - 1.0); }

    // Uniform integer in [0, n), n > 0. Modulo bias is irrelevant at the
    // pool sizes used here and keeps the stream consumption fixed.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

private:
    std::uint64_t state_;
};

} // namespace seil::rng
