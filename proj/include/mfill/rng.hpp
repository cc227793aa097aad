#pragma once

#include <cstdint>
#include <initializer_list>

namespace mfill {

/// SplitMix64 generator (Steele, Lea & Flood 2014; Vigna's public-domain
/// reference stepping). One 64-bit word of state, so substreams are cheap
/// to derive by hashing a (seed, path...) tuple. All outputs are platform
/// independent, which is what makes seeded runs byte-reproducible.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n) by 128-bit multiply-shift. The modulo bias
    /// is n / 2^64, irrelevant for the ensemble sizes used here, and unlike
    /// rejection it consumes exactly one draw.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

private:
    std::uint64_t state_;
};

/// splitmix64 finalizer used as a mixing function for substream derivation.
inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
    std::uint64_t z = seed ^ (value + 0x9E3779B97F4A7C15ull + (seed << 6) + (seed >> 2));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Independent generator for the stream identified by (seed, path...).
/// Work items (perturbation slots, oracle samples, diagnostics draws) each
/// get their own stream so parallel execution cannot reorder draws.
inline SplitMix64 substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = hash_combine(0x8BADF00D5EEDull, seed);
    for (std::uint64_t id : path) s = hash_combine(s, id);
    return SplitMix64(s);
}

/// Stream family tags. Values are part of the reproducibility contract of a
/// given library version: changing them changes every seeded run.
namespace stream {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t resample = 2;
inline constexpr std::uint64_t perturb = 3;
inline constexpr std::uint64_t oracle = 4;
inline constexpr std::uint64_t diag = 5;
} // namespace stream

} // namespace mfill
