#pragma once

#include <cstdint>
#include <random>

namespace affordkit {

/// SplitMix64 finalizer applied to seed + (index+1)*golden-gamma. Used to
/// derive independent per-sample substreams: substream_i = mix_seed(seed, i).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

/// Reproducible random source. The engine is std::mt19937_64, whose output
/// sequence is fixed by the C++ standard; the real-valued transforms are
/// defined here (not via <random> distributions, which are
/// implementation-defined) so streams match across toolchains:
///   uniform()  = (u64 >> 11) * 2^-53, in [0, 1)
///   normal()   = Box-Muller on two uniforms, returning the cosine branch
///                first and caching the sine branch
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n) by rejection (no modulo bias).
    std::uint64_t below(std::uint64_t n);
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace affordkit
