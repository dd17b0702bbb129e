#pragma once

#include <cstdint>
#include <cstddef>

namespace nexus {

/// Deterministic pseudo-random stream.
///
/// The generator is xoshiro256++ seeded through splitmix64, so the raw
/// 64-bit stream is bit-identical on every platform for a given seed.
/// gaussian() uses the Marsaglia polar transform; it calls into libm
/// (log/sqrt), so gaussian draws are deterministic per libm build and
/// bit-identical across runs on the same machine.
///
/// Rng is not shareable between threads; parallel work derives
/// independent streams with child().
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next_u64();

    /// Uniform draw in [0, 1) with 53-bit resolution.
    double uniform();

    /// Uniform integer in [0, n). Rejection sampling, unbiased. n must be > 0.
    std::uint64_t below(std::uint64_t n);

    /// True with probability p.
    bool bernoulli(double p);

    /// Zero-mean normal draw with standard deviation std (> 0).
    double gaussian(double std = 1.0);

    /// Independent stream derived from this rng's seed and the given index.
    Rng child(std::uint64_t index) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace nexus
