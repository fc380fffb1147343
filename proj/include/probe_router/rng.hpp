#pragma once

#include <cstdint>
#include <string_view>

namespace probe_router {

/// SplitMix64 (Steele, Lea & Flood 2014). Used to expand a 64-bit seed into
/// generator state and to derive independent sub-streams.
///
///   z = (state += 0x9E3779B97F4A7C15)
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next();

private:
    std::uint64_t state_;
};

/// xoshiro256** 1.0 (Blackman & Vigna). State is seeded from four SplitMix64
/// outputs. Every derived draw below is defined bit-for-bit so fixtures can be
/// regenerated in other languages:
///
///   uniform()   = (next() >> 11) * 2^-53                 in [0, 1)
///   normal()    = Box-Muller, cosine branch only:
///                 u1 = 1 - uniform(), u2 = uniform(),
///                 sqrt(-2 ln u1) * cos(2 pi u2)
///   below(n)    = Lemire's multiply-shift with rejection
///   bernoulli(p)= uniform() < p
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next();
    double uniform();
    double normal();
    std::uint64_t below(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }

    /// Seed for an independent sub-stream named by `stream`.
    static std::uint64_t derive(std::uint64_t seed, std::string_view stream);

private:
    std::uint64_t s_[4];
};

}  // namespace probe_router
