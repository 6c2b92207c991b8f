#pragma once

#include <cstdint>

namespace sfcausal {

// splitmix64 finalizer; a bijection on 64-bit words.
std::uint64_t mix64(std::uint64_t x);

// Counter-based generator: every draw is a pure function of (seed, stream, counter),
// so the order in which draws are taken (or the thread taking them) never matters.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t bits(std::uint64_t counter) const;
    // Uniform on the open interval (0, 1).
    double uniform(std::uint64_t counter) const;
    // Standard normal by inversion of std_normal_cdf.
    double normal(std::uint64_t counter) const;

private:
    std::uint64_t key_;
};

// Seed for replicate `rep` of a study: mix64(seed ^ mix64(rep + c)).
// For a fixed seed the map rep -> seed is injective.
std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t rep);

}  // namespace sfcausal
