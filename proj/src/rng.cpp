#include "sfcausal/rng.hpp"

#include "sfcausal/distributions.hpp"

namespace sfcausal {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kStreamMul = 0xD1B54A32D192ED03ULL;
constexpr std::uint64_t kReplicateSalt = 0x632BE59BD9B4E019ULL;

}  // namespace

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix64(mix64(seed + kGolden) ^ ((stream + 1) * kStreamMul))) {}

std::uint64_t CounterRng::bits(std::uint64_t counter) const {
    return mix64(mix64(key_ + counter * kGolden) ^ key_);
}

double CounterRng::uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t counter) const { return std_normal_quantile(uniform(counter)); }

std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t rep) {
    return mix64(seed ^ mix64(rep + kReplicateSalt));
}

}  // namespace sfcausal
