#include "ablate/rng.hpp"

#include <cmath>

namespace ablate {

namespace {

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer; full-avalanche mix of a 64-bit word.
uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(uint64_t seed, uint64_t stream_id)
    : key_(mix64(mix64(seed + kGolden) ^ mix64(stream_id + 0xD1B54A32D192ED03ULL))) {}

RngStream RngStream::split(uint64_t child_id) const {
    return RngStream(mix64(key_ ^ mix64(child_id + 0x8CB92BA72F3D8DD7ULL)));
}

uint64_t RngStream::next_u64() {
    ++counter_;
    return mix64(key_ + kGolden * counter_);
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_normal_ = true;
    return r * std::cos(theta);
}

size_t RngStream::uniform_int(size_t n) {
    // Rejection-free modulo is fine here: n is always tiny relative to 2^64.
    return static_cast<size_t>(next_u64() % n);
}

}  // namespace ablate
