#pragma once

#include <cstdint>
#include <cstddef>

namespace ablate {

// Counter-based stream: output k depends only on (seed, stream, k), so streams
// can be split arbitrarily without sharing state.
class RngStream {
public:
    RngStream(uint64_t seed, uint64_t stream_id);

    uint64_t next_u64();
    double uniform();                 // [0, 1)
    double normal();                  // standard normal, Box-Muller
    size_t uniform_int(size_t n);     // [0, n)

    // Independent child stream; deterministic in (parent key, child_id).
    RngStream split(uint64_t child_id) const;

private:
    explicit RngStream(uint64_t key) : key_(key) {}

    uint64_t key_;
    uint64_t counter_ = 0;
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

}  // namespace ablate
