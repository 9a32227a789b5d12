#pragma once

#include <cstdint>
#include <random>

namespace feddpms {

// Deterministic stream derivation: every consumer gets its own engine seeded
// by (master, tags...). splitmix64 as the mixing function.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

template <typename... Tags>
std::mt19937_64 make_stream(std::uint64_t master, Tags... tags) {
    std::uint64_t s = master;
    ((s = mix_seed(s, static_cast<std::uint64_t>(tags))), ...);
    return std::mt19937_64(s);
}

// Stream tags, so that e.g. partitioning and noise never share a stream.
enum class StreamKind : std::uint64_t {
    partition = 1,
    init = 2,
    shuffle = 3,
    reparam = 4,
    dp_noise = 5,
    selection = 6,
    subsample = 7,
    synthetic_data = 8,
};

}  // namespace feddpms
