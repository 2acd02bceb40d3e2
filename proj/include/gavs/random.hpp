#pragma once

#include <cstdint>
#include <string_view>

namespace gavs {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Child seed for a (master, index) pair; used for per-scene and per-parameter streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) ^ (index * 0xd6e8feb86659fd93ULL));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view name) {
    return derive_seed(master, fnv1a64(name));
}

}  // namespace gavs
