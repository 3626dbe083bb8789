#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace layoutforge {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Stable per-component seed: FNV-1a over the name, mixed with the root.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view component) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : component) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return splitmix64(root ^ splitmix64(h));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
    return splitmix64(root ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

inline std::vector<double> normal_vector(Rng& rng, std::size_t n, double stddev = 1.0) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

}  // namespace layoutforge
