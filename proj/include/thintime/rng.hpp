#pragma once

// Counter-based per-path seeding: the engine for path i depends only on
// (master_seed, i), so results do not depend on how paths are distributed
// across workers.

#include <cstdint>
#include <random>

namespace thintime {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t path_seed(std::uint64_t master_seed, std::uint64_t path_index) {
    return splitmix64(splitmix64(master_seed) ^ splitmix64(path_index * 0xD1B54A32D192ED03ULL + 1));
}

inline std::mt19937_64 make_path_engine(std::uint64_t master_seed, std::uint64_t path_index) {
    return std::mt19937_64(path_seed(master_seed, path_index));
}

}  // namespace thintime
