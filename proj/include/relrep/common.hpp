#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace relrep {

using Rng = std::mt19937_64;

// splitmix64; used to derive independent stream seeds from one master seed
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = splitmix64(base ^ 0x5851f42d4c957f2dULL);
    s = splitmix64(s ^ a);
    s = splitmix64(s ^ (b * 0x9e3779b97f4a7c15ULL + 1));
    s = splitmix64(s ^ (c * 0xd6e8feb86659fd93ULL + 2));
    return s;
}

inline int uniform_index(Rng& rng, int n) {
    return std::uniform_int_distribution<int>(0, n - 1)(rng);
}

// Fisher-Yates; draws nothing for size <= 1
template <class T>
void shuffle_inplace(std::vector<T>& v, Rng& rng) {
    for (int i = static_cast<int>(v.size()) - 1; i >= 1; --i) {
        int j = std::uniform_int_distribution<int>(0, i)(rng);
        std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
}

// k distinct indices from [0, n), partial Fisher-Yates, ascending order not guaranteed
inline std::vector<int> sample_indices_without_replacement(int n, int k, Rng& rng) {
    if (k > n) throw std::invalid_argument("sample_indices_without_replacement: k > n");
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < k; ++i) {
        int j = std::uniform_int_distribution<int>(i, n - 1)(rng);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    pool.resize(static_cast<std::size_t>(k));
    return pool;
}

// fixed 9-significant-digit printing; round-trips float32 exactly
inline std::string format_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
}

}  // namespace relrep
