#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace sparseft {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Seeded generator with hand-rolled transforms. std::uniform_real_distribution
// and friends are implementation-defined; the raw mt19937_64 stream is not,
// so every draw here is reproducible bit-for-bit from the seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(splitmix64(seed)) {}

    std::uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // [0, n); modulo bias is ~n/2^64, irrelevant at lab scale
    int uniform_int(int n) {
        return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<std::size_t>(i)],
                      v[static_cast<std::size_t>(uniform_int(i + 1))]);
        }
    }

    // k distinct indices from [0, n), returned sorted
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        for (int i = 0; i < k; ++i) {
            const int j = i + uniform_int(n - i);
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
        idx.resize(static_cast<std::size_t>(k));
        std::sort(idx.begin(), idx.end());
        return idx;
    }

    // Independent deterministic substream
    Rng fork(std::uint64_t stream) const {
        return Rng(splitmix64(seed_ ^ (0x9e3779b97f4a7c15ull * (stream + 1))));
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// FNV-1a over raw bytes; used for provenance digests
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace sparseft
