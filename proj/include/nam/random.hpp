#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace nam {

/// Seeded generator used everywhere randomness enters. Streams are
/// reproducible for a given seed within one build.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    float normal() { return normal_(engine_); }
    float uniform(float lo, float hi) { return std::uniform_real_distribution<float>(lo, hi)(engine_); }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

    std::vector<float> normal_vector(std::size_t n) {
        std::vector<float> v(n);
        for (auto& x : v) x = normal();
        return v;
    }

    template <class It>
    void shuffle(It first, It last) {
        // Fisher-Yates with our own index draws keeps the order identical
        // across standard library implementations of std::shuffle.
        for (auto n = last - first; n > 1; --n) {
            auto j = static_cast<decltype(n)>(index(static_cast<std::size_t>(n)));
            std::iter_swap(first + (n - 1), first + j);
        }
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<float> normal_{0.0f, 1.0f};
};

/// Derives an independent child seed from a base seed and a stream id.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t x = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace nam
