#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace lmtl {

// splitmix64. Every random decision in the project flows through this
// generator so that a seed fixes the behaviour on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    // In [0, n). Plain modulo: the tiny bias is irrelevant next to the
    // requirement that the draw be identical everywhere.
    uint64_t below(uint64_t n) { return n <= 1 ? 0 : next_u64() % n; }

    // In [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Poisson by CDF inversion from a single uniform draw.
    uint32_t poisson(double lambda) {
        double u = uniform();
        double p = std::exp(-lambda);
        double cdf = p;
        uint32_t k = 0;
        while (u >= cdf && k < 1u << 20) {
            ++k;
            p *= lambda / k;
            cdf += p;
        }
        return k;
    }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

    // Child stream for (worker, example)-style decorrelation.
    static uint64_t derive(uint64_t seed, uint64_t a, uint64_t b) {
        return mix(seed + 0x9E3779B97F4A7C15ULL * (a + 1) + 0xBF58476D1CE4E5B9ULL * (b + 1));
    }

private:
    uint64_t state_;
};

// Forward Fisher-Yates: after the call the first k slots hold a uniform
// sample without replacement. k == v.size() is a full shuffle.
template <typename T>
void partial_shuffle(std::vector<T>& v, std::size_t k, Rng& rng) {
    std::size_t n = v.size();
    if (k > n) k = n;
    for (std::size_t i = 0; i + 1 < n && i < k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(v[i], v[j]);
    }
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    partial_shuffle(v, v.size(), rng);
}

}  // namespace lmtl
