// rng.h — deterministic random number generation.
//
// std::uniform_int_distribution and friends are implementation-defined, so
// everything that must reproduce across compilers is hand-rolled on top of
// mt19937_64.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "lrr/common.h"

namespace lrr {

// splitmix64 step, used to derive independent per-episode seeds from a base
// seed and an index.
inline uint64_t mix_seed(uint64_t base, uint64_t index) {
    uint64_t z = base + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 bits of entropy.
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], inclusive and unbiased.
    int uniform_int(int lo, int hi) {
        check(lo <= hi, "uniform_int: empty range [", lo, ", ", hi, "]");
        uint64_t range = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
        uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<int>(lo + static_cast<int64_t>(x % range));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller. The second value is discarded to keep
    // the generator stateless apart from mt19937_64 itself.
    double gauss() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double gauss(double mean, double stddev) { return mean + stddev * gauss(); }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        check(!v.empty(), "pick: empty vector");
        return v[static_cast<size_t>(uniform_int(0, static_cast<int>(v.size()) - 1))];
    }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(uniform_int(0, i))]);
        }
    }

    // k distinct values from [lo, hi], in random order.
    std::vector<int> sample_distinct(int lo, int hi, int k) {
        check(k >= 0 && k <= hi - lo + 1, "sample_distinct: cannot draw ", k,
              " distinct values from [", lo, ", ", hi, "]");
        std::vector<int> pool;
        pool.reserve(static_cast<size_t>(hi - lo + 1));
        for (int v = lo; v <= hi; ++v) pool.push_back(v);
        shuffle(pool);
        pool.resize(static_cast<size_t>(k));
        return pool;
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace lrr
