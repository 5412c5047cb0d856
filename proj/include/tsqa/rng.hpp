#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tsqa {

// Deterministic random source. std::mt19937_64 is pinned bit-for-bit by the
// standard, but the std distributions are not, so the draw methods here are
// hand-rolled and produce the same stream on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n) without modulo bias.
    uint64_t uniform_index(uint64_t n);

    // Uniform integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi);

    // Standard normal via Box-Muller. Caches the second variate.
    double gaussian();

    double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

    // True with probability p.
    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Derives a child seed from (seed, label) so that independent streams
// (train data, eval data, init, shuffling) never overlap. splitmix64-style
// mixing over the label bytes.
uint64_t derive_seed(uint64_t seed, std::string_view label);

}  // namespace tsqa
