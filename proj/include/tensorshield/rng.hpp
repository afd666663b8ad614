#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ts {

// Deterministic random source. mt19937_64 output is pinned by the standard,
// and the uniform/gaussian transforms below are fixed here, so a seed yields
// the same stream on every platform. std::*_distribution is never used.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1): top 53 bits of the raw draw.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller; the paired value is cached for the next call.
    double gaussian();

    // Uniform integer in [0, n). n must be nonzero.
    std::uint64_t below(std::uint64_t n);

    template <class T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
    double cached_gauss_ = 0.0;
    bool has_cached_gauss_ = false;
};

// splitmix64 step; used to decorrelate seeds derived from small integers.
std::uint64_t mix_seed(std::uint64_t x);

// Nondeterministic seed for unseeded runs (entropy + clock + counter).
std::uint64_t fresh_entropy_seed();

}  // namespace ts
