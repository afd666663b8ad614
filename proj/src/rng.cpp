#include "tensorshield/rng.hpp"

#include <atomic>
#include <chrono>
#include <cmath>

namespace ts {

double Rng::gaussian() {
    if (has_cached_gauss_) {
        has_cached_gauss_ = false;
        return cached_gauss_;
    }
    // u1 in (0, 1] so the log is finite.
    double u1 = 1.0 - uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    cached_gauss_ = r * std::sin(a);
    has_cached_gauss_ = true;
    return r * std::cos(a);
}

std::uint64_t Rng::below(std::uint64_t n) {
    // Lemire multiply-shift with rejection; unbiased.
    std::uint64_t x = eng_();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
        std::uint64_t t = (0 - n) % n;
        while (lo < t) {
            x = eng_();
            m = static_cast<__uint128_t>(x) * n;
            lo = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fresh_entropy_seed() {
    static std::atomic<std::uint64_t> counter{0};
    std::random_device rd;
    std::uint64_t a = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    auto now = std::chrono::steady_clock::now().time_since_epoch().count();
    return mix_seed(a ^ static_cast<std::uint64_t>(now) ^ (counter.fetch_add(1) << 56));
}

}  // namespace ts
