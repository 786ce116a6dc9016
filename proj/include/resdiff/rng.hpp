#ifndef RESDIFF_RNG_HPP
#define RESDIFF_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "resdiff/types.hpp"

namespace resdiff {

// Deterministic RNG. Gaussian draws use an explicit Box-Muller transform on
// top of mt19937_64 so that streams are bit-reproducible across standard
// libraries (std::normal_distribution is implementation-defined).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Named substream of a master seed. Same (master, name, index) always
    // yields the same stream, independent of call order elsewhere.
    static Rng stream(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
        std::uint64_t h = 1469598103934665603ull; // FNV-1a
        for (char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        return Rng(mix(mix(master ^ h) ^ index));
    }

    std::uint64_t bits() { return gen_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t integer(std::uint64_t n) {
        // Rejection-free modulo bias is negligible for n << 2^64 but we use
        // Lemire-style rejection to keep streams well defined.
        std::uint64_t x = gen_();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        std::uint64_t lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            std::uint64_t t = (-n) % n;
            while (lo < t) {
                x = gen_();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * kPi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    template <class S = double>
    VecX<S> normal_vec(Eigen::Index n) {
        VecX<S> v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = static_cast<S>(normal());
        return v;
    }

  private:
    static std::uint64_t mix(std::uint64_t z) { // splitmix64 finalizer
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace resdiff

#endif
