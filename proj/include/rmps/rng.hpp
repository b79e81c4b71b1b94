#pragma once

// Deterministic random number generation.
//
// Every stochastic routine in this library draws from an RngStream derived
// from an RngSeed plus integer tags. The generator algorithm is pinned:
//   * stream derivation: splitmix64 absorption of (master, stream, tags...)
//   * core generator:    std::mt19937_64 (bit-exact by the C++ standard)
//   * uniforms:          53-bit mantissa construction, (x >> 11) * 2^-53
//   * normals:           Box-Muller on two uniforms
// so the same (seed, tags) reproduce identical draws on every run.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Dense>

namespace rmps {

struct RngSeed {
    std::uint64_t master = 0;
    std::uint64_t stream = 0;

    friend bool operator==(const RngSeed&, const RngSeed&) = default;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t absorb(std::initializer_list<std::uint64_t> words) {
    std::uint64_t state = 0x8F1BBCDCBFA53E0Bull;
    std::uint64_t h = 0;
    for (std::uint64_t w : words) {
        state ^= w;
        h = splitmix64(state);
        state ^= h;
    }
    return h;
}

}  // namespace detail

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53 significant bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; pairs are generated together and the
    // second value is cached so call parity never changes the draw sequence.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    std::complex<double> complex_normal(double sigma = 1.0) {
        return {sigma * normal(), sigma * normal()};
    }

    // Uniform integer in [0, n) by 128-bit widening multiply.
    std::uint64_t uniform_index(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(gen_()) * n) >> 64);
    }

    // Haar-random unit vector in C^dim (normalized complex Gaussian).
    Eigen::VectorXcd unit_vector(int dim) {
        Eigen::VectorXcd v(dim);
        for (int i = 0; i < dim; ++i) v(i) = complex_normal();
        const double n = v.norm();
        if (n == 0.0) {
            v.setZero();
            v(0) = 1.0;
            return v;
        }
        return v / n;
    }

private:
    std::mt19937_64 gen_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

// Derives an independent stream for (seed, tag, index). Tags keep unrelated
// consumers (sites, replicas, restarts) on non-overlapping sequences.
inline RngStream make_stream(const RngSeed& seed, std::uint64_t tag, std::uint64_t index = 0) {
    return RngStream(detail::absorb({seed.master, seed.stream, tag, index}));
}

inline RngSeed derive_seed(const RngSeed& seed, std::uint64_t tag, std::uint64_t index = 0) {
    return RngSeed{seed.master, detail::absorb({seed.stream, tag, index})};
}

// Stable tag constants (values arbitrary but frozen).
namespace rng_tag {
inline constexpr std::uint64_t site = 0x5174ull;
inline constexpr std::uint64_t ti_tensor = 0x7172ull;
inline constexpr std::uint64_t markov_path = 0x313Bull;
inline constexpr std::uint64_t replica = 0x4E41ull;
inline constexpr std::uint64_t restart = 0x5253ull;
inline constexpr std::uint64_t sweep = 0x5357ull;
inline constexpr std::uint64_t probe = 0x5052ull;
inline constexpr std::uint64_t bootstrap = 0x4253ull;
inline constexpr std::uint64_t mixture = 0x4D58ull;
}  // namespace rng_tag

}  // namespace rmps
