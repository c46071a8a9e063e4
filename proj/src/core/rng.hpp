#pragma once

#include <cmath>
#include <cstdint>

namespace tgi {

// splitmix64 finalizer; also used to hash stream tags into seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Purpose tag for one random stream. Streams are derived independently per
// (trial, step, purpose) so idler statistics never depend on the signal path
// and trials can run on any number of workers with identical results.
enum class StreamKind : std::uint64_t {
    pair_positions = 1,
    idler_thinning = 2,
    signal_thinning = 3,
    signal_jitter = 4,
    background_signal = 5,
    background_idler = 6,
};

// Stream seed = chained splitmix64 over (master, trial, step, kind).
inline std::uint64_t derive_stream_seed(std::uint64_t master, std::uint64_t trial,
                                        std::uint64_t step, StreamKind kind) {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ (0xA5A5A5A5A5A5A5A5ULL + trial));
    h = splitmix64(h ^ (0x3C3C3C3C3C3C3C3CULL + step));
    h = splitmix64(h ^ static_cast<std::uint64_t>(kind));
    return h;
}

// xoshiro256++ with all state seeded through splitmix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : s_) {
            x = splitmix64(x);
            w = x;
        }
        have_cached_normal_ = false;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0,1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Unbiased integer in [0, n) by rejection.
    std::uint32_t below(std::uint32_t n) {
        const std::uint64_t span = 0x100000000ULL;
        const std::uint64_t limit = span - span % n;
        for (;;) {
            std::uint64_t v = next_u64() >> 32;
            if (v < limit) return static_cast<std::uint32_t>(v % n);
        }
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller, second value cached.
    double normal() {
        if (have_cached_normal_) {
            have_cached_normal_ = false;
            return cached_normal_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_normal_ = r * std::sin(a);
        have_cached_normal_ = true;
        return r * std::cos(a);
    }

    // Exact Poisson sampling. Knuth inversion for small means; larger means are
    // split into <=32-mean chunks (Poisson additivity keeps this exact).
    std::uint64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        std::uint64_t total = 0;
        while (mean > 32.0) {
            total += poisson_knuth(32.0);
            mean -= 32.0;
        }
        return total + poisson_knuth(mean);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t poisson_knuth(double mean) {
        const double threshold = std::exp(-mean);
        std::uint64_t k = 0;
        double p = 1.0;
        for (;;) {
            p *= uniform();
            if (p <= threshold) return k;
            ++k;
        }
    }

    std::uint64_t s_[4];
    double cached_normal_ = 0.0;
    bool have_cached_normal_;
};

}  // namespace tgi
