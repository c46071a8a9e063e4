// Test-side oracles, kept independent of the library's implementation paths.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "core/correlation.hpp"
#include "core/frame.hpp"

namespace oracle {

// Standard normal CDF and upper tail.
inline double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
inline double qtail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// Direct nested-loop cross covariance at one shift (the brute-force oracle).
inline double brute_force_shift(const std::vector<double>& s, const std::vector<double>& i, int w,
                                int h, int dx, int dy) {
    double sum = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int xx = x + dx, yy = y + dy;
            if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
            sum += s[static_cast<std::size_t>(y) * w + x] * i[static_cast<std::size_t>(yy) * w + xx];
        }
    return sum;
}

// P(round(N(0, sigma)) == k).
inline double rounded_gauss_pmf(double sigma, int k) {
    if (sigma <= 0.0) return k == 0 ? 1.0 : 0.0;
    return phi((k + 0.5) / sigma) - phi((k - 0.5) / sigma);
}

// P(round(N(0, sigma)) in [lo, hi]).
inline double rounded_gauss_capture(double sigma, int lo, int hi) {
    if (sigma <= 0.0) return lo <= 0 && 0 <= hi ? 1.0 : 0.0;
    return phi((hi + 0.5) / sigma) - phi((lo - 0.5) / sigma);
}

// Fraction of twin-coincidence mass a window catches on a finite detector:
// jitter mass per shift weighted by the shift's overlap area.
inline double window_capture_fraction(const tgi::DetectorGeometry& geom, double sigma_x,
                                      double sigma_y, const tgi::PeakWindow& window) {
    const double d = static_cast<double>(geom.pixel_count());
    double total = 0.0;
    for (int dy = window.y_lo(); dy <= window.y_hi(); ++dy)
        for (int dx = window.x_lo(); dx <= window.x_hi(); ++dx) {
            const double overlap =
                static_cast<double>(geom.width_px - std::abs(dx)) *
                static_cast<double>(geom.height_px - std::abs(dy));
            total += rounded_gauss_pmf(sigma_x, dx) * rounded_gauss_pmf(sigma_y, dy) * overlap / d;
        }
    return total;
}

struct RunningStats {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
    double stddev() const { return std::sqrt(variance()); }
    double std_error() const { return n > 0 ? stddev() / std::sqrt(static_cast<double>(n)) : 0.0; }
};

}  // namespace oracle
