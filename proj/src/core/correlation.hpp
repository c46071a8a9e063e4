#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "frame.hpp"

namespace tgi {

// Binning window over correlation-map displacements.  A window of extent
// Bx x By centered at (cx, cy) covers dx in [cx - Bx/2, cx + Bx - Bx/2 - 1]
// and likewise in y (floor-centered, so a 16-wide window at 0 is [-8..7]).
struct PeakWindow {
    int center_dx = 0;
    int center_dy = 0;
    std::uint32_t extent_x = 1;
    std::uint32_t extent_y = 1;

    int x_lo() const { return center_dx - static_cast<int>(extent_x / 2); }
    int x_hi() const { return x_lo() + static_cast<int>(extent_x) - 1; }
    int y_lo() const { return center_dy - static_cast<int>(extent_y / 2); }
    int y_hi() const { return y_lo() + static_cast<int>(extent_y) - 1; }
    std::uint64_t bin_count() const { return std::uint64_t{extent_x} * extent_y; }

    void validate() const {
        require(extent_x >= 1 && extent_y >= 1, "window: extents must be >= 1");
    }
    bool operator==(const PeakWindow&) const = default;
};

// Cross-covariance (or normalized cross-correlation) over a displacement
// range.  In the count convention, the value at shift (dx,dy) is the plain
// sum over overlapping pixels of residual products; the normalized variant
// divides by the overlap-restricted root product of residual energies and
// lies in [-1,1].
struct CorrelationMap {
    int dx_min = 0, dx_max = 0;
    int dy_min = 0, dy_max = 0;
    std::size_t pixel_count = 0;  // D of the source frames
    bool normalized = false;
    std::vector<double> values;  // row-major, dy outer, dx inner

    int nx() const { return dx_max - dx_min + 1; }
    int ny() const { return dy_max - dy_min + 1; }
    bool contains(int dx, int dy) const {
        return dx >= dx_min && dx <= dx_max && dy >= dy_min && dy <= dy_max;
    }
    double at(int dx, int dy) const {
        return values[static_cast<std::size_t>(dy - dy_min) * nx() + (dx - dx_min)];
    }
    double& at(int dx, int dy) {
        return values[static_cast<std::size_t>(dy - dy_min) * nx() + (dx - dx_min)];
    }
};

// Exact cross-covariance map between two residual images for all shifts with
// |dx| <= max_dx, |dy| <= max_dy.  Uses the direct double sum for small
// problems and an FFT-based path (identical values to ~1e-12) for large ones.
CorrelationMap cross_covariance_map(const ResidualImage& sig, const ResidualImage& idl,
                                    int max_dx, int max_dy, bool normalized = false);

// Sum of map values over a binning window.
double binned_coincidences(const CorrelationMap& map, const PeakWindow& window);

// Streaming equivalent of subtract -> cross_covariance_map -> binned sum for
// one fixed window and fixed mean shapes.  This is the reconstruction hot
// path; it must (and is tested to) reproduce the composed pipeline exactly.
class WindowedCorrelator {
public:
    WindowedCorrelator(const MeanImage& mean_signal, const MeanImage& mean_idler,
                       const PeakWindow& window);

    double coincidences(const PhotonFrame& signal, const PhotonFrame& idler) const;

    const PeakWindow& window() const noexcept { return window_; }
    const DetectorGeometry& geometry() const noexcept { return geom_; }

private:
    DetectorGeometry geom_{};
    PeakWindow window_{};
    std::vector<double> box_mean_idler_;    // per signal pixel: window sum of idler mean
    std::vector<double> box_mean_signal_;   // per idler pixel: reverse-window sum of signal mean
    double mean_cross_term_ = 0.0;          // window sum over overlaps of ms(p)*mi(p+d)
};

// Parameters of the accidental/twin noise model.
struct NoiseModelParams {
    std::size_t pixel_count = 0;  // D
    double bin_count = 1.0;       // B
    double mean_signal = 0.0;     // m_s of the (integrated) signal image
    double mean_idler = 0.0;      // m_i per idler image
    double eta = 0.0;             // equivalent quantum efficiency (window-adjusted)

    void validate() const;
    // Closed forms assume events-per-pixel much below one.
    bool low_flux() const { return mean_signal <= 0.3 && mean_idler <= 0.3; }
};

// sqrt(D * B * m_s * m_i): std of the binned accidental coincidence count.
double accidental_std(const NoiseModelParams& p);

// T_n * D * (eta * m_i - m_i^2): mean twin coincidence count at full capture.
double predicted_coincidences(std::uint8_t t_level, const NoiseModelParams& p);

struct SnrPrediction {
    double full = 0.0;    // T D (eta m_i - m_i^2) / sqrt(T D eta m_i + D B m_s m_i)
    double approx = 0.0;  // T eta sqrt(D / (B M))
};
SnrPrediction predicted_snr(std::uint8_t t_level, const NoiseModelParams& p, std::size_t ones_count);

// Decodability threshold for an L-level signal: 2.45 * L * T_n.
double required_snr(int level_count, std::uint8_t t_level);

// CSV export: one-line header naming the normalization, then dx,dy,value rows.
void export_map_csv(const CorrelationMap& map, const std::filesystem::path& path);

}  // namespace tgi
