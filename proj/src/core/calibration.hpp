#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "correlation.hpp"
#include "frame.hpp"

namespace tgi {

// Ensemble-average deterministic beam shape.
MeanImage estimate_mean_shape(std::span<const PhotonFrame> frames);

// Separable 2-D Gaussian with constant offset.
struct GaussianShape {
    double amplitude = 0.0;
    double center_x = 0.0;
    double center_y = 0.0;
    double sigma_x = 1.0;
    double sigma_y = 1.0;
    double offset = 0.0;
    // Set when the image carries no usable structure; sigmas then hold the
    // documented sentinel max(width, height).
    bool degenerate = false;

    double evaluate(double x, double y) const {
        const double ux = (x - center_x) / sigma_x;
        const double uy = (y - center_y) / sigma_y;
        return amplitude * std::exp(-0.5 * (ux * ux + uy * uy)) + offset;
    }
};

// Damped least-squares fit seeded from image moments.  Never returns a fit
// worse (in summed squared residuals) than the best flat fit.
GaussianShape fit_gaussian_shape(const MeanImage& mean);

ResidualImage subtract_shape(const PhotonFrame& frame, const MeanImage& shape);
ResidualImage subtract_shape(const PhotonFrame& frame, const GaussianShape& shape);

struct EtaEstimate {
    double eta = 0.0;            // clamped to [0,1]
    double peak_integral = 0.0;  // background-subtracted sum over the peak support
    std::size_t frames_used = 0;
};

enum class MeanMethod { ensemble, gaussian_fit };

// Full twin-ensemble correlation analysis: the ensemble-averaged map (in
// pair-fraction units, i.e. counts / (overlap * r_i * (1-m_s) * (1-m_i)) with
// r_i = -ln(1-m_i)), the full-search eta and the background statistics.  The
// normalization makes the integrated peak estimate the fraction of idler
// detections whose twin is detected, without low-flux approximation bias.
struct EtaAnalysis {
    CorrelationMap averaged;  // pair-fraction units
    EtaEstimate full;
    double background_mean = 0.0;
    double background_std = 0.0;
    std::vector<std::uint8_t> support;  // final peak support mask over the map
};

EtaAnalysis analyze_twin_ensemble(std::span<const PhotonFrame> signals,
                                  std::span<const PhotonFrame> idlers, int max_dx, int max_dy,
                                  MeanMethod method = MeanMethod::ensemble, int jobs = 1);

// Integrated peak over a fixed window of an averaged pair-fraction map.
EtaEstimate window_eta(const EtaAnalysis& analysis, const PeakWindow& window);

// Spec-level operation: full-search eta when no support window is given,
// windowed eta otherwise.
EtaEstimate estimate_eta(std::span<const PhotonFrame> signals,
                         std::span<const PhotonFrame> idlers,
                         std::optional<PeakWindow> support, int max_dx = 24, int max_dy = 12,
                         MeanMethod method = MeanMethod::ensemble);

// Window of the requested extent centered on the map maximum; ties break
// toward the lexicographically smallest (dx, dy).
PeakWindow locate_peak(const CorrelationMap& avg_map, std::uint32_t extent_x,
                       std::uint32_t extent_y);

// Calibration profile: mean shapes, peak window, eta estimates.
struct CalibrationProfile {
    DetectorGeometry geometry;
    PeakWindow window;
    EtaEstimate eta_full;
    double eta_window = 0.0;
    double capture_fraction = 1.0;  // eta_window / eta_full
    double mean_flux_signal = 0.0;  // of the calibration (T=1, single step) arms
    double mean_flux_idler = 0.0;
    MeanImage mean_signal;
    MeanImage mean_idler;
    std::string method = "ensemble";
    std::uint64_t config_hash = 0;
};

// Single-file profile: text header line "TGIP v1", a length-prefixed JSON
// block, then the two mean images as embedded TGIM rasters.
void save_profile(const CalibrationProfile& profile, const std::filesystem::path& path);
CalibrationProfile load_profile(const std::filesystem::path& path);

}  // namespace tgi
