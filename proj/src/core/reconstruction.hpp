#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "calibration.hpp"
#include "correlation.hpp"
#include "frame.hpp"

namespace tgi {

// Per-step coincidence counts between one integrated signal frame and each
// idler reference frame.
struct CoincidenceSeries {
    std::vector<double> counts;
    PeakWindow window;
    std::uint64_t trial = 0;
};

struct DecodedSignal {
    std::vector<std::uint8_t> bits;
    double threshold = 0.0;
    std::vector<double> margins;  // |c_n - threshold|
};

// c_n = binned peak-window coincidences of (S - mean_s) against (I_n - mean_i),
// evaluated through the streaming correlator.
CoincidenceSeries reconstruct_series(const PhotonFrame& integrated_signal,
                                     std::span<const PhotonFrame> idler_frames,
                                     const WindowedCorrelator& correlator,
                                     std::uint64_t trial = 0);

// bit_n = 1 iff c_n >= mean_one_level / 2 (ties decode to 1).
DecodedSignal threshold_decode(const CoincidenceSeries& series, double mean_one_level);

struct EnsembleMetrics {
    std::size_t trials = 0;
    std::vector<double> step_mean;
    std::vector<double> step_std;
    std::vector<double> step_snr;   // per-step mean/std, for the report
    double mean_one_level = 0.0;    // measured mean of the "1" steps
    double snr_measured = 0.0;      // mean of "1"-step means over pooled "1"-step std
    bool degenerate = false;        // pooled std was zero; snr_measured is +inf
    std::size_t wrong_bits = 0;
    std::size_t total_bits = 0;
    double error_rate = 0.0;
    // Filled in by the caller for the side-by-side report.
    SnrPrediction predicted;
    double snr_required = 0.0;
};

// Ensemble statistics against the true signal.  Pooling uses the unweighted
// mean of per-step standard deviations across the "1" steps.
EnsembleMetrics evaluate_ensemble(std::span<const CoincidenceSeries> trials,
                                  std::span<const DecodedSignal> decoded, const TimeSignal& truth);

}  // namespace tgi
