#include "reconstruction.hpp"

#include <cmath>
#include <limits>

namespace tgi {

CoincidenceSeries reconstruct_series(const PhotonFrame& integrated_signal,
                                     std::span<const PhotonFrame> idler_frames,
                                     const WindowedCorrelator& correlator, std::uint64_t trial) {
    require(!idler_frames.empty(), "reconstruct_series: no idler frames");
    require(integrated_signal.geometry() == correlator.geometry(),
            "reconstruct_series: signal frame geometry mismatch");
    CoincidenceSeries series;
    series.window = correlator.window();
    series.trial = trial;
    series.counts.reserve(idler_frames.size());
    for (const auto& idler : idler_frames)
        series.counts.push_back(correlator.coincidences(integrated_signal, idler));
    return series;
}

DecodedSignal threshold_decode(const CoincidenceSeries& series, double mean_one_level) {
    require(mean_one_level > 0.0, "threshold_decode: reference level must be > 0");
    DecodedSignal out;
    out.threshold = mean_one_level / 2.0;
    out.bits.reserve(series.counts.size());
    out.margins.reserve(series.counts.size());
    for (double c : series.counts) {
        out.bits.push_back(c >= out.threshold ? 1 : 0);
        out.margins.push_back(std::abs(c - out.threshold));
    }
    return out;
}

EnsembleMetrics evaluate_ensemble(std::span<const CoincidenceSeries> trials,
                                  std::span<const DecodedSignal> decoded,
                                  const TimeSignal& truth) {
    truth.validate();
    if (trials.size() < 2) fail_insufficient("evaluate_ensemble: need at least 2 trials");
    require(trials.size() == decoded.size(), "evaluate_ensemble: trials/decodings length mismatch");
    const std::size_t steps = truth.steps();
    for (const auto& t : trials)
        require(t.counts.size() == steps, "evaluate_ensemble: truth length mismatch");
    for (const auto& d : decoded)
        require(d.bits.size() == steps, "evaluate_ensemble: truth length mismatch");

    EnsembleMetrics m;
    m.trials = trials.size();
    m.step_mean.assign(steps, 0.0);
    m.step_std.assign(steps, 0.0);
    m.step_snr.assign(steps, 0.0);

    for (const auto& t : trials)
        for (std::size_t n = 0; n < steps; ++n) m.step_mean[n] += t.counts[n];
    for (std::size_t n = 0; n < steps; ++n) m.step_mean[n] /= static_cast<double>(m.trials);
    for (const auto& t : trials)
        for (std::size_t n = 0; n < steps; ++n) {
            const double d = t.counts[n] - m.step_mean[n];
            m.step_std[n] += d * d;
        }
    for (std::size_t n = 0; n < steps; ++n)
        m.step_std[n] = std::sqrt(m.step_std[n] / static_cast<double>(m.trials - 1));

    double one_mean = 0.0, one_std = 0.0;
    std::size_t ones = 0;
    for (std::size_t n = 0; n < steps; ++n) {
        if (m.step_std[n] > 0.0) m.step_snr[n] = m.step_mean[n] / m.step_std[n];
        if (truth.levels[n] == 1) {
            one_mean += m.step_mean[n];
            one_std += m.step_std[n];
            ++ones;
        }
    }
    require(ones >= 1, "evaluate_ensemble: truth has no '1' steps");
    one_mean /= static_cast<double>(ones);
    one_std /= static_cast<double>(ones);
    m.mean_one_level = one_mean;
    if (one_std > 0.0) {
        m.snr_measured = one_mean / one_std;
    } else {
        m.snr_measured = std::numeric_limits<double>::infinity();
        m.degenerate = true;
    }

    m.total_bits = m.trials * steps;
    for (const auto& d : decoded)
        for (std::size_t n = 0; n < steps; ++n)
            if (d.bits[n] != truth.levels[n]) ++m.wrong_bits;
    m.error_rate = static_cast<double>(m.wrong_bits) / static_cast<double>(m.total_bits);
    return m;
}

}  // namespace tgi
