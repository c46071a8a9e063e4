#include "generator.hpp"

#include <cmath>

namespace tgi {
namespace {

// Vose alias table: O(1) exact categorical sampling over one detector axis.
class AxisSampler {
public:
    AxisSampler(const std::vector<double>& weights, bool flat) : n_(static_cast<std::uint32_t>(weights.size())), flat_(flat) {
        if (flat_) return;
        const std::size_t n = weights.size();
        double total = 0.0;
        for (double w : weights) total += w;
        std::vector<double> scaled(n);
        for (std::size_t i = 0; i < n; ++i) scaled[i] = weights[i] * static_cast<double>(n) / total;
        prob_.assign(n, 1.0);
        alias_.assign(n, 0);
        std::vector<std::uint32_t> small, large;
        for (std::uint32_t i = 0; i < n; ++i) (scaled[i] < 1.0 ? small : large).push_back(i);
        while (!small.empty() && !large.empty()) {
            const std::uint32_t s = small.back();
            small.pop_back();
            const std::uint32_t l = large.back();
            prob_[s] = scaled[s];
            alias_[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if (scaled[l] < 1.0) {
                large.pop_back();
                small.push_back(l);
            }
        }
    }

    std::uint32_t sample(Rng& rng) const {
        const std::uint32_t i = rng.below(n_);
        if (flat_) return i;
        return rng.uniform() < prob_[i] ? i : alias_[i];
    }

private:
    std::uint32_t n_;
    bool flat_;
    std::vector<double> prob_;
    std::vector<std::uint32_t> alias_;
};

void scatter_background(PhotonFrame& frame, double rate_per_px, const AxisSampler& sx,
                        const AxisSampler& sy, Rng& rng) {
    const double total = rate_per_px * static_cast<double>(frame.size());
    const std::uint64_t events = rng.poisson(total);
    for (std::uint64_t k = 0; k < events; ++k) {
        const std::uint32_t x = sx.sample(rng);
        const std::uint32_t y = sy.sample(rng);
        frame.set(x, y);
    }
}

}  // namespace

StepFrames generate_step(const DetectorGeometry& geom, const SourceParams& source,
                         std::uint8_t t_level, std::uint64_t seed, std::size_t step_index) {
    geom.validate();
    source.validate();
    require(t_level <= 1, "generate_step: T_n must be 0 or 1");

    const bool flat = source.envelope.kind == Envelope::Kind::flat;
    const AxisSampler sampler_x(source.envelope.axis_weights(geom.width_px, true), flat);
    const AxisSampler sampler_y(source.envelope.axis_weights(geom.height_px, false), flat);

    auto stream = [&](StreamKind kind) { return Rng(splitmix64(seed ^ static_cast<std::uint64_t>(kind))); };
    Rng pos_rng = stream(StreamKind::pair_positions);
    Rng idler_rng = stream(StreamKind::idler_thinning);
    Rng signal_rng = stream(StreamKind::signal_thinning);
    Rng jitter_rng = stream(StreamKind::signal_jitter);
    Rng bg_signal_rng = stream(StreamKind::background_signal);
    Rng bg_idler_rng = stream(StreamKind::background_idler);

    PhotonFrame signal = PhotonFrame::zeros(geom);
    PhotonFrame idler = PhotonFrame::zeros(geom);

    const double pairs_total = source.pair_rate * static_cast<double>(geom.pixel_count());
    const std::uint64_t pairs = pos_rng.poisson(pairs_total);
    const bool signal_open = t_level != 0 && source.transmission_signal > 0.0;
    const std::int64_t w = geom.width_px, h = geom.height_px;
    for (std::uint64_t k = 0; k < pairs; ++k) {
        const std::uint32_t x = sampler_x.sample(pos_rng);
        const std::uint32_t y = sampler_y.sample(pos_rng);
        if (idler_rng.bernoulli(source.transmission_idler)) idler.set(x, y);
        if (signal_open && signal_rng.bernoulli(source.transmission_signal)) {
            std::int64_t sx = x, sy = y;
            if (source.jitter_sigma_x > 0.0)
                sx += std::lround(jitter_rng.normal() * source.jitter_sigma_x);
            if (source.jitter_sigma_y > 0.0)
                sy += std::lround(jitter_rng.normal() * source.jitter_sigma_y);
            if (sx >= 0 && sx < w && sy >= 0 && sy < h)
                signal.set(static_cast<std::uint32_t>(sx), static_cast<std::uint32_t>(sy));
        }
    }

    scatter_background(signal, source.background_signal, sampler_x, sampler_y, bg_signal_rng);
    scatter_background(idler, source.background_idler, sampler_x, sampler_y, bg_idler_rng);

    return StepFrames{step_index, std::move(signal), std::move(idler)};
}

PhotonFrame integrate_signal(std::span<const PhotonFrame> step_signal_frames) {
    require(!step_signal_frames.empty(), "integrate_signal: frame sequence must be nonempty");
    const DetectorGeometry geom = step_signal_frames.front().geometry();
    std::vector<std::uint8_t> acc(geom.pixel_count(), 0);
    for (const auto& f : step_signal_frames) {
        require(f.geometry() == geom, "integrate_signal: geometry mismatch");
        const auto& px = f.pixels();
        for (std::size_t i = 0; i < px.size(); ++i) acc[i] |= px[i];
    }
    return PhotonFrame(geom, std::move(acc));
}

}  // namespace tgi
