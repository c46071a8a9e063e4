#pragma once

#include <cstdint>
#include <vector>

#include "frame.hpp"
#include "geometry.hpp"

namespace tgi {

// Beam intensity profile. Weights are normalized so the per-pixel mean over
// the detector equals 1, i.e. they rescale a nominal per-pixel rate.
struct Envelope {
    enum class Kind { flat, gaussian };
    Kind kind = Kind::flat;
    double center_x = 0.0;
    double center_y = 0.0;
    double sigma_x = 0.0;
    double sigma_y = 0.0;

    static Envelope flat() { return Envelope{}; }
    static Envelope gaussian(double cx, double cy, double sx, double sy) {
        return Envelope{Kind::gaussian, cx, cy, sx, sy};
    }

    void validate() const {
        if (kind == Kind::gaussian)
            require(sigma_x > 0.0 && sigma_y > 0.0, "envelope: gaussian sigmas must be > 0");
    }

    // Per-axis weights, each normalized to mean 1 so the outer product has
    // grid mean exactly 1.
    std::vector<double> axis_weights(std::uint32_t n, bool horizontal) const;
};

// Generative model of the twin-photon source and both detection arms.
struct SourceParams {
    double pair_rate = 0.0;            // mean incident pairs per pixel per step
    double transmission_signal = 0.0;  // detection prob of a pair's signal photon at T_n=1
    double transmission_idler = 0.0;   // detection prob of a pair's idler photon
    double jitter_sigma_x = 0.0;       // signal-idler position offset spread, px
    double jitter_sigma_y = 0.0;
    double background_signal = 0.0;    // uncorrelated singles per pixel per step
    double background_idler = 0.0;
    Envelope envelope;

    void validate() const {
        require(pair_rate >= 0.0, "source: pair_rate must be >= 0");
        require(transmission_signal >= 0.0 && transmission_signal <= 1.0,
                "source: transmission_signal must be in [0,1]");
        require(transmission_idler >= 0.0 && transmission_idler <= 1.0,
                "source: transmission_idler must be in [0,1]");
        require(jitter_sigma_x >= 0.0 && jitter_sigma_y >= 0.0,
                "source: jitter sigmas must be >= 0");
        require(background_signal >= 0.0 && background_idler >= 0.0,
                "source: background rates must be >= 0");
        envelope.validate();
    }

    // Equivalent quantum efficiency of the model, idler-side definition:
    // fraction of idler detections whose twin signal photon is also detected.
    double eta_model() const {
        const double idler_rate = pair_rate * transmission_idler + background_idler;
        if (idler_rate <= 0.0) return 0.0;
        return pair_rate * transmission_signal * transmission_idler / idler_rate;
    }
};

// Per-pixel mean pair rate, pair_rate * envelope weight.
RealImage beam_mean_map(const DetectorGeometry& geom, const SourceParams& source);

}  // namespace tgi
