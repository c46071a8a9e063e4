#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "frame.hpp"
#include "rng.hpp"
#include "source.hpp"

namespace tgi {

// One seed per (trial, step); purpose streams are derived from it inside
// generate_step, so scheduling order never matters.
inline std::uint64_t step_seed(std::uint64_t master, std::uint64_t trial, std::uint64_t step) {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ (0xA5A5A5A5A5A5A5A5ULL + trial));
    h = splitmix64(h ^ (0x3C3C3C3C3C3C3C3CULL + step));
    return h;
}

// Synthesizes one correlated signal/idler frame pair.
//
// Sampling is event-driven: the total pair count is Poisson(sum of per-pixel
// rates) and each event picks its pixel from the envelope's separable
// categorical distribution, which is distributionally identical to drawing an
// independent Poisson count at every pixel.  Each pair then thins into an
// idler detection (prob tau_i, at the pair pixel) and a signal detection
// (prob tau_s*T_n, at the pair pixel plus a rounded Gaussian offset).
// Detections jittered off the detector are lost.  Background singles are
// envelope-shaped Poisson events on each arm.  Pixels clamp to {0,1}.
StepFrames generate_step(const DetectorGeometry& geom, const SourceParams& source,
                         std::uint8_t t_level, std::uint64_t seed, std::size_t step_index = 0);

// Pixelwise OR: charge integration over time steps followed by thresholding.
// A pair is lost to the correlation when its signal photon lands on a pixel
// that already fired, which is what caps twin coincidences at high flux.
PhotonFrame integrate_signal(std::span<const PhotonFrame> step_signal_frames);

}  // namespace tgi
