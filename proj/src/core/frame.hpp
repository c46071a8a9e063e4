#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "common.hpp"
#include "geometry.hpp"

namespace tgi {

// Post-threshold camera exposure: one byte per pixel, strictly 0 or 1.
class PhotonFrame {
public:
    PhotonFrame() = default;
    PhotonFrame(DetectorGeometry geom, std::vector<std::uint8_t> detections)
        : geom_(geom), px_(std::move(detections)) {
        geom_.validate();
        require(px_.size() == geom_.pixel_count(), "frame: pixel buffer size mismatch");
        for (auto v : px_) require(v <= 1, "frame: pixel values must be 0 or 1");
    }

    static PhotonFrame zeros(DetectorGeometry geom) {
        geom.validate();
        return PhotonFrame(geom, std::vector<std::uint8_t>(geom.pixel_count(), 0), unchecked_tag{});
    }

    const DetectorGeometry& geometry() const noexcept { return geom_; }
    std::uint32_t width() const noexcept { return geom_.width_px; }
    std::uint32_t height() const noexcept { return geom_.height_px; }
    std::size_t size() const noexcept { return px_.size(); }

    std::uint8_t at(std::uint32_t x, std::uint32_t y) const {
        return px_[static_cast<std::size_t>(y) * geom_.width_px + x];
    }
    void set(std::uint32_t x, std::uint32_t y) {
        px_[static_cast<std::size_t>(y) * geom_.width_px + x] = 1;
    }

    const std::vector<std::uint8_t>& pixels() const noexcept { return px_; }

    std::uint64_t detected_count() const {
        return std::accumulate(px_.begin(), px_.end(), std::uint64_t{0});
    }
    double mean() const {
        return px_.empty() ? 0.0 : static_cast<double>(detected_count()) / px_.size();
    }

    bool operator==(const PhotonFrame&) const = default;

private:
    struct unchecked_tag {};
    PhotonFrame(DetectorGeometry geom, std::vector<std::uint8_t> px, unchecked_tag)
        : geom_(geom), px_(std::move(px)) {}

    DetectorGeometry geom_{};
    std::vector<std::uint8_t> px_;
};

// Binary time object T_1..T_N.  Two levels in v1.
struct TimeSignal {
    std::vector<std::uint8_t> levels;
    int level_count = 2;

    void validate() const {
        require(!levels.empty(), "signal: level sequence must be nonempty");
        require(level_count == 2, "signal: only binary signals are supported");
        for (auto v : levels) require(v <= 1, "signal: levels must be 0 or 1");
    }

    std::size_t steps() const noexcept { return levels.size(); }
    std::size_t ones_count() const {
        return static_cast<std::size_t>(std::accumulate(levels.begin(), levels.end(), 0u));
    }
};

// Frames produced for one time step: attenuated signal arm + reference idler.
struct StepFrames {
    std::size_t step_index = 0;
    PhotonFrame signal_frame;
    PhotonFrame idler_frame;
};

// Per-pixel real image on the detector grid (mean shapes, residuals).
class RealImage {
public:
    RealImage() = default;
    RealImage(DetectorGeometry geom, std::vector<double> values)
        : geom_(geom), v_(std::move(values)) {
        geom_.validate();
        require(v_.size() == geom_.pixel_count(), "image: value buffer size mismatch");
    }
    static RealImage zeros(DetectorGeometry geom) {
        geom.validate();
        return RealImage(geom, std::vector<double>(geom.pixel_count(), 0.0));
    }

    const DetectorGeometry& geometry() const noexcept { return geom_; }
    std::uint32_t width() const noexcept { return geom_.width_px; }
    std::uint32_t height() const noexcept { return geom_.height_px; }
    std::size_t size() const noexcept { return v_.size(); }

    double at(std::uint32_t x, std::uint32_t y) const {
        return v_[static_cast<std::size_t>(y) * geom_.width_px + x];
    }
    double& at(std::uint32_t x, std::uint32_t y) {
        return v_[static_cast<std::size_t>(y) * geom_.width_px + x];
    }
    const std::vector<double>& values() const noexcept { return v_; }
    std::vector<double>& values() noexcept { return v_; }

    double mean() const {
        if (v_.empty()) return 0.0;
        // Kahan summation keeps the normalization checks tight on large frames.
        double sum = 0.0, comp = 0.0;
        for (double x : v_) {
            double y = x - comp;
            double t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        return sum / static_cast<double>(v_.size());
    }

private:
    DetectorGeometry geom_{};
    std::vector<double> v_;
};

// Ensemble-averaged deterministic beam shape; values in [0,1].
struct MeanImage {
    RealImage image;
    std::size_t sample_count = 0;

    const DetectorGeometry& geometry() const noexcept { return image.geometry(); }
};

// Frame minus deterministic shape, unclipped.
struct ResidualImage {
    RealImage image;

    const DetectorGeometry& geometry() const noexcept { return image.geometry(); }
};

}  // namespace tgi
