#include "source.hpp"

#include <cmath>

namespace tgi {

std::vector<double> Envelope::axis_weights(std::uint32_t n, bool horizontal) const {
    std::vector<double> w(n, 1.0);
    if (kind == Kind::flat) return w;
    const double c = horizontal ? center_x : center_y;
    const double s = horizontal ? sigma_x : sigma_y;
    double sum = 0.0, comp = 0.0;
    for (std::uint32_t i = 0; i < n; ++i) {
        const double d = (static_cast<double>(i) - c) / s;
        w[i] = std::exp(-0.5 * d * d);
        const double y = w[i] - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    require(sum > 0.0, "envelope: weights sum to zero on this detector");
    const double scale = static_cast<double>(n) / sum;
    for (auto& v : w) v *= scale;
    return w;
}

RealImage beam_mean_map(const DetectorGeometry& geom, const SourceParams& source) {
    geom.validate();
    source.validate();
    const auto wx = source.envelope.axis_weights(geom.width_px, true);
    const auto wy = source.envelope.axis_weights(geom.height_px, false);
    RealImage map = RealImage::zeros(geom);
    for (std::uint32_t y = 0; y < geom.height_px; ++y)
        for (std::uint32_t x = 0; x < geom.width_px; ++x)
            map.at(x, y) = source.pair_rate * wx[x] * wy[y];
    return map;
}

}  // namespace tgi
