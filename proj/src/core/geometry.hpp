#pragma once

#include <cstdint>
#include <string>

#include "common.hpp"

namespace tgi {

struct DetectorGeometry {
    std::uint32_t width_px = 0;
    std::uint32_t height_px = 0;

    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width_px) * height_px;
    }

    bool operator==(const DetectorGeometry&) const = default;

    void validate() const {
        require(width_px >= 1 && height_px >= 1, "geometry: width_px and height_px must be >= 1");
    }

    std::string describe() const {
        return std::to_string(width_px) + "x" + std::to_string(height_px);
    }
};

}  // namespace tgi
