#pragma once

#include <filesystem>

#include "frame.hpp"

namespace tgi {

// TGIF v1: 'T''G''I''F', version byte 0x01, width and height as 32-bit
// little-endian unsigned integers, then row-major one byte per pixel
// (0x00/0x01).  Readers reject bad magic, bad version, truncation, trailing
// bytes and out-of-range pixel values.
void write_frame(const PhotonFrame& frame, const std::filesystem::path& path);
PhotonFrame read_frame(const std::filesystem::path& path);

// TGIM v1: same raster layout, magic 'T''G''I''M', 64-bit little-endian
// floats per pixel.
void write_real_image(const RealImage& image, const std::filesystem::path& path);
RealImage read_real_image(const std::filesystem::path& path);

// In-memory encodings (used when rasters are embedded in other files).
std::vector<std::uint8_t> encode_real_image(const RealImage& image);
RealImage decode_real_image(const std::uint8_t* data, std::size_t size);

}  // namespace tgi
