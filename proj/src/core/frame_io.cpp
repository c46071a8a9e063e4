#include "frame_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace tgi {
namespace {

constexpr std::uint8_t kVersion = 0x01;

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_io("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail_io("write failed: " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) fail_io("cannot open for reading: " + path.string());
    const auto size = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) fail_io("read failed: " + path.string());
    return bytes;
}

struct Header {
    std::uint32_t width;
    std::uint32_t height;
};

Header parse_header(const std::vector<std::uint8_t>& bytes, const char* magic,
                    const std::filesystem::path& path) {
    if (bytes.size() < 13) fail_io("truncated file: " + path.string());
    if (std::memcmp(bytes.data(), magic, 4) != 0)
        fail_io("bad magic (expected " + std::string(magic) + "): " + path.string());
    if (bytes[4] != kVersion) fail_io("unsupported version: " + path.string());
    return Header{get_u32le(bytes.data() + 5), get_u32le(bytes.data() + 9)};
}

}  // namespace

void write_frame(const PhotonFrame& frame, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(13 + frame.size());
    bytes.insert(bytes.end(), {'T', 'G', 'I', 'F', kVersion});
    std::vector<std::uint8_t> dims;
    put_u32le(dims, frame.width());
    put_u32le(dims, frame.height());
    bytes.insert(bytes.end(), dims.begin(), dims.end());
    bytes.insert(bytes.end(), frame.pixels().begin(), frame.pixels().end());
    write_bytes(path, bytes);
}

PhotonFrame read_frame(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    const Header h = parse_header(bytes, "TGIF", path);
    const std::size_t expected = static_cast<std::size_t>(h.width) * h.height;
    if (h.width == 0 || h.height == 0) fail_io("zero dimension in header: " + path.string());
    if (bytes.size() != 13 + expected)
        fail_io("truncated or oversized pixel data: " + path.string());
    std::vector<std::uint8_t> px(bytes.begin() + 13, bytes.end());
    for (auto v : px)
        if (v > 1) fail_io("pixel value out of range (not 0x00/0x01): " + path.string());
    return PhotonFrame(DetectorGeometry{h.width, h.height}, std::move(px));
}

std::vector<std::uint8_t> encode_real_image(const RealImage& image) {
    static_assert(std::endian::native == std::endian::little,
                  "raster writer assumes little-endian doubles");
    std::vector<std::uint8_t> bytes;
    bytes.reserve(13 + image.size() * 8);
    bytes.insert(bytes.end(), {'T', 'G', 'I', 'M', kVersion});
    std::vector<std::uint8_t> dims;
    put_u32le(dims, image.width());
    put_u32le(dims, image.height());
    bytes.insert(bytes.end(), dims.begin(), dims.end());
    const auto* raw = reinterpret_cast<const std::uint8_t*>(image.values().data());
    bytes.insert(bytes.end(), raw, raw + image.size() * 8);
    return bytes;
}

RealImage decode_real_image(const std::uint8_t* data, std::size_t size) {
    std::vector<std::uint8_t> bytes(data, data + size);
    const Header h = parse_header(bytes, "TGIM", "<embedded>");
    const std::size_t expected = static_cast<std::size_t>(h.width) * h.height;
    if (h.width == 0 || h.height == 0) fail_io("zero dimension in embedded raster");
    if (bytes.size() != 13 + expected * 8) fail_io("truncated or oversized embedded raster");
    std::vector<double> values(expected);
    std::memcpy(values.data(), bytes.data() + 13, expected * 8);
    return RealImage(DetectorGeometry{h.width, h.height}, std::move(values));
}

void write_real_image(const RealImage& image, const std::filesystem::path& path) {
    write_bytes(path, encode_real_image(image));
}

RealImage read_real_image(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    if (bytes.size() < 13) fail_io("truncated file: " + path.string());
    return decode_real_image(bytes.data(), bytes.size());
}

}  // namespace tgi
