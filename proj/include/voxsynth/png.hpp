#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "voxsynth/grid.hpp"

namespace voxsynth::io {

// 8-bit image, row-major, `channels` samples per pixel (1 = gray, 3 = RGB).
struct Image {
    std::int64_t width = 0;
    std::int64_t height = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;
};

// Non-interlaced PNG with filter type 0 on every row.
std::string encode_png(const Image &img);
void write_png(const std::filesystem::path &path, const Image &img);

// Slice orientation: for axis a the remaining axes (b, c), b < c, index the
// rows and columns. Throws ErrorCode::invalid_argument on a bad axis or index.
Image slice_gray(const IntensityVolume &vol, int axis, std::int64_t index);
Image slice_labels(const LabelVolume &labels, int axis, std::int64_t index);

// Label 0 is black; every other label gets a fixed colour.
std::array<std::uint8_t, 3> label_color(std::uint16_t label);

}  // namespace voxsynth::io
