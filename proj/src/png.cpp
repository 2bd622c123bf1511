#include "voxsynth/png.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>

#include "voxsynth/rng.hpp"
#include "voxsynth/volume_io.hpp"

namespace voxsynth::io {
namespace {

void put_u32(std::string &out, std::uint32_t v) {
    out.push_back(static_cast<char>(v >> 24));
    out.push_back(static_cast<char>(v >> 16));
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v));
}

void chunk(std::string &out, const char *type, const std::string &data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    const std::string body = std::string(type, 4) + data;
    out += body;
    put_u32(out, static_cast<std::uint32_t>(
                     crc32(0L, reinterpret_cast<const Bytef *>(body.data()), static_cast<uInt>(body.size()))));
}

struct SliceGeometry {
    std::int64_t rows, cols;
    int row_axis, col_axis;
};

SliceGeometry slice_geometry(const GridMeta &m, int axis, std::int64_t index) {
    if (axis < 0 || axis > 2) fail(ErrorCode::invalid_argument, "axis must be 0, 1 or 2");
    if (index < 0 || index >= m.dims[axis]) {
        fail(ErrorCode::invalid_argument, "slice index " + std::to_string(index) + " outside [0, " +
                                              std::to_string(m.dims[axis]) + ")");
    }
    const int b = axis == 0 ? 1 : 0;
    const int c = axis == 2 ? 1 : 2;
    return {m.dims[b], m.dims[c], b, c};
}

template <class T, class Fn>
void for_slice(const Volume<T> &vol, int axis, std::int64_t index, Fn &&fn) {
    const auto g = slice_geometry(vol.meta, axis, index);
    for (std::int64_t r = 0; r < g.rows; ++r)
        for (std::int64_t c = 0; c < g.cols; ++c) {
            Index3 x{};
            x[axis] = index;
            x[g.row_axis] = r;
            x[g.col_axis] = c;
            fn(r, c, vol.values[vol.meta.linear(x)]);
        }
}

}  // namespace

std::string encode_png(const Image &img) {
    if (img.channels != 1 && img.channels != 3) fail(ErrorCode::invalid_argument, "PNG needs 1 or 3 channels");
    if (img.width < 1 || img.height < 1) fail(ErrorCode::invalid_argument, "PNG dimensions must be positive");
    const auto row_bytes = static_cast<std::size_t>(img.width * img.channels);
    if (img.pixels.size() != row_bytes * static_cast<std::size_t>(img.height)) {
        fail(ErrorCode::dimension_mismatch, "pixel buffer does not match PNG dimensions");
    }
    std::string raw;
    raw.reserve((row_bytes + 1) * static_cast<std::size_t>(img.height));
    for (std::int64_t r = 0; r < img.height; ++r) {
        raw.push_back('\0');
        raw.append(reinterpret_cast<const char *>(img.pixels.data()) + r * row_bytes, row_bytes);
    }
    uLongf len = compressBound(static_cast<uLong>(raw.size()));
    std::string packed(len, '\0');
    if (compress2(reinterpret_cast<Bytef *>(packed.data()), &len, reinterpret_cast<const Bytef *>(raw.data()),
                  static_cast<uLong>(raw.size()), 6) != Z_OK) {
        fail(ErrorCode::io_error, "PNG compression failed");
    }
    packed.resize(len);

    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(img.width));
    put_u32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);                                // bit depth
    ihdr.push_back(img.channels == 1 ? 0 : 2);        // colour type
    ihdr.append(3, '\0');                             // compression, filter, interlace
    chunk(out, "IHDR", ihdr);
    chunk(out, "IDAT", packed);
    chunk(out, "IEND", "");
    return out;
}

void write_png(const std::filesystem::path &path, const Image &img) { write_file_atomic(path, encode_png(img)); }

Image slice_gray(const IntensityVolume &vol, int axis, std::int64_t index) {
    const auto g = slice_geometry(vol.meta, axis, index);
    Image img{g.cols, g.rows, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(g.rows * g.cols))};
    double lo = 1e300, hi = -1e300;
    for_slice(vol, axis, index, [&](std::int64_t, std::int64_t, float v) {
        lo = std::min(lo, static_cast<double>(v));
        hi = std::max(hi, static_cast<double>(v));
    });
    const double range = hi - lo;
    for_slice(vol, axis, index, [&](std::int64_t r, std::int64_t c, float v) {
        const double t = range > 0.0 ? (static_cast<double>(v) - lo) / range : 0.0;
        img.pixels[r * g.cols + c] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(t, 0.0, 1.0)));
    });
    return img;
}

std::array<std::uint8_t, 3> label_color(std::uint16_t label) {
    if (label == 0) return {0, 0, 0};
    const std::uint64_t h = mix64(0x9e3779b97f4a7c15ULL ^ label);
    // Keep every channel away from black so labels stay visible.
    return {static_cast<std::uint8_t>(64 + (h & 0xbf)), static_cast<std::uint8_t>(64 + ((h >> 8) & 0xbf)),
            static_cast<std::uint8_t>(64 + ((h >> 16) & 0xbf))};
}

Image slice_labels(const LabelVolume &labels, int axis, std::int64_t index) {
    const auto g = slice_geometry(labels.meta, axis, index);
    Image img{g.cols, g.rows, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(g.rows * g.cols * 3))};
    for_slice(labels, axis, index, [&](std::int64_t r, std::int64_t c, std::uint16_t v) {
        const auto col = label_color(v);
        std::copy(col.begin(), col.end(), img.pixels.begin() + 3 * (r * g.cols + c));
    });
    return img;
}

}  // namespace voxsynth::io
