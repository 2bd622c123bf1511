#include "voxsynth/noise.hpp"

#include <algorithm>
#include <cmath>

namespace voxsynth {
namespace {

// Linear interpolation of one axis of a C-ordered 3D array from `n` lattice
// nodes onto `out_len` voxels at spacing 1/scale.
std::vector<double> upsample_axis(const std::vector<double> &in, const Index3 &in_dims, int axis,
                                  std::int64_t out_len, double scale) {
    Index3 out_dims = in_dims;
    out_dims[axis] = out_len;
    std::vector<std::int64_t> lo(out_len);
    std::vector<double> frac(out_len);
    const std::int64_t n = in_dims[axis];
    for (std::int64_t x = 0; x < out_len; ++x) {
        const double c = std::min(static_cast<double>(x) / scale, static_cast<double>(n - 1));
        const double fl = std::floor(c);
        lo[x] = std::min(static_cast<std::int64_t>(fl), n - 1);
        frac[x] = c - fl;
    }
    std::vector<double> out(static_cast<std::size_t>(out_dims[0] * out_dims[1] * out_dims[2]));
    const std::int64_t in_stride = axis == 0 ? in_dims[1] * in_dims[2] : (axis == 1 ? in_dims[2] : 1);
    for (std::int64_t i = 0; i < out_dims[0]; ++i) {
        for (std::int64_t j = 0; j < out_dims[1]; ++j) {
            for (std::int64_t k = 0; k < out_dims[2]; ++k) {
                const Index3 o{i, j, k};
                Index3 src = o;
                src[axis] = 0;
                const std::int64_t base = src[2] + in_dims[2] * (src[1] + in_dims[1] * src[0]);
                const std::int64_t x = o[axis];
                const std::int64_t l = lo[x];
                const std::int64_t h = std::min(l + 1, n - 1);
                const double f = frac[x];
                const double v = in[base + l * in_stride] * (1.0 - f) + in[base + h * in_stride] * f;
                out[k + out_dims[2] * (j + out_dims[1] * i)] = v;
            }
        }
    }
    return out;
}

}  // namespace

std::vector<double> smooth_noise(const GridMeta &meta, std::span<const double> octave_scales, RngStream &rng) {
    if (octave_scales.empty()) fail(ErrorCode::invalid_argument, "perlin noise needs at least one octave scale");
    const auto &d = meta.dims;
    std::vector<double> sum(static_cast<std::size_t>(meta.voxel_count()), 0.0);
    for (std::size_t o = 0; o < octave_scales.size(); ++o) {
        const double s = octave_scales[o];
        if (!(s > 0.0)) fail(ErrorCode::invalid_argument, "octave scales must be > 0");
        Index3 n{};
        for (int a = 0; a < 3; ++a) n[a] = static_cast<std::int64_t>(std::floor((d[a] - 1) / s)) + 2;
        auto stream = rng.derive("octave", o);
        std::vector<double> lattice(static_cast<std::size_t>(n[0] * n[1] * n[2]));
        for (auto &v : lattice) v = stream.normal();
        auto a2 = upsample_axis(lattice, n, 2, d[2], s);
        auto a1 = upsample_axis(a2, {n[0], n[1], d[2]}, 1, d[1], s);
        auto a0 = upsample_axis(a1, {n[0], d[1], d[2]}, 0, d[0], s);
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += a0[i];
    }
    return sum;
}

ScalarField make_perlin_field(const GridMeta &meta, std::span<const double> octave_scales, double amplitude,
                              RngStream &rng) {
    ScalarField field(meta, 1.0f);
    auto noise = smooth_noise(meta, octave_scales, rng);
    if (amplitude == 0.0) return field;
    double mean = 0.0;
    for (double v : noise) mean += v;
    mean /= static_cast<double>(noise.size());
    double maxdev = 0.0;
    for (double v : noise) maxdev = std::max(maxdev, std::abs(v - mean));
    if (maxdev == 0.0) return field;
    for (std::size_t i = 0; i < noise.size(); ++i) {
        const double f = 1.0 + amplitude * (noise[i] - mean) / maxdev;
        field.values[i] = static_cast<float>(std::clamp(f, 1.0 - amplitude, 1.0 + amplitude));
    }
    return field;
}

DisplacementField make_perlin_displacement(const GridMeta &meta, std::span<const double> octave_scales,
                                           double max_displacement, RngStream &rng) {
    DisplacementField field(meta);
    std::vector<double> comp[3];
    for (int c = 0; c < 3; ++c) {
        auto stream = rng.derive("component", static_cast<std::uint64_t>(c));
        comp[c] = smooth_noise(meta, octave_scales, stream);
    }
    if (max_displacement == 0.0) return field;
    double peak = 0.0;
    for (std::size_t i = 0; i < comp[0].size(); ++i) {
        const double n2 = comp[0][i] * comp[0][i] + comp[1][i] * comp[1][i] + comp[2][i] * comp[2][i];
        peak = std::max(peak, n2);
    }
    peak = std::sqrt(peak);
    if (peak == 0.0) return field;
    const double gain = max_displacement / peak;
    for (std::size_t i = 0; i < comp[0].size(); ++i) {
        field.values[3 * i + 0] = static_cast<float>(comp[0][i] * gain);
        field.values[3 * i + 1] = static_cast<float>(comp[1][i] * gain);
        field.values[3 * i + 2] = static_cast<float>(comp[2][i] * gain);
    }
    return field;
}


MaskVolume deformed_ball(const GridMeta &meta, const Vec3 &center, double radius, const DisplacementField *field) {
    if (field) require_same_lattice(meta, field->meta, "deformed_ball");
    MaskVolume out(meta, 0);
    const double r2 = radius * radius;
    for (std::int64_t i = 0; i < meta.dims[0]; ++i)
        for (std::int64_t j = 0; j < meta.dims[1]; ++j)
            for (std::int64_t k = 0; k < meta.dims[2]; ++k) {
                const std::int64_t idx = meta.linear(i, j, k);
                double x = static_cast<double>(i) - center[0];
                double y = static_cast<double>(j) - center[1];
                double z = static_cast<double>(k) - center[2];
                if (field) {
                    const float *u = field->values.data() + 3 * idx;
                    x += u[0];
                    y += u[1];
                    z += u[2];
                }
                out.values[idx] = (x * x + y * y + z * z <= r2) ? 1 : 0;
            }
    return out;
}

}  // namespace voxsynth
