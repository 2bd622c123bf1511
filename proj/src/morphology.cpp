#include "voxsynth/morphology.hpp"

#include <algorithm>
#include <limits>

namespace voxsynth {
namespace {

constexpr double kFar = 1e20;

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher), one line.
void distance_1d(const double *f, std::int64_t n, double *d, std::vector<std::int64_t> &v, std::vector<double> &z) {
    v.resize(static_cast<std::size_t>(n));
    z.resize(static_cast<std::size_t>(n + 1));
    std::int64_t k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (std::int64_t q = 1; q < n; ++q) {
        const double fq = f[q] + static_cast<double>(q * q);
        double s = (fq - (f[v[k]] + static_cast<double>(v[k] * v[k]))) / static_cast<double>(2 * q - 2 * v[k]);
        while (s <= z[k]) {
            --k;
            s = (fq - (f[v[k]] + static_cast<double>(v[k] * v[k]))) / static_cast<double>(2 * q - 2 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (std::int64_t q = 0; q < n; ++q) {
        while (z[k + 1] < static_cast<double>(q)) ++k;
        const double dq = static_cast<double>(q - v[k]);
        d[q] = dq * dq + f[v[k]];
    }
}

// In-place separable transform of a C-ordered grid of sampled costs.
void transform_3d(std::vector<double> &g, const Index3 &dims) {
    std::vector<std::int64_t> v;
    std::vector<double> z;
    const std::int64_t nmax = std::max({dims[0], dims[1], dims[2]});
    std::vector<double> line(nmax), out(nmax);
    const std::int64_t strides[3] = {dims[1] * dims[2], dims[2], 1};
    for (int axis = 0; axis < 3; ++axis) {
        const std::int64_t n = dims[axis];
        const std::int64_t stride = strides[axis];
        const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
        for (std::int64_t p = 0; p < dims[a1]; ++p)
            for (std::int64_t q = 0; q < dims[a2]; ++q) {
                const std::int64_t base = p * strides[a1] + q * strides[a2];
                for (std::int64_t x = 0; x < n; ++x) line[x] = g[base + x * stride];
                distance_1d(line.data(), n, out.data(), v, z);
                for (std::int64_t x = 0; x < n; ++x) g[base + x * stride] = out[x];
            }
    }
}

}  // namespace

std::vector<double> squared_distance_transform(const MaskVolume &mask, std::uint8_t target) {
    std::vector<double> g(mask.values.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = mask.values[i] == target ? 0.0 : kFar;
    transform_3d(g, mask.meta.dims);
    return g;
}

MaskVolume dilate_ball(const MaskVolume &mask, int radius) {
    if (radius < 0) fail(ErrorCode::invalid_argument, "dilation radius must be >= 0");
    const auto d2 = squared_distance_transform(mask, 1);
    const double r2 = static_cast<double>(radius) * radius;
    MaskVolume out(mask.meta, 0);
    for (std::size_t i = 0; i < d2.size(); ++i) out.values[i] = d2[i] <= r2 ? 1 : 0;
    return out;
}

MaskVolume erode_ball(const MaskVolume &mask, int radius) {
    if (radius < 0) fail(ErrorCode::invalid_argument, "erosion radius must be >= 0");
    // Pad by one background voxel: the closest outside point to any interior
    // voxel always lies in that ring.
    const auto &d = mask.meta.dims;
    const Index3 pd{d[0] + 2, d[1] + 2, d[2] + 2};
    std::vector<double> g(static_cast<std::size_t>(pd[0] * pd[1] * pd[2]), 0.0);
    for (std::int64_t i = 0; i < d[0]; ++i)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t k = 0; k < d[2]; ++k) {
                const std::int64_t pi = (k + 1) + pd[2] * ((j + 1) + pd[1] * (i + 1));
                g[pi] = mask.at(i, j, k) ? kFar : 0.0;
            }
    transform_3d(g, pd);
    const double r2 = static_cast<double>(radius) * radius;
    MaskVolume out(mask.meta, 0);
    for (std::int64_t i = 0; i < d[0]; ++i)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t k = 0; k < d[2]; ++k) {
                const std::int64_t pi = (k + 1) + pd[2] * ((j + 1) + pd[1] * (i + 1));
                out.at(i, j, k) = g[pi] > r2 ? 1 : 0;
            }
    return out;
}

}  // namespace voxsynth
