#pragma once

// Dense 3D grids shared by every module.
//
// Layout contract: voxel (i,j,k) lives at linear index k + d2*(j + d1*i),
// i.e. axis 2 varies fastest. Multi-channel grids store the C values of a
// voxel contiguously (voxel-major).

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "voxsynth/error.hpp"

namespace voxsynth {

using Index3 = std::array<std::int64_t, 3>;
using Vec3 = std::array<double, 3>;

struct GridMeta {
    Index3 dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};

    static GridMeta cube(std::int64_t n) { return GridMeta{{n, n, n}, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}}; }

    std::int64_t voxel_count() const noexcept { return dims[0] * dims[1] * dims[2]; }

    std::int64_t linear(std::int64_t i, std::int64_t j, std::int64_t k) const noexcept {
        return k + dims[2] * (j + dims[1] * i);
    }
    std::int64_t linear(const Index3 &v) const noexcept { return linear(v[0], v[1], v[2]); }

    Index3 delinear(std::int64_t idx) const noexcept {
        const std::int64_t k = idx % dims[2];
        const std::int64_t rest = idx / dims[2];
        return {rest / dims[1], rest % dims[1], k};
    }

    bool contains(std::int64_t i, std::int64_t j, std::int64_t k) const noexcept {
        return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
    }

    // Throws ErrorCode::invalid_argument unless dims >= 1 and spacing > 0.
    void validate() const;

    bool operator==(const GridMeta &) const = default;
};

// Same voxel lattice (dims and spacing). Origins may differ by float noise
// after a file round-trip, so they are compared with a tolerance.
bool same_lattice(const GridMeta &a, const GridMeta &b);
void require_same_lattice(const GridMeta &a, const GridMeta &b, const char *what);

template <class T>
struct Volume {
    GridMeta meta;
    std::vector<T> values;

    Volume() = default;
    explicit Volume(const GridMeta &m, T fill = T{})
        : meta(m), values(static_cast<std::size_t>(m.voxel_count()), fill) {
        meta.validate();
    }

    T &at(std::int64_t i, std::int64_t j, std::int64_t k) { return values[meta.linear(i, j, k)]; }
    const T &at(std::int64_t i, std::int64_t j, std::int64_t k) const { return values[meta.linear(i, j, k)]; }
    T &operator[](std::int64_t idx) { return values[static_cast<std::size_t>(idx)]; }
    const T &operator[](std::int64_t idx) const { return values[static_cast<std::size_t>(idx)]; }

    std::int64_t size() const noexcept { return static_cast<std::int64_t>(values.size()); }

    bool operator==(const Volume &) const = default;
};

using IntensityVolume = Volume<float>;
using ScalarField = Volume<float>;
using LabelVolume = Volume<std::uint16_t>;
using MaskVolume = Volume<std::uint8_t>;

// Largest label present (K). Zero for an all-background map.
std::uint16_t max_label(const LabelVolume &labels);

// C-vector per voxel.
struct FeatureVolume {
    GridMeta meta;
    int channels = 1;
    std::vector<float> values;

    FeatureVolume() = default;
    FeatureVolume(const GridMeta &m, int c, float fill = 0.0f);

    std::span<float> voxel(std::int64_t idx) {
        return {values.data() + idx * channels, static_cast<std::size_t>(channels)};
    }
    std::span<const float> voxel(std::int64_t idx) const {
        return {values.data() + idx * channels, static_cast<std::size_t>(channels)};
    }
};

// u(x) in voxel units; the mapping is phi(x) = x + u(x).
struct DisplacementField {
    GridMeta meta;
    std::vector<float> values;  // 3 per voxel

    DisplacementField() = default;
    explicit DisplacementField(const GridMeta &m);

    Vec3 at(std::int64_t idx) const {
        const float *p = values.data() + 3 * idx;
        return {p[0], p[1], p[2]};
    }
    void set(std::int64_t idx, const Vec3 &u) {
        float *p = values.data() + 3 * idx;
        p[0] = static_cast<float>(u[0]);
        p[1] = static_cast<float>(u[1]);
        p[2] = static_cast<float>(u[2]);
    }
};

// Interpolation. Coordinates are continuous voxel coordinates; anything
// outside the grid is clamped to the boundary voxel.
double trilinear_sample(const Volume<float> &vol, const Vec3 &p);

// Round half away from zero, then clamp.
Index3 nearest_voxel(const GridMeta &meta, const Vec3 &p);

template <class T>
T nearest_sample(const Volume<T> &vol, const Vec3 &p) {
    return vol.values[vol.meta.linear(nearest_voxel(vol.meta, p))];
}

// Corner indices and weights of a clamped trilinear stencil. Reused by the
// multi-channel warps so that every path interpolates identically.
struct TrilinearStencil {
    std::array<std::int64_t, 8> index;
    std::array<double, 8> weight;
};
TrilinearStencil trilinear_stencil(const GridMeta &meta, const Vec3 &p);

// Min-max normalisation to [0,1]. A (numerically) constant volume is only
// clamped into [0,1], so constants survive every stage unchanged.
void minmax_normalize(Volume<float> &vol);

}  // namespace voxsynth
