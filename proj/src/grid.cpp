#include "voxsynth/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace voxsynth {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::dimension_mismatch: return "dimension_mismatch";
        case ErrorCode::empty_input: return "empty_input";
        case ErrorCode::precondition: return "precondition";
        case ErrorCode::io_error: return "io_error";
        case ErrorCode::malformed_header: return "malformed_header";
        case ErrorCode::unsupported_dtype: return "unsupported_dtype";
        case ErrorCode::too_many_dims: return "too_many_dims";
    }
    return "unknown";
}

void GridMeta::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1) {
            fail(ErrorCode::invalid_argument, "grid dimension " + std::to_string(a) + " must be >= 1");
        }
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
            fail(ErrorCode::invalid_argument, "grid spacing " + std::to_string(a) + " must be > 0");
        }
    }
}

bool same_lattice(const GridMeta &a, const GridMeta &b) {
    if (a.dims != b.dims) return false;
    for (int i = 0; i < 3; ++i) {
        if (std::abs(a.spacing[i] - b.spacing[i]) > 1e-6 * std::max(1.0, std::abs(a.spacing[i]))) return false;
        if (std::abs(a.origin[i] - b.origin[i]) > 1e-4 * std::max(1.0, std::abs(a.origin[i]))) return false;
    }
    return true;
}

void require_same_lattice(const GridMeta &a, const GridMeta &b, const char *what) {
    if (!same_lattice(a, b)) {
        fail(ErrorCode::dimension_mismatch,
             std::string(what) + ": grids differ (" + std::to_string(a.dims[0]) + "x" + std::to_string(a.dims[1]) +
                 "x" + std::to_string(a.dims[2]) + " vs " + std::to_string(b.dims[0]) + "x" +
                 std::to_string(b.dims[1]) + "x" + std::to_string(b.dims[2]) + ")");
    }
}

std::uint16_t max_label(const LabelVolume &labels) {
    std::uint16_t m = 0;
    for (auto v : labels.values) m = std::max(m, v);
    return m;
}

FeatureVolume::FeatureVolume(const GridMeta &m, int c, float fill) : meta(m), channels(c) {
    meta.validate();
    if (c < 1) fail(ErrorCode::invalid_argument, "feature volume needs at least one channel");
    values.assign(static_cast<std::size_t>(m.voxel_count() * c), fill);
}

DisplacementField::DisplacementField(const GridMeta &m) : meta(m) {
    meta.validate();
    values.assign(static_cast<std::size_t>(m.voxel_count() * 3), 0.0f);
}

TrilinearStencil trilinear_stencil(const GridMeta &meta, const Vec3 &p) {
    std::array<std::int64_t, 3> lo{}, hi{};
    std::array<double, 3> frac{};
    for (int a = 0; a < 3; ++a) {
        const double maxc = static_cast<double>(meta.dims[a] - 1);
        const double c = std::clamp(p[a], 0.0, maxc);
        const double fl = std::floor(c);
        lo[a] = static_cast<std::int64_t>(fl);
        hi[a] = std::min(lo[a] + 1, meta.dims[a] - 1);
        frac[a] = c - fl;
    }
    TrilinearStencil s{};
    int n = 0;
    for (int di = 0; di < 2; ++di) {
        const double wi = di ? frac[0] : 1.0 - frac[0];
        const std::int64_t i = di ? hi[0] : lo[0];
        for (int dj = 0; dj < 2; ++dj) {
            const double wj = dj ? frac[1] : 1.0 - frac[1];
            const std::int64_t j = dj ? hi[1] : lo[1];
            for (int dk = 0; dk < 2; ++dk) {
                const double wk = dk ? frac[2] : 1.0 - frac[2];
                const std::int64_t k = dk ? hi[2] : lo[2];
                s.index[n] = meta.linear(i, j, k);
                s.weight[n] = wi * wj * wk;
                ++n;
            }
        }
    }
    return s;
}

double trilinear_sample(const Volume<float> &vol, const Vec3 &p) {
    const auto s = trilinear_stencil(vol.meta, p);
    double acc = 0.0;
    for (int n = 0; n < 8; ++n) {
        if (s.weight[n] != 0.0) acc += s.weight[n] * static_cast<double>(vol.values[s.index[n]]);
    }
    return acc;
}

Index3 nearest_voxel(const GridMeta &meta, const Vec3 &p) {
    Index3 out{};
    for (int a = 0; a < 3; ++a) {
        const double r = std::round(p[a]);
        const double c = std::clamp(r, 0.0, static_cast<double>(meta.dims[a] - 1));
        out[a] = static_cast<std::int64_t>(c);
    }
    return out;
}

void minmax_normalize(Volume<float> &vol) {
    if (vol.values.empty()) return;
    const auto [mn, mx] = std::minmax_element(vol.values.begin(), vol.values.end());
    const double lo = *mn;
    const double hi = *mx;
    const double range = hi - lo;
    if (range < 1e-8) {
        for (auto &v : vol.values) v = std::clamp(v, 0.0f, 1.0f);
        return;
    }
    for (auto &v : vol.values) v = static_cast<float>((static_cast<double>(v) - lo) / range);
}

}  // namespace voxsynth
