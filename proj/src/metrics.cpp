#include "voxsynth/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "voxsynth/geometry.hpp"

namespace voxsynth {
using nlohmann::json;

DiceReport dice(const LabelVolume &a, const LabelVolume &b, const std::set<std::uint16_t> &labels) {
    require_same_lattice(a.meta, b.meta, "dice");
    DiceReport rep;
    rep.labels = labels;
    if (rep.labels.empty()) {
        for (auto v : a.values) {
            if (v) rep.labels.insert(v);
        }
        for (auto v : b.values) {
            if (v) rep.labels.insert(v);
        }
    }
    std::map<std::uint16_t, std::int64_t> ca, cb, both;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        ++ca[a.values[i]];
        ++cb[b.values[i]];
        if (a.values[i] == b.values[i]) ++both[a.values[i]];
    }
    double sum = 0.0;
    std::int64_t counted = 0;
    for (auto l : rep.labels) {
        const double na = static_cast<double>(ca[l]), nb = static_cast<double>(cb[l]);
        const double d = (na + nb) == 0.0 ? 1.0 : 2.0 * static_cast<double>(both[l]) / (na + nb);
        rep.per_label[l] = d;
        if (l != 0) {
            sum += d;
            ++counted;
        }
    }
    // No foreground label to average: the maps agree on everything there is.
    rep.mean = counted ? sum / static_cast<double>(counted) : 1.0;
    return rep;
}

json to_json(const DiceReport &r) {
    json per = json::object();
    for (const auto &[l, d] : r.per_label) per[std::to_string(l)] = d;
    return {{"per_label", per}, {"mean", r.mean}, {"labels", r.labels}};
}

namespace {
Vec3 displaced(const GridMeta &m, const DisplacementField &f, std::int64_t idx) {
    const auto x = m.delinear(idx);
    const Vec3 u = f.at(idx);
    return {static_cast<double>(x[0]) + u[0], static_cast<double>(x[1]) + u[1], static_cast<double>(x[2]) + u[2]};
}
}  // namespace

IntensityVolume warp(const IntensityVolume &vol, const DisplacementField &field, Interp interp) {
    require_same_lattice(vol.meta, field.meta, "warp");
    IntensityVolume out(vol.meta);
    for (std::int64_t i = 0; i < vol.size(); ++i) {
        const Vec3 p = displaced(vol.meta, field, i);
        out.values[i] = interp == Interp::nearest ? nearest_sample(vol, p) : static_cast<float>(trilinear_sample(vol, p));
    }
    return out;
}

LabelVolume warp(const LabelVolume &labels, const DisplacementField &field) {
    require_same_lattice(labels.meta, field.meta, "warp");
    LabelVolume out(labels.meta);
    for (std::int64_t i = 0; i < labels.size(); ++i) out.values[i] = nearest_sample(labels, displaced(labels.meta, field, i));
    return out;
}

FeatureVolume warp(const FeatureVolume &features, const DisplacementField &field) {
    require_same_lattice(features.meta, field.meta, "warp");
    FeatureVolume out(features.meta, features.channels);
    const auto n = features.meta.voxel_count();
    for (std::int64_t i = 0; i < n; ++i) {
        const auto s = trilinear_stencil(features.meta, displaced(features.meta, field, i));
        auto dst = out.voxel(i);
        for (int c = 0; c < features.channels; ++c) {
            double acc = 0.0;
            for (int t = 0; t < 8; ++t) {
                if (s.weight[t] != 0.0) acc += s.weight[t] * features.voxel(s.index[t])[c];
            }
            dst[c] = static_cast<float>(acc);
        }
    }
    return out;
}

std::vector<double> jacobian_determinant(const DisplacementField &field) {
    const auto &d = field.meta.dims;
    for (auto n : d) {
        if (n < 3) fail(ErrorCode::invalid_argument, "Jacobian needs at least 3 voxels per axis");
    }
    const auto &m = field.meta;
    std::vector<double> det(static_cast<std::size_t>(m.voxel_count()));
    for (std::int64_t i = 0; i < d[0]; ++i)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t k = 0; k < d[2]; ++k) {
                const Index3 x{i, j, k};
                Mat3 jac = identity3();
                for (int a = 0; a < 3; ++a) {
                    Index3 lo = x, hi = x;
                    double h = 2.0;
                    if (x[a] == 0) {
                        hi[a] += 1;
                        h = 1.0;
                    } else if (x[a] == d[a] - 1) {
                        lo[a] -= 1;
                        h = 1.0;
                    } else {
                        lo[a] -= 1;
                        hi[a] += 1;
                    }
                    const Vec3 uh = field.at(m.linear(hi)), ul = field.at(m.linear(lo));
                    for (int c = 0; c < 3; ++c) jac[c][a] += (uh[c] - ul[c]) / h;
                }
                det[m.linear(x)] = determinant(jac);
            }
    return det;
}

FoldReport jacobian_folds(const DisplacementField &field) {
    const auto det = jacobian_determinant(field);
    FoldReport r;
    r.total_voxels = static_cast<std::int64_t>(det.size());
    r.min_determinant = *std::min_element(det.begin(), det.end());
    r.folding_voxels = std::count_if(det.begin(), det.end(), [](double v) { return v < 0.0; });
    r.fold_fraction = static_cast<double>(r.folding_voxels) / static_cast<double>(r.total_voxels);
    r.threshold_pass = r.fold_fraction < kFoldThreshold;
    return r;
}

json to_json(const FoldReport &r) {
    return {{"fold_fraction", r.fold_fraction}, {"folding_voxels", r.folding_voxels},
            {"total_voxels", r.total_voxels},   {"threshold_pass", r.threshold_pass},
            {"min_determinant", r.min_determinant}};
}

double feature_dissimilarity(const FeatureVolume &fixed, const FeatureVolume &moving, const DisplacementField &field,
                             double channel_weight, int margin) {
    if (fixed.channels != moving.channels) fail(ErrorCode::dimension_mismatch, "feature channel counts differ");
    require_same_lattice(fixed.meta, moving.meta, "feature_dissimilarity");
    if (margin < 0) fail(ErrorCode::invalid_argument, "margin must be non-negative");
    const auto warped = warp(moving, field);
    const auto &d = fixed.meta.dims;
    double sum = 0.0;
    std::int64_t count = 0;
    for (std::int64_t i = margin; i < d[0] - margin; ++i)
        for (std::int64_t j = margin; j < d[1] - margin; ++j)
            for (std::int64_t k = margin; k < d[2] - margin; ++k) {
                const auto idx = fixed.meta.linear(i, j, k);
                const auto a = fixed.voxel(idx), b = warped.voxel(idx);
                for (int c = 0; c < fixed.channels; ++c) {
                    const double diff = static_cast<double>(a[c]) - static_cast<double>(b[c]);
                    sum += diff * diff;
                }
                count += fixed.channels;
            }
    if (count == 0) fail(ErrorCode::empty_input, "margin leaves no voxels");
    return channel_weight * sum / static_cast<double>(count);
}

double diffusion_regularizer(const DisplacementField &field) {
    const auto &m = field.meta;
    const auto &d = m.dims;
    double total = 0.0;
    for (int a = 0; a < 3; ++a) {
        if (d[a] < 2) continue;
        double sum = 0.0;
        std::int64_t count = 0;
        for (std::int64_t i = 0; i < d[0]; ++i)
            for (std::int64_t j = 0; j < d[1]; ++j)
                for (std::int64_t k = 0; k < d[2]; ++k) {
                    Index3 x{i, j, k};
                    if (x[a] + 1 >= d[a]) continue;
                    Index3 y = x;
                    y[a] += 1;
                    const Vec3 u0 = field.at(m.linear(x)), u1 = field.at(m.linear(y));
                    for (int c = 0; c < 3; ++c) sum += (u1[c] - u0[c]) * (u1[c] - u0[c]);
                    count += 3;
                }
        total += sum / static_cast<double>(count);
    }
    return total / 3.0;
}

RegistrationObjective registration_objective(const FeatureVolume &fixed, const FeatureVolume &moving,
                                             const DisplacementField &field, double lambda, double channel_weight,
                                             int margin) {
    if (lambda < 0.0) fail(ErrorCode::invalid_argument, "lambda must be non-negative");
    RegistrationObjective r;
    r.data_term = feature_dissimilarity(fixed, moving, field, channel_weight, margin);
    r.reg_term = diffusion_regularizer(field);
    r.total = r.data_term + lambda * r.reg_term;
    return r;
}

json to_json(const RegistrationObjective &r) {
    return {{"total", r.total}, {"data_term", r.data_term}, {"reg_term", r.reg_term}};
}

}  // namespace voxsynth
