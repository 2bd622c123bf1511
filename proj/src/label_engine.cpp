#include "voxsynth/label_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "voxsynth/morphology.hpp"
#include "voxsynth/noise.hpp"

namespace voxsynth {
using nlohmann::json;

namespace {

void check_range(const Range &r, const char *name) {
    if (!(r.lo <= r.hi)) fail(ErrorCode::invalid_argument, std::string(name) + ": range lower bound exceeds upper");
}
void check_range(const IntRange &r, const char *name) {
    if (r.lo > r.hi) fail(ErrorCode::invalid_argument, std::string(name) + ": range lower bound exceeds upper");
}

}  // namespace

void LabelEngineConfig::validate() const {
    if (grid < 8) fail(ErrorCode::invalid_argument, "grid must be >= 8");
    check_range(n_templates, "n_templates");
    if (n_templates.lo < 1) fail(ErrorCode::invalid_argument, "n_templates must be >= 1");
    if (n_templates.hi > 65533) fail(ErrorCode::invalid_argument, "n_templates exceeds the uint16 label budget");
    for (double t : {p_fg_threshold, p_envelope_threshold}) {
        if (!(t >= 0.0 && t <= 1.0)) fail(ErrorCode::invalid_argument, "branch thresholds must lie in [0,1]");
    }
    check_range(sphere_radius, "sphere_radius");
    check_range(sphere_center, "sphere_center");
    check_range(perlin_sigma, "perlin_sigma");
    check_range(envelope_width, "envelope_width");
    if (envelope_width.lo < 0) fail(ErrorCode::invalid_argument, "envelope width must be >= 0");
    check_range(translation, "translation");
    check_range(rotation, "rotation");
    check_range(scale_perturbation, "scale_perturbation");
    if (scale_perturbation.lo <= -1.0) fail(ErrorCode::invalid_argument, "scale perturbation must stay above -1");
    check_range(shear, "shear");
    if (median_radius < 0) fail(ErrorCode::invalid_argument, "median_radius must be >= 0");
    if (deformation_octaves.empty()) fail(ErrorCode::invalid_argument, "deformation_octaves must be non-empty");
}

void to_json(json &j, const LabelEngineConfig &c) {
    j = json{{"grid", c.grid},
             {"n_templates", c.n_templates},
             {"sample_with_replacement", c.sample_with_replacement},
             {"p_fg_threshold", c.p_fg_threshold},
             {"p_envelope_threshold", c.p_envelope_threshold},
             {"sphere_radius", c.sphere_radius},
             {"sphere_center", c.sphere_center},
             {"perlin_sigma", c.perlin_sigma},
             {"deformation_octaves", c.deformation_octaves},
             {"envelope_width", c.envelope_width},
             {"envelope_outer_only", c.envelope_outer_only},
             {"translation", c.translation},
             {"rotation", c.rotation},
             {"scale_perturbation", c.scale_perturbation},
             {"shear", c.shear},
             {"median_radius", c.median_radius}};
}

void from_json(const json &j, LabelEngineConfig &c) {
    auto get = [&](const char *key, auto &field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("grid", c.grid);
    get("n_templates", c.n_templates);
    get("sample_with_replacement", c.sample_with_replacement);
    get("p_fg_threshold", c.p_fg_threshold);
    get("p_envelope_threshold", c.p_envelope_threshold);
    get("sphere_radius", c.sphere_radius);
    get("sphere_center", c.sphere_center);
    get("perlin_sigma", c.perlin_sigma);
    get("deformation_octaves", c.deformation_octaves);
    get("envelope_width", c.envelope_width);
    get("envelope_outer_only", c.envelope_outer_only);
    get("translation", c.translation);
    get("rotation", c.rotation);
    get("scale_perturbation", c.scale_perturbation);
    get("shear", c.shear);
    get("median_radius", c.median_radius);
}

AffineParams sample_affine(const LabelEngineConfig &cfg, RngStream &rng) {
    AffineParams a;
    for (auto &v : a.rotation) v = rng.uniform(cfg.rotation.lo, cfg.rotation.hi);
    for (auto &v : a.translation) v = rng.uniform(cfg.translation.lo, cfg.translation.hi);
    for (auto &v : a.scale) v = 1.0 + rng.uniform(cfg.scale_perturbation.lo, cfg.scale_perturbation.hi);
    for (auto &v : a.shear) v = rng.uniform(cfg.shear.lo, cfg.shear.hi);
    return a;
}

void place_template(LabelVolume &labels, const BinaryTemplate &tmpl, std::uint16_t label,
                    const AffineParams &affine) {
    if (labels.meta.dims != tmpl.meta().dims) {
        fail(ErrorCode::dimension_mismatch, "template and label map dimensions differ");
    }
    const auto bounds = mask_bounds(tmpl.mask);
    if (!bounds) return;
    const auto &meta = labels.meta;
    const AffineTransform xf(affine, grid_center(meta));

    // Output region: image of the (half-voxel padded) template box.
    Vec3 out_lo{1e300, 1e300, 1e300}, out_hi{-1e300, -1e300, -1e300};
    for (int c = 0; c < 8; ++c) {
        const Vec3 corner{(c & 1) ? bounds->hi[0] + 0.5 : bounds->lo[0] - 0.5,
                          (c & 2) ? bounds->hi[1] + 0.5 : bounds->lo[1] - 0.5,
                          (c & 4) ? bounds->hi[2] + 0.5 : bounds->lo[2] - 0.5};
        const Vec3 y = xf.forward(corner);
        for (int a = 0; a < 3; ++a) {
            out_lo[a] = std::min(out_lo[a], y[a]);
            out_hi[a] = std::max(out_hi[a], y[a]);
        }
    }
    Index3 lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
        lo[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(out_lo[a])) - 1);
        hi[a] = std::min<std::int64_t>(meta.dims[a] - 1, static_cast<std::int64_t>(std::ceil(out_hi[a])) + 1);
        if (lo[a] > hi[a]) return;
    }
    for (std::int64_t i = lo[0]; i <= hi[0]; ++i)
        for (std::int64_t j = lo[1]; j <= hi[1]; ++j)
            for (std::int64_t k = lo[2]; k <= hi[2]; ++k) {
                const Vec3 p = xf.inverse_map({static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)});
                const std::int64_t si = static_cast<std::int64_t>(std::round(p[0]));
                const std::int64_t sj = static_cast<std::int64_t>(std::round(p[1]));
                const std::int64_t sk = static_cast<std::int64_t>(std::round(p[2]));
                if (si < bounds->lo[0] || si > bounds->hi[0] || sj < bounds->lo[1] || sj > bounds->hi[1] ||
                    sk < bounds->lo[2] || sk > bounds->hi[2]) {
                    continue;
                }
                if (tmpl.mask.at(si, sj, sk)) labels.at(i, j, k) = label;
            }
}

LabelVolume median_smooth(const LabelVolume &labels, int radius) {
    if (radius < 0) fail(ErrorCode::invalid_argument, "median radius must be >= 0");
    if (radius == 0) return labels;
    const auto &d = labels.meta.dims;
    LabelVolume out(labels.meta);
    const int w = 2 * radius + 1;
    std::vector<std::uint16_t> buf(static_cast<std::size_t>(w) * w * w);
    std::vector<std::int64_t> ni(w), nj(w), nk(w);
    for (std::int64_t i = 0; i < d[0]; ++i) {
        for (int a = 0; a < w; ++a) ni[a] = std::clamp<std::int64_t>(i + a - radius, 0, d[0] - 1);
        for (std::int64_t j = 0; j < d[1]; ++j) {
            for (int a = 0; a < w; ++a) nj[a] = std::clamp<std::int64_t>(j + a - radius, 0, d[1] - 1);
            for (std::int64_t k = 0; k < d[2]; ++k) {
                for (int a = 0; a < w; ++a) nk[a] = std::clamp<std::int64_t>(k + a - radius, 0, d[2] - 1);
                std::size_t n = 0;
                bool uniform = true;
                const std::uint16_t first = labels.at(ni[0], nj[0], nk[0]);
                for (int a = 0; a < w; ++a)
                    for (int b = 0; b < w; ++b) {
                        const std::uint16_t *row = labels.values.data() + labels.meta.linear(ni[a], nj[b], 0);
                        for (int c = 0; c < w; ++c) {
                            const std::uint16_t v = row[nk[c]];
                            uniform = uniform && v == first;
                            buf[n++] = v;
                        }
                    }
                if (uniform) {
                    out.at(i, j, k) = first;
                    continue;
                }
                auto mid = buf.begin() + static_cast<std::ptrdiff_t>(n / 2);
                std::nth_element(buf.begin(), mid, buf.begin() + static_cast<std::ptrdiff_t>(n));
                out.at(i, j, k) = *mid;
            }
        }
    }
    return out;
}

ForegroundMask apply_foreground_mask(LabelVolume &labels, const LabelEngineConfig &cfg, RngStream &rng) {
    ForegroundMask fg;
    fg.p_fg = rng.uniform();
    if (!(fg.p_fg > cfg.p_fg_threshold)) return fg;

    fg.applied = true;
    fg.radius = rng.uniform_int(cfg.sphere_radius.lo, cfg.sphere_radius.hi);
    for (auto &c : fg.center) c = rng.uniform_int(cfg.sphere_center.lo, cfg.sphere_center.hi);
    fg.sigma = rng.uniform(cfg.perlin_sigma.lo, cfg.perlin_sigma.hi);
    auto deform_rng = rng.derive("deformation", 0);
    const auto field = make_perlin_displacement(labels.meta, cfg.deformation_octaves, fg.sigma, deform_rng);
    const Vec3 centre{static_cast<double>(fg.center[0]), static_cast<double>(fg.center[1]),
                      static_cast<double>(fg.center[2])};
    fg.mask = deformed_ball(labels.meta, centre, static_cast<double>(fg.radius), &field);

    for (std::size_t i = 0; i < labels.values.size(); ++i) {
        auto &v = labels.values[i];
        if (fg.mask.values[i]) {
            if (v == 0xFFFF) fail(ErrorCode::invalid_argument, "label overflow during foreground increment");
            v = static_cast<std::uint16_t>(v + 1);
        } else {
            v = 0;
        }
    }
    return fg;
}

MaskVolume envelope_shell(const MaskVolume &sphere, int width) {
    auto shell = dilate_ball(sphere, width);
    const auto inner = erode_ball(sphere, width);
    for (std::size_t i = 0; i < shell.values.size(); ++i) shell.values[i] = shell.values[i] && !inner.values[i];
    return shell;
}

void add_envelope(LabelVolume &labels, ForegroundMask &fg, const LabelEngineConfig &cfg, RngStream &rng) {
    if (!fg.applied) fail(ErrorCode::precondition, "add_envelope needs an applied foreground mask");
    require_same_lattice(labels.meta, fg.mask.meta, "add_envelope");
    fg.p_envelope = rng.uniform();
    if (!(fg.p_envelope > cfg.p_envelope_threshold)) return;
    const int w = static_cast<int>(rng.uniform_int(cfg.envelope_width.lo, cfg.envelope_width.hi));
    auto shell = envelope_shell(fg.mask, w);
    for (std::size_t i = 0; i < labels.values.size(); ++i) {
        if (!shell.values[i]) continue;
        if (cfg.envelope_outer_only && fg.mask.values[i]) continue;
        auto &v = labels.values[i];
        if (v == 0xFFFF) fail(ErrorCode::invalid_argument, "label overflow during envelope increment");
        v = static_cast<std::uint16_t>(v + 1);
    }
    fg.envelope_applied = true;
    fg.envelope_width = w;
}

json to_json(const LabelProvenance &p) {
    json affines = json::array();
    for (const auto &a : p.affines) {
        affines.push_back({{"rotation", a.rotation}, {"translation", a.translation}, {"scale", a.scale},
                           {"shear", a.shear}});
    }
    json j{{"n_templates", p.n_templates},
           {"template_indices", p.template_indices},
           {"affines", affines},
           {"fg_applied", p.fg_applied},
           {"p_fg", p.p_fg},
           {"envelope_applied", p.envelope_applied},
           {"p_envelope", p.p_envelope},
           {"envelope_width", p.envelope_width ? json(*p.envelope_width) : json(nullptr)}};
    if (p.fg_applied) {
        j["sphere"] = {{"radius", p.sphere_radius}, {"center", p.sphere_center}, {"sigma", p.sphere_sigma}};
    }
    return j;
}

LabelMap synthesize_label_map(const TemplateBank &bank, const LabelEngineConfig &cfg, const RngStream &rng) {
    cfg.validate();
    if (bank.empty()) fail(ErrorCode::empty_input, "template bank is empty");

    LabelMap out;
    auto &prov = out.provenance;
    auto count_rng = rng.derive("count", 0);
    prov.n_templates = count_rng.uniform_int(cfg.n_templates.lo, cfg.n_templates.hi);

    auto pick_rng = rng.derive("pick", 0);
    const auto bank_size = static_cast<std::int64_t>(bank.size());
    if (cfg.sample_with_replacement) {
        for (std::int64_t i = 0; i < prov.n_templates; ++i) {
            prov.template_indices.push_back(static_cast<std::size_t>(pick_rng.uniform_int(0, bank_size - 1)));
        }
    } else {
        if (prov.n_templates > bank_size) {
            fail(ErrorCode::invalid_argument, "sampling without replacement needs at least N templates in the bank");
        }
        std::vector<std::size_t> order(bank.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::int64_t i = 0; i < prov.n_templates; ++i) {
            const auto j = pick_rng.uniform_int(i, bank_size - 1);
            std::swap(order[i], order[j]);
            prov.template_indices.push_back(order[i]);
        }
    }

    LabelVolume labels(GridMeta::cube(cfg.grid), 0);
    for (std::int64_t i = 0; i < prov.n_templates; ++i) {
        const auto tmpl = bank.at(prov.template_indices[i]);
        auto affine_rng = rng.derive("affine", static_cast<std::uint64_t>(i + 1));
        const auto affine = sample_affine(cfg, affine_rng);
        prov.affines.push_back(affine);
        place_template(labels, *tmpl, static_cast<std::uint16_t>(i + 1), affine);
    }
    labels = median_smooth(labels, cfg.median_radius);

    auto fg_rng = rng.derive("foreground", 0);
    auto fg = apply_foreground_mask(labels, cfg, fg_rng);
    prov.fg_applied = fg.applied;
    prov.p_fg = fg.p_fg;
    if (fg.applied) {
        prov.sphere_radius = fg.radius;
        prov.sphere_center = fg.center;
        prov.sphere_sigma = fg.sigma;
        auto env_rng = rng.derive("envelope", 0);
        add_envelope(labels, fg, cfg, env_rng);
        prov.envelope_applied = fg.envelope_applied;
        prov.p_envelope = fg.p_envelope;
        prov.envelope_width = fg.envelope_width;
    }
    out.labels = std::move(labels);
    return out;
}

}  // namespace voxsynth
