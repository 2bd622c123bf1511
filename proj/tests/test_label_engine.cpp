#include <cmath>
#include <numbers>

#include "doctest.h"
#include "voxsynth/geometry.hpp"
#include "voxsynth/label_engine.hpp"
#include "voxsynth/morphology.hpp"
#include "voxsynth/noise.hpp"

using namespace voxsynth;

namespace {

BinaryTemplate ball_template(std::int64_t n, const Vec3 &centre, double radius) {
    return {deformed_ball(GridMeta::cube(n), centre, radius, nullptr), "ball"};
}

LabelEngineConfig collapsed_affine_config() {
    LabelEngineConfig cfg;
    cfg.translation = {0, 0};
    cfg.rotation = {0, 0};
    cfg.scale_perturbation = {0, 0};
    cfg.shear = {0, 0};
    return cfg;
}

// Brute-force ball morphology with out-of-grid voxels as background.
MaskVolume brute_dilate(const MaskVolume &m, int r) {
    MaskVolume out(m.meta);
    const auto &d = m.meta.dims;
    for (std::int64_t n = 0; n < m.size(); ++n) {
        const auto p = m.meta.delinear(n);
        for (int a = -r; a <= r && !out[n]; ++a)
            for (int b = -r; b <= r && !out[n]; ++b)
                for (int c = -r; c <= r && !out[n]; ++c) {
                    if (a * a + b * b + c * c > r * r) continue;
                    const Index3 q{p[0] + a, p[1] + b, p[2] + c};
                    if (q[0] < 0 || q[1] < 0 || q[2] < 0 || q[0] >= d[0] || q[1] >= d[1] || q[2] >= d[2]) continue;
                    if (m.at(q[0], q[1], q[2])) out[n] = 1;
                }
    }
    return out;
}

MaskVolume brute_erode(const MaskVolume &m, int r) {
    MaskVolume out(m.meta);
    const auto &d = m.meta.dims;
    for (std::int64_t n = 0; n < m.size(); ++n) {
        const auto p = m.meta.delinear(n);
        bool all = true;
        for (int a = -r; a <= r && all; ++a)
            for (int b = -r; b <= r && all; ++b)
                for (int c = -r; c <= r && all; ++c) {
                    if (a * a + b * b + c * c > r * r) continue;
                    const Index3 q{p[0] + a, p[1] + b, p[2] + c};
                    if (q[0] < 0 || q[1] < 0 || q[2] < 0 || q[0] >= d[0] || q[1] >= d[1] || q[2] >= d[2]) {
                        all = false;
                    } else if (!m.at(q[0], q[1], q[2])) {
                        all = false;
                    }
                }
        out[n] = all;
    }
    return out;
}

// A stream whose first uniform draw satisfies `pred`.
template <class Pred>
RngStream stream_with_first_draw(Pred pred) {
    for (std::uint64_t s = 0;; ++s) {
        RngStream probe(s);
        if (pred(probe.uniform())) return RngStream(s);
    }
}

// Small-grid configuration for branch and mask tests.
LabelEngineConfig small_mask_config(std::int64_t n) {
    LabelEngineConfig cfg;
    cfg.grid = n;
    cfg.sphere_radius = {n / 4, n / 3};
    cfg.sphere_center = {n / 3, 2 * n / 3};
    cfg.deformation_octaves = {4.0, 8.0};
    return cfg;
}

}  // namespace

TEST_SUITE("label_engine") {
    TEST_CASE("affine transform: forward and inverse are mutual inverses") {
        const AffineParams p{{0.3, -0.7, 1.1}, {2.0, -1.0, 4.0}, {0.8, 1.3, 1.1}, {0.2, -0.1, 0.4}};
        const AffineTransform xf(p, {64, 64, 64});
        for (const Vec3 &x : {Vec3{0, 0, 0}, Vec3{10.5, 70.25, 127}, Vec3{64, 64, 64}}) {
            const auto y = xf.inverse_map(xf.forward(x));
            for (int a = 0; a < 3; ++a) CHECK(y[a] == doctest::Approx(x[a]).epsilon(1e-12));
        }
        const auto r = rotation_matrix({0.4, 0.5, 0.6});
        CHECK(determinant(r) == doctest::Approx(1.0).epsilon(1e-12));
        const auto rt_r = matmul(inverse(r), r);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) CHECK(rt_r[a][b] == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-12));
        CHECK_THROWS_AS(AffineTransform(AffineParams{{}, {}, {1.0, 0.0, 1.0}, {}}, {0, 0, 0}), Error);
    }

    TEST_CASE("sample_affine: collapsed ranges give the identity") {
        RngStream rng(1);
        CHECK(sample_affine(collapsed_affine_config(), rng) == AffineParams{});
    }

    TEST_CASE("sample_affine: a fixed stream gives identical parameters") {
        const LabelEngineConfig cfg;
        auto a = RngStream(8).derive("affine", 1);
        auto b = RngStream(8).derive("affine", 1);
        CHECK(sample_affine(cfg, a) == sample_affine(cfg, b));
    }

    TEST_CASE("sample_affine: 10^4 draws stay inside the declared ranges and cover them") {
        const LabelEngineConfig cfg;
        RngStream rng(123);
        Vec3 rmin{9, 9, 9}, rmax{-9, -9, -9};
        double smin = 9, smax = -9;
        for (int n = 0; n < 10000; ++n) {
            const auto a = sample_affine(cfg, rng);
            for (int c = 0; c < 3; ++c) {
                REQUIRE(a.rotation[c] >= -std::numbers::pi);
                REQUIRE(a.rotation[c] <= std::numbers::pi);
                REQUIRE(a.translation[c] >= -5.0);
                REQUIRE(a.translation[c] <= 5.0);
                REQUIRE(a.scale[c] >= 0.5);
                REQUIRE(a.scale[c] <= 1.5);
                REQUIRE(a.shear[c] >= -0.5);
                REQUIRE(a.shear[c] <= 0.5);
                rmin[c] = std::min(rmin[c], a.rotation[c]);
                rmax[c] = std::max(rmax[c], a.rotation[c]);
                smin = std::min(smin, a.scale[c]);
                smax = std::max(smax, a.scale[c]);
            }
        }
        for (int c = 0; c < 3; ++c) {
            CHECK(rmin[c] < -3.0);
            CHECK(rmax[c] > 3.0);
        }
        CHECK(smin < 0.51);
        CHECK(smax > 1.49);
    }

    TEST_CASE("place_template: identity places a single centre voxel once") {
        MaskVolume m(GridMeta::cube(128));
        m.at(64, 64, 64) = 1;
        LabelVolume labels(GridMeta::cube(128), 0);
        place_template(labels, {m, "dot"}, 5, AffineParams{});
        std::int64_t count = 0;
        for (auto v : labels.values) count += v == 5;
        CHECK(count == 1);
        CHECK(labels.at(64, 64, 64) == 5);
        CHECK(max_label(labels) == 5);
    }

    TEST_CASE("place_template: later labels overwrite the overlap") {
        LabelVolume labels(GridMeta::cube(32), 0);
        const auto a = ball_template(32, {14, 16, 16}, 5);
        const auto b = ball_template(32, {18, 16, 16}, 5);
        place_template(labels, a, 1, AffineParams{});
        place_template(labels, b, 2, AffineParams{});
        for (std::int64_t n = 0; n < labels.size(); ++n) {
            if (b.mask[n]) {
                CHECK(labels[n] == 2);
            } else if (a.mask[n]) {
                CHECK(labels[n] == 1);
            } else {
                CHECK(labels[n] == 0);
            }
        }
        CHECK(labels.at(16, 16, 16) == 2);
    }

    TEST_CASE("place_template: pure translation moves the centroid by the translation") {
        const auto t = ball_template(128, {64, 64, 64}, 10);
        LabelVolume labels(GridMeta::cube(128), 0);
        AffineParams p;
        p.translation = {3.0, 0.0, 0.0};
        place_template(labels, t, 1, p);
        Vec3 c{0, 0, 0};
        std::int64_t n = 0;
        for (std::int64_t idx = 0; idx < labels.size(); ++idx) {
            if (!labels[idx]) continue;
            const auto v = labels.meta.delinear(idx);
            for (int a = 0; a < 3; ++a) c[a] += static_cast<double>(v[a]);
            ++n;
        }
        REQUIRE(n == count_true(t.mask));
        CHECK(std::abs(c[0] / n - 67.0) <= 0.5);
        CHECK(std::abs(c[1] / n - 64.0) <= 0.5);
        CHECK(std::abs(c[2] / n - 64.0) <= 0.5);
    }

    TEST_CASE("place_template: dimension mismatch is rejected") {
        LabelVolume labels(GridMeta::cube(16), 0);
        CHECK_THROWS_AS(place_template(labels, ball_template(32, {16, 16, 16}, 4), 1, AffineParams{}), Error);
    }

    TEST_CASE("median_smooth: radius 0 is the identity and uniform maps are fixed") {
        LabelVolume v(GridMeta{{6, 7, 8}});
        RngStream rng(4);
        for (auto &x : v.values) x = static_cast<std::uint16_t>(rng.uniform_int(0, 5));
        CHECK(median_smooth(v, 0) == v);
        LabelVolume u(GridMeta::cube(8), 7);
        CHECK(median_smooth(u, 1) == u);
        CHECK_THROWS_AS(median_smooth(v, -1), Error);
    }

    TEST_CASE("median_smooth: an isolated voxel disappears") {
        LabelVolume v(GridMeta::cube(9), 0);
        v.at(4, 4, 4) = 9;
        const auto out = median_smooth(v, 1);
        CHECK(max_label(out) == 0);
    }

    TEST_CASE("median_smooth matches a 27-element sorted median with clamped edges") {
        LabelVolume v(GridMeta{{7, 6, 5}});
        RngStream rng(77);
        for (auto &x : v.values) x = static_cast<std::uint16_t>(rng.uniform_int(0, 4));
        const auto out = median_smooth(v, 1);
        const auto &d = v.meta.dims;
        for (std::int64_t n = 0; n < v.size(); ++n) {
            const auto p = v.meta.delinear(n);
            std::vector<std::uint16_t> nb;
            for (int a = -1; a <= 1; ++a)
                for (int b = -1; b <= 1; ++b)
                    for (int c = -1; c <= 1; ++c) {
                        nb.push_back(v.at(std::clamp<std::int64_t>(p[0] + a, 0, d[0] - 1),
                                          std::clamp<std::int64_t>(p[1] + b, 0, d[1] - 1),
                                          std::clamp<std::int64_t>(p[2] + c, 0, d[2] - 1)));
                    }
            std::sort(nb.begin(), nb.end());
            REQUIRE(nb.size() == 27);
            CHECK(out[n] == nb[13]);
        }
    }

    TEST_CASE("foreground mask: a skip draw leaves the map unchanged") {
        auto cfg = small_mask_config(32);
        LabelVolume v(GridMeta::cube(32), 2);
        const auto before = v;
        auto rng = stream_with_first_draw([](double u) { return u <= 1.0 / 3.0; });
        const auto fg = apply_foreground_mask(v, cfg, rng);
        CHECK_FALSE(fg.applied);
        CHECK(v == before);
        CHECK(fg.p_fg <= 1.0 / 3.0);
    }

    TEST_CASE("foreground mask: an empty map becomes 1 inside S and 0 outside") {
        auto cfg = small_mask_config(48);
        LabelVolume v(GridMeta::cube(48), 0);
        auto rng = stream_with_first_draw([](double u) { return u > 1.0 / 3.0; });
        const auto fg = apply_foreground_mask(v, cfg, rng);
        REQUIRE(fg.applied);
        CHECK(fg.radius >= 12);
        CHECK(fg.radius <= 16);
        std::int64_t inside = 0;
        for (std::int64_t n = 0; n < v.size(); ++n) {
            CHECK(v[n] == (fg.mask[n] ? 1 : 0));
            inside += fg.mask[n];
        }
        CHECK(inside > 0);
    }

    TEST_CASE("foreground mask: a label-3 region inside S becomes 4, outside everything is 0") {
        auto cfg = small_mask_config(48);
        cfg.sphere_radius = {20, 20};
        cfg.sphere_center = {24, 24};
        cfg.perlin_sigma = {1.0, 1.0};
        LabelVolume v(GridMeta::cube(48), 0);
        for (std::int64_t i = 20; i < 28; ++i)
            for (std::int64_t j = 20; j < 28; ++j)
                for (std::int64_t k = 20; k < 28; ++k) v.at(i, j, k) = 3;
        v.at(0, 0, 0) = 3;
        const auto before = v;
        auto rng = stream_with_first_draw([](double u) { return u > 1.0 / 3.0; });
        const auto fg = apply_foreground_mask(v, cfg, rng);
        REQUIRE(fg.applied);
        for (std::int64_t n = 0; n < v.size(); ++n) {
            const std::uint16_t expected = fg.mask[n] ? before[n] + 1 : 0;
            CHECK(v[n] == expected);
        }
        CHECK(v.at(24, 24, 24) == 4);
        CHECK(v.at(0, 0, 0) == 0);
    }

    TEST_CASE("morphology matches brute force on a random 32^3 blob") {
        MaskVolume m(GridMeta::cube(32));
        RngStream rng(31);
        for (int blob = 0; blob < 6; ++blob) {
            const Vec3 c{rng.uniform(0, 31), rng.uniform(0, 31), rng.uniform(0, 31)};
            const auto b = deformed_ball(m.meta, c, rng.uniform(2, 9), nullptr);
            for (std::int64_t n = 0; n < m.size(); ++n) m[n] |= b[n];
        }
        for (int r : {1, 2, 3}) {
            CHECK(dilate_ball(m, r).values == brute_dilate(m, r).values);
            CHECK(erode_ball(m, r).values == brute_erode(m, r).values);
        }
    }

    TEST_CASE("envelope: full-grid mask gives the clipped border shell") {
        const auto full = MaskVolume(GridMeta::cube(32), 1);
        for (int w : {2, 3, 4}) {
            const auto shell = envelope_shell(full, w);
            const auto dil = brute_dilate(full, w);
            const auto ero = brute_erode(full, w);
            std::int64_t count = 0;
            for (std::int64_t n = 0; n < full.size(); ++n) {
                const bool expected = dil[n] && !ero[n];
                CHECK(shell[n] == expected);
                count += expected;
            }
            // Erosion keeps [w, 31 - w] per axis; dilation of the full grid is the full grid.
            const std::int64_t inner = 32 - 2 * w;
            CHECK(count == 32 * 32 * 32 - inner * inner * inner);
        }
    }

    TEST_CASE("envelope: a single voxel with w=2 gives the whole ball(2), since its erosion is empty") {
        MaskVolume m(GridMeta::cube(16));
        m.at(8, 8, 8) = 1;
        const auto shell = envelope_shell(m, 2);
        std::int64_t count = 0;
        for (auto x : shell.values) count += x;
        std::int64_t ball = 0;
        for (int a = -2; a <= 2; ++a)
            for (int b = -2; b <= 2; ++b)
                for (int c = -2; c <= 2; ++c) ball += a * a + b * b + c * c <= 4;
        CHECK(ball == 33);
        CHECK(count == ball);
        CHECK(shell.at(8, 8, 8) == 1);
    }

    TEST_CASE("add_envelope: increments exactly the brute-force shell and records the width") {
        auto cfg = small_mask_config(32);
        cfg.envelope_width = {3, 3};
        cfg.p_envelope_threshold = 0.0;
        ForegroundMask fg;
        fg.applied = true;
        fg.mask = deformed_ball(GridMeta::cube(32), {15, 16, 17}, 9.0, nullptr);
        LabelVolume v(GridMeta::cube(32), 0);
        for (std::int64_t n = 0; n < v.size(); ++n) v[n] = fg.mask[n] ? 1 : 0;
        const auto before = v;
        RngStream rng(2);
        add_envelope(v, fg, cfg, rng);
        REQUIRE(fg.envelope_applied);
        CHECK(fg.envelope_width == 3);
        const auto dil = brute_dilate(fg.mask, 3);
        const auto ero = brute_erode(fg.mask, 3);
        for (std::int64_t n = 0; n < v.size(); ++n) CHECK(v[n] == before[n] + ((dil[n] && !ero[n]) ? 1 : 0));
    }

    TEST_CASE("add_envelope: outer-only increments E minus S") {
        auto cfg = small_mask_config(32);
        cfg.envelope_width = {2, 2};
        cfg.p_envelope_threshold = 0.0;
        cfg.envelope_outer_only = true;
        ForegroundMask fg;
        fg.applied = true;
        fg.mask = deformed_ball(GridMeta::cube(32), {16, 16, 16}, 8.0, nullptr);
        LabelVolume v(GridMeta::cube(32), 0);
        RngStream rng(2);
        add_envelope(v, fg, cfg, rng);
        const auto dil = brute_dilate(fg.mask, 2);
        for (std::int64_t n = 0; n < v.size(); ++n) CHECK(v[n] == ((dil[n] && !fg.mask[n]) ? 1 : 0));
    }

    TEST_CASE("add_envelope: skip draw leaves the map unchanged; missing mask is a precondition error") {
        auto cfg = small_mask_config(16);
        ForegroundMask fg;
        fg.applied = true;
        fg.mask = deformed_ball(GridMeta::cube(16), {8, 8, 8}, 5.0, nullptr);
        LabelVolume v(GridMeta::cube(16), 1);
        const auto before = v;
        auto rng = stream_with_first_draw([](double u) { return u <= 0.5; });
        add_envelope(v, fg, cfg, rng);
        CHECK_FALSE(fg.envelope_applied);
        CHECK(v == before);

        ForegroundMask none;
        RngStream r2(0);
        try {
            add_envelope(v, none, cfg, r2);
            FAIL("expected a precondition error");
        } catch (const Error &e) {
            CHECK(e.code() == ErrorCode::precondition);
        }
    }

    TEST_CASE("branch frequencies over 600 masks are within 3 sigma of 2/3 and 1/2") {
        const auto cfg = small_mask_config(24);
        const RngStream root(2025);
        int masked = 0, enveloped = 0;
        const int n = 600;
        for (std::uint64_t s = 0; s < n; ++s) {
            LabelVolume v(GridMeta::cube(24), 0);
            auto fg_rng = root.derive("sample", s).derive("foreground", 0);
            auto fg = apply_foreground_mask(v, cfg, fg_rng);
            if (!fg.applied) continue;
            ++masked;
            auto env_rng = root.derive("sample", s).derive("envelope", 0);
            add_envelope(v, fg, cfg, env_rng);
            enveloped += fg.envelope_applied;
        }
        const double fm = static_cast<double>(masked) / n;
        const double fe = static_cast<double>(enveloped) / masked;
        CHECK(std::abs(fm - 2.0 / 3.0) <= 3.0 * std::sqrt(2.0 / 9.0 / n));
        CHECK(std::abs(fe - 0.5) <= 3.0 * std::sqrt(0.25 / masked));
    }

    TEST_CASE("config validation and JSON round-trip") {
        LabelEngineConfig cfg;
        cfg.n_templates = {3, 9};
        cfg.envelope_outer_only = true;
        const auto back = nlohmann::json(cfg).get<LabelEngineConfig>();
        CHECK(back.n_templates == cfg.n_templates);
        CHECK(back.envelope_outer_only);
        CHECK(back.rotation == cfg.rotation);

        auto bad = cfg;
        bad.p_fg_threshold = 1.5;
        CHECK_THROWS_AS(bad.validate(), Error);
        bad = cfg;
        bad.n_templates = {5, 2};
        CHECK_THROWS_AS(bad.validate(), Error);
        bad = cfg;
        bad.scale_perturbation = {-1.0, 0.5};
        CHECK_THROWS_AS(bad.validate(), Error);
        CHECK_NOTHROW(cfg.validate());
    }

    TEST_CASE("synthesize_label_map: one-template bank is deterministic and respects N+2") {
        std::vector<BinaryTemplate> ts;
        ts.push_back(ball_template(128, {64, 64, 64}, 18));
        const auto bank = TemplateBank::from_templates(std::move(ts), "one");
        const LabelEngineConfig cfg;
        const auto a = synthesize_label_map(bank, cfg, RngStream(3).derive("sample", 0));
        const auto b = synthesize_label_map(bank, cfg, RngStream(3).derive("sample", 0));
        CHECK(a.labels == b.labels);
        const auto &p = a.provenance;
        CHECK(p.n_templates >= 20);
        CHECK(p.n_templates <= 40);
        CHECK(p.template_indices.size() == static_cast<std::size_t>(p.n_templates));
        CHECK(max_label(a.labels) <= p.n_templates + 2);
        std::int64_t nonzero = 0;
        for (auto v : a.labels.values) nonzero += v != 0;
        CHECK(nonzero > 0);
        CHECK_THROWS_AS(synthesize_label_map(TemplateBank{}, cfg, RngStream(0)), Error);
    }

    TEST_CASE("synthesize_label_map: pre-smoothing label is the last covering template") {
        std::vector<BinaryTemplate> ts;
        ts.push_back(ball_template(128, {64, 64, 64}, 20));
        ts.push_back(ball_template(128, {60, 66, 64}, 14));
        ts.push_back(ball_template(128, {64, 64, 70}, 10));
        const auto bank = TemplateBank::from_templates(std::move(ts), "three");
        LabelEngineConfig cfg;
        cfg.n_templates = {5, 5};
        cfg.median_radius = 0;
        cfg.p_fg_threshold = 1.0;  // never masks
        const auto map = synthesize_label_map(bank, cfg, RngStream(12));
        const auto &p = map.provenance;
        CHECK_FALSE(p.fg_applied);
        const auto centre = grid_center(map.labels.meta);
        for (std::int64_t n = 0; n < map.labels.size(); n += 5) {
            const auto v = map.labels.meta.delinear(n);
            std::uint16_t expected = 0;
            for (std::int64_t t = p.n_templates - 1; t >= 0 && !expected; --t) {
                const AffineTransform xf(p.affines[t], centre);
                const auto src = xf.inverse_map({double(v[0]), double(v[1]), double(v[2])});
                const auto tmpl = bank.at(p.template_indices[t]);
                const Index3 s{std::llround(src[0]), std::llround(src[1]), std::llround(src[2])};
                if (tmpl->meta().contains(s[0], s[1], s[2]) && tmpl->mask.at(s[0], s[1], s[2])) {
                    expected = static_cast<std::uint16_t>(t + 1);
                }
            }
            REQUIRE(map.labels[n] == expected);
        }
    }

    TEST_CASE("synthesize_label_map: sampling without replacement uses distinct templates") {
        std::vector<BinaryTemplate> ts;
        for (int n = 0; n < 6; ++n) ts.push_back(ball_template(128, {64, 64, 64}, 4.0 + n));
        const auto bank = TemplateBank::from_templates(std::move(ts), "six");
        LabelEngineConfig cfg;
        cfg.n_templates = {6, 6};
        cfg.sample_with_replacement = false;
        const auto map = synthesize_label_map(bank, cfg, RngStream(4));
        auto idx = map.provenance.template_indices;
        std::sort(idx.begin(), idx.end());
        CHECK(idx == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
        cfg.n_templates = {7, 7};
        CHECK_THROWS_AS(synthesize_label_map(bank, cfg, RngStream(4)), Error);
    }
}
