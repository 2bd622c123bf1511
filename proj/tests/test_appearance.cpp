#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "doctest.h"
#include "voxsynth/appearance.hpp"
#include "voxsynth/noise.hpp"

using namespace voxsynth;

namespace {

// Random normalised volume.
IntensityVolume random_volume(const GridMeta &meta, std::uint64_t seed) {
    IntensityVolume v(meta);
    RngStream rng(seed);
    for (auto &x : v.values) x = static_cast<float>(rng.uniform());
    minmax_normalize(v);
    return v;
}

// A few overlapping balls on a cube; label 0 outside.
LabelVolume blob_labels(std::int64_t n, std::uint64_t seed, int count = 4) {
    LabelVolume labels(GridMeta::cube(n), 0);
    RngStream rng(seed);
    for (int b = 1; b <= count; ++b) {
        const Vec3 c{rng.uniform(n * 0.3, n * 0.7), rng.uniform(n * 0.3, n * 0.7), rng.uniform(n * 0.3, n * 0.7)};
        const auto ball = deformed_ball(labels.meta, c, rng.uniform(n * 0.1, n * 0.25), nullptr);
        for (std::int64_t i = 0; i < labels.size(); ++i) {
            if (ball[i]) labels[i] = static_cast<std::uint16_t>(b);
        }
    }
    return labels;
}

double max_rel_diff(const IntensityVolume &a, const IntensityVolume &b) {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        diff = std::max(diff, std::abs(double(a.values[i]) - double(b.values[i])));
        scale = std::max(scale, std::abs(double(b.values[i])));
    }
    return scale > 0.0 ? diff / scale : diff;
}

bool in_unit_range(const IntensityVolume &v) {
    const auto [lo, hi] = std::minmax_element(v.values.begin(), v.values.end());
    return *lo >= 0.0f && *hi <= 1.0f;
}

AugmentationConfig all_off() {
    AugmentationConfig cfg;
    for (auto &s : cfg.stages) s.probability = 0.0;
    return cfg;
}

}  // namespace

TEST_SUITE("appearance") {
    TEST_CASE("stage names round-trip and unknown names are rejected") {
        for (Stage s : kStageOrder) CHECK(stage_from_name(stage_name(s)) == s);
        CHECK_THROWS_AS(stage_from_name("sparkle"), Error);
        CHECK(pass_from_name("online") == Pass::online);
        CHECK_THROWS_AS(pass_from_name("sideways"), Error);
    }

    TEST_CASE("default stage membership and probabilities") {
        const AugmentationConfig cfg;
        CHECK(cfg.pass_stages(Pass::online) == std::vector<Stage>{Stage::gamma, Stage::noise});
        const auto offline = cfg.pass_stages(Pass::offline);
        CHECK(offline.size() == kStageCount - 2);
        CHECK(offline.back() == Stage::zero_background);
        CHECK(cfg.settings(Stage::texture).probability == 1.0);
        CHECK(cfg.settings(Stage::geometric).probability == 1.0);
        CHECK(cfg.settings(Stage::zero_background).probability == 1.0);
        CHECK(cfg.settings(Stage::gibbs).probability == 0.33);
        CHECK(cfg.gamma == Range{0.0, 4.5});
        CHECK(cfg.bias_coefficient == Range{0.0, 0.075});
        CHECK(cfg.gibbs_alpha == Range{0.0, 0.33});
    }

    TEST_CASE("augmentation config JSON round-trip and validation") {
        AugmentationConfig cfg;
        cfg.settings(Stage::blur).probability = 0.9;
        cfg.settings(Stage::blur).pass = Pass::online;
        cfg.gamma = {0.5, 2.0};
        const auto back = nlohmann::json(cfg).get<AugmentationConfig>();
        CHECK(back.stages == cfg.stages);
        CHECK(back.gamma == cfg.gamma);
        CHECK(nlohmann::json(back) == nlohmann::json(cfg));

        auto bad = cfg;
        bad.settings(Stage::noise).probability = 1.2;
        CHECK_THROWS_AS(bad.validate(), Error);
        bad = cfg;
        bad.sharpen_alpha = {3.0, 1.0};
        CHECK_THROWS_AS(bad.validate(), Error);
        CHECK_THROWS_AS(nlohmann::json({{"stages", {{"sparkle", {{"p", 0.5}}}}}}).get<AugmentationConfig>(), Error);
    }

    TEST_CASE("gmm: zero variances give exactly {0,1} after normalisation") {
        LabelVolume labels(GridMeta::cube(8), 0);
        for (std::int64_t i = 0; i < labels.size(); i += 2) labels[i] = 1;
        GmmParams p{{0.2, 0.8}, {0.0, 0.0}};
        RngStream rng(1);
        const auto v = sample_gmm_volume(labels, p, rng);
        for (std::int64_t i = 0; i < v.size(); ++i) CHECK(v[i] == (labels[i] ? 1.0f : 0.0f));
    }

    TEST_CASE("gmm: single label mean over 128^3 is within 0.001") {
        LabelVolume labels(GridMeta::cube(128), 0);
        GmmParams p{{0.5}, {0.1}};
        RngStream rng(2);
        const auto raw = sample_gmm_raw(labels, p, rng);
        double sum = 0.0;
        for (float x : raw.values) sum += x;
        CHECK(std::abs(sum / raw.size() - 0.5) < 0.001);
    }

    TEST_CASE("gmm: same stream gives identical volumes; missing labels are rejected") {
        const auto labels = blob_labels(16, 3);
        auto r1 = RngStream(4).derive("gmm", 1);
        auto r2 = RngStream(4).derive("gmm", 1);
        const auto p1 = sample_gmm_params(max_label(labels), {0, 1}, {0.01, 0.1}, r1);
        const auto p2 = sample_gmm_params(max_label(labels), {0, 1}, {0.01, 0.1}, r2);
        CHECK(p1 == p2);
        CHECK(p1.means.size() == static_cast<std::size_t>(max_label(labels)) + 1);
        CHECK(sample_gmm_volume(labels, p1, r1) == sample_gmm_volume(labels, p2, r2));
        GmmParams short_params{{0.1}, {0.01}};
        CHECK_THROWS_AS(sample_gmm_volume(labels, short_params, r1), Error);
    }

    TEST_CASE("perlin field: amplitude 0 is constant 1; mean 1 and bounded for amplitude 0.5") {
        const std::vector<double> octaves{8, 16, 32};
        RngStream r0(5);
        const auto flat = make_perlin_field(GridMeta::cube(32), octaves, 0.0, r0);
        for (float x : flat.values) CHECK(x == 1.0f);

        RngStream r1(6);
        const auto f = make_perlin_field(GridMeta::cube(64), octaves, 0.5, r1);
        double sum = 0.0;
        for (float x : f.values) {
            REQUIRE(x >= 0.5f - 1e-6f);
            REQUIRE(x <= 1.5f + 1e-6f);
            sum += x;
        }
        const double mean = sum / f.size();
        CHECK(mean >= 0.98);
        CHECK(mean <= 1.02);
    }

    TEST_CASE("perlin field: lag-1 autocorrelation exceeds white noise") {
        const std::vector<double> octaves{8, 16};
        RngStream r(7);
        const auto f = make_perlin_field(GridMeta::cube(32), octaves, 0.5, r);
        const auto white = random_volume(GridMeta::cube(32), 8);
        auto lag1 = [](const Volume<float> &v) {
            double mean = 0.0;
            for (float x : v.values) mean += x;
            mean /= v.size();
            double num = 0.0, den = 0.0;
            const auto &d = v.meta.dims;
            for (std::int64_t i = 0; i + 1 < d[0]; ++i)
                for (std::int64_t j = 0; j < d[1]; ++j)
                    for (std::int64_t k = 0; k < d[2]; ++k) {
                        num += (v.at(i, j, k) - mean) * (v.at(i + 1, j, k) - mean);
                    }
            for (float x : v.values) den += (x - mean) * (x - mean);
            return num / den;
        };
        CHECK(lag1(f) > 0.8);
        CHECK(lag1(f) > lag1(white) + 0.5);
    }

    TEST_CASE("bias: zero coefficients and constant-only coefficients are the identity") {
        const auto v = random_volume(GridMeta{{9, 10, 11}}, 9);
        auto a = v;
        apply_bias_field(a, std::vector<double>(20, 0.0));
        CHECK(max_rel_diff(a, v) <= 1e-6);
        std::vector<double> c(20, 0.0);
        c[0] = 0.07;
        auto b = v;
        apply_bias_field(b, c);
        CHECK(max_rel_diff(b, v) <= 1e-6);
        CHECK_THROWS_AS(apply_bias_field(b, std::vector<double>(3, 0.0)), Error);
    }

    TEST_CASE("bias: a linear ramp along axis 0 matches the closed form") {
        const auto terms = bias_monomials();
        REQUIRE(terms.size() == 20);
        REQUIRE(terms[1] == std::array<int, 3>{1, 0, 0});
        const double c = 0.075;
        std::vector<double> coeff(20, 0.0);
        coeff[1] = c;
        IntensityVolume v(GridMeta{{12, 5, 4}}, 0.5f);
        apply_bias_field(v, coeff);
        const double lo = std::exp(-c), hi = std::exp(c);
        for (std::int64_t i = 0; i < 12; ++i) {
            const double x = 2.0 * i / 11.0 - 1.0;
            const double expected = (std::exp(c * x) - lo) / (hi - lo);
            for (std::int64_t j = 0; j < 5; ++j)
                for (std::int64_t k = 0; k < 4; ++k) CHECK(v.at(i, j, k) == doctest::Approx(expected).epsilon(1e-6));
            if (i > 0) CHECK(v.at(i, 0, 0) > v.at(i - 1, 0, 0));
        }
    }

    TEST_CASE("voxelwise stages at identity parameters") {
        const auto v = random_volume(GridMeta{{10, 12, 9}}, 10);
        auto g = v;
        apply_gamma(g, 1.0);
        CHECK(max_rel_diff(g, v) <= 1e-6);
        auto n = v;
        RngStream rng(1);
        apply_noise(n, 0.0, rng);
        CHECK(n == v);
        auto b = v;
        apply_blur(b, {0, 0, 0});
        CHECK(max_rel_diff(b, v) <= 1e-6);
        auto s = v;
        apply_sharpen(s, 0.0, 2.0, 1.0);
        CHECK(max_rel_diff(s, v) <= 1e-6);
        auto s2 = v;
        apply_sharpen(s2, 17.0, 1.5, 1.5);
        CHECK(max_rel_diff(s2, v) <= 1e-6);
        auto r = v;
        apply_resolution(r, 1);
        CHECK(r == v);
        auto t = v;
        apply_texture(t, ScalarField(v.meta, 1.0f));
        CHECK(max_rel_diff(t, v) <= 1e-6);
    }

    TEST_CASE("blur of a constant is unchanged") {
        IntensityVolume v(GridMeta::cube(12), 0.3f);
        apply_blur(v, {1.5, 0.7, 2.0});
        for (float x : v.values) CHECK(x == doctest::Approx(0.3f).epsilon(1e-6));
    }

    TEST_CASE("gaussian filter matches a direct clamped convolution") {
        const auto v = random_volume(GridMeta{{7, 6, 5}}, 11);
        auto g = v;
        const double sigma = 1.3;
        gaussian_filter(g, {sigma, 0.0, 0.0});
        const int radius = static_cast<int>(std::ceil(3 * sigma));
        std::vector<double> w(2 * radius + 1);
        double total = 0.0;
        for (int t = -radius; t <= radius; ++t) total += w[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
        for (std::int64_t i = 0; i < 7; ++i)
            for (std::int64_t j = 0; j < 6; ++j)
                for (std::int64_t k = 0; k < 5; ++k) {
                    double acc = 0.0;
                    for (int t = -radius; t <= radius; ++t) {
                        acc += w[t + radius] * v.at(std::clamp<std::int64_t>(i + t, 0, 6), j, k);
                    }
                    CHECK(g.at(i, j, k) == doctest::Approx(acc / total).epsilon(1e-5));
                }
    }

    TEST_CASE("resolution factor 2 on alternating planes gives constant 0.5") {
        IntensityVolume v(GridMeta::cube(16));
        for (std::int64_t i = 0; i < 16; ++i)
            for (std::int64_t j = 0; j < 16; ++j)
                for (std::int64_t k = 0; k < 16; ++k) v.at(i, j, k) = static_cast<float>(i % 2);
        apply_resolution(v, 2);
        for (float x : v.values) CHECK(x == 0.5f);
        CHECK_THROWS_AS(apply_resolution(v, 0), Error);
    }

    TEST_CASE("resolution degrades a random volume but keeps its dims and range") {
        const auto v = random_volume(GridMeta{{15, 13, 11}}, 12);
        auto r = v;
        apply_resolution(r, 3);
        CHECK(r.meta == v.meta);
        CHECK(in_unit_range(r));
        CHECK(max_rel_diff(r, v) > 0.1);
    }

    TEST_CASE("gibbs alpha 0 is an FFT round-trip within 1e-6; constants pass through") {
        const auto v = random_volume(GridMeta{{16, 12, 10}}, 13);
        auto g = v;
        apply_gibbs(g, 0.0);
        CHECK(max_rel_diff(g, v) <= 1e-6);
        IntensityVolume c(GridMeta::cube(8), 0.4f);
        apply_gibbs(c, 0.33);
        for (float x : c.values) CHECK(x == doctest::Approx(0.4f).epsilon(1e-6));
    }

    TEST_CASE("gibbs alpha 0.33 on a centred impulse matches a direct DFT sum on 16^3") {
        const std::int64_t n = 16;
        IntensityVolume v(GridMeta::cube(n), 0.0f);
        v.at(8, 8, 8) = 1.0f;
        auto g = v;
        const double alpha = 0.33;
        apply_gibbs(g, alpha);

        // Kept bins: |signed k| / |corner| <= 1 - alpha, corner = (8,8,8).
        std::vector<Index3> kept;
        for (std::int64_t a = 0; a < n; ++a)
            for (std::int64_t b = 0; b < n; ++b)
                for (std::int64_t c = 0; c < n; ++c) {
                    auto sf = [&](std::int64_t x) { return x <= n / 2 ? x : x - n; };
                    const double r = std::sqrt(double(sf(a) * sf(a) + sf(b) * sf(b) + sf(c) * sf(c)) / (3.0 * 64.0));
                    if (r <= 1.0 - alpha) kept.push_back({a, b, c});
                }
        std::vector<double> cosines(n);
        for (std::int64_t t = 0; t < n; ++t) cosines[t] = 2.0 * std::numbers::pi * t / n;
        std::vector<double> out(static_cast<std::size_t>(n * n * n));
        for (std::int64_t idx = 0; idx < v.size(); ++idx) {
            const auto x = v.meta.delinear(idx);
            double s = 0.0;
            for (const auto &k : kept) {
                const std::int64_t ph = (k[0] * (x[0] - 8) + k[1] * (x[1] - 8) + k[2] * (x[2] - 8)) % n;
                s += std::cos(cosines[(ph + n) % n]);
            }
            out[idx] = s / double(n * n * n);
        }
        const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
        const double mn = *lo, mx = *hi;
        double err = 0.0;
        for (std::int64_t idx = 0; idx < v.size(); ++idx) {
            err = std::max(err, std::abs((out[idx] - mn) / (mx - mn) - double(g[idx])));
        }
        CHECK(kept.size() < static_cast<std::size_t>(n * n * n));
        CHECK(err <= 1e-6);
    }

    TEST_CASE("gibbs radius is 0 at DC and 1 at the spectrum corner") {
        CHECK(gibbs_radius({0, 0, 0}, {16, 16, 16}) == 0.0);
        CHECK(gibbs_radius({8, 8, 8}, {16, 16, 16}) == doctest::Approx(1.0));
        CHECK(gibbs_radius({15, 0, 0}, {16, 16, 16}) == doctest::Approx(1.0 / std::sqrt(192.0)));
    }

    TEST_CASE("spikes: zero intensity is the identity; one spike on a constant is a cosine") {
        const auto v = random_volume(GridMeta{{8, 10, 6}}, 14);
        auto a = v;
        apply_spikes(a, {Spike{{1, 2, 3}, 0.0, 0.7}});
        CHECK(max_rel_diff(a, v) <= 1e-6);
        auto e = v;
        apply_spikes(e, {});
        CHECK(e == v);

        IntensityVolume c(GridMeta::cube(16), 0.5f);
        apply_spikes(c, {Spike{{1, 2, 0}, 0.1, 0.0}});
        for (std::int64_t idx = 0; idx < c.size(); ++idx) {
            const auto x = c.meta.delinear(idx);
            const double expected = 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * (x[0] + 2.0 * x[1]) / 16.0));
            CHECK(c[idx] == doctest::Approx(expected).epsilon(1e-5));
        }
        CHECK_THROWS_AS(apply_spikes(c, {Spike{{16, 0, 0}, 0.1, 0.0}}), Error);
    }

    TEST_CASE("motion: weight 0 is the identity; weight 1 with an integer shift is a circular shift") {
        const auto v = random_volume(GridMeta{{12, 8, 10}}, 15);
        auto a = v;
        apply_motion(a, 0.0, {3.0, 1.0, 2.0});
        CHECK(a == v);
        auto s = v;
        apply_motion(s, 1.0, {2.0, -1.0, 0.0});
        for (std::int64_t i = 0; i < 12; ++i)
            for (std::int64_t j = 0; j < 8; ++j)
                for (std::int64_t k = 0; k < 10; ++k) {
                    const float src = v.at((i - 2 + 12) % 12, (j + 1) % 8, k);
                    CHECK(s.at(i, j, k) == doctest::Approx(src).epsilon(1e-5));
                }
    }

    TEST_CASE("every intensity stage maps normalised volumes into [0,1]") {
        const AugmentationConfig cfg;
        const auto base = random_volume(GridMeta{{16, 16, 16}}, 16);
        for (Stage s : kStageOrder) {
            if (s == Stage::geometric || s == Stage::zero_background) continue;
            for (std::uint64_t t = 0; t < 4; ++t) {
                auto cfg_on = cfg;
                cfg_on.settings(s).probability = 1.0;
                auto rng = RngStream(t).derive(stage_name(s), 1);
                const auto rec = draw_stage(s, cfg_on, base.meta, rng);
                REQUIRE(rec.fired);
                auto v = base;
                apply_intensity_stage(v, rec, cfg_on, rng);
                CHECK_MESSAGE(in_unit_range(v), stage_name(s));
                for (float x : v.values) REQUIRE(std::isfinite(x));
            }
        }
    }

    TEST_CASE("shared geometric: identity draw changes nothing and flips are involutions") {
        auto v1 = random_volume(GridMeta{{9, 8, 7}}, 17);
        auto v2 = random_volume(GridMeta{{9, 8, 7}}, 18);
        auto labels = LabelVolume(GridMeta{{9, 8, 7}}, 0);
        for (std::int64_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint16_t>(i % 5);
        const auto a = v1, b = v2;
        const auto l = labels;
        apply_shared_geometric(&v1, &v2, &labels, GeometricDraw{});
        CHECK(v1 == a);
        CHECK(v2 == b);
        CHECK(labels == l);
        for (int axis = 0; axis < 3; ++axis) {
            GeometricDraw flip;
            flip.flips[axis] = true;
            apply_shared_geometric(&v1, &v2, &labels, flip);
            CHECK(v1 != a);
            CHECK(v1.at(0, 0, 0) == a.at(axis == 0 ? 8 : 0, axis == 1 ? 7 : 0, axis == 2 ? 6 : 0));
            apply_shared_geometric(&v1, &v2, &labels, flip);
            CHECK(v1 == a);
            CHECK(v2 == b);
            CHECK(labels == l);
        }
        GeometricDraw all;
        all.flips = {true, true, true};
        apply_shared_geometric(&v1, &v2, &labels, all);
        apply_shared_geometric(&v1, &v2, &labels, all);
        CHECK(v1 == a);
    }

    TEST_CASE("shared geometric: quarter turn about axis 2 moves a bar onto axis 1") {
        const std::int64_t n = 64;
        LabelVolume labels(GridMeta::cube(n), 0);
        for (std::int64_t i = 16; i <= 48; ++i)
            for (std::int64_t j = 30; j <= 34; ++j)
                for (std::int64_t k = 28; k <= 36; ++k) labels.at(i, j, k) = 1;
        GeometricDraw draw;
        draw.affine.rotation = {0.0, 0.0, std::numbers::pi / 2};
        apply_shared_geometric(nullptr, nullptr, &labels, draw);
        // Analytic rotation about (32,32,32): (x, y) -> (-y, x) relative to the centre.
        std::int64_t inter = 0, a = 0, b = 0;
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < n; ++j)
                for (std::int64_t k = 0; k < n; ++k) {
                    const bool expected = i >= 30 && i <= 34 && j >= 16 && j <= 48 && k >= 28 && k <= 36;
                    const bool got = labels.at(i, j, k) == 1;
                    inter += expected && got;
                    a += expected;
                    b += got;
                }
        CHECK(2.0 * inter / (a + b) >= 0.95);
    }

    TEST_CASE("zero_background: all-foreground identity, all-background zero, half split") {
        const auto v = random_volume(GridMeta::cube(8), 19);
        auto a = v;
        zero_background(a, LabelVolume(v.meta, 3));
        CHECK(a == v);
        auto b = v;
        zero_background(b, LabelVolume(v.meta, 0));
        for (float x : b.values) CHECK(x == 0.0f);
        LabelVolume half(v.meta, 0);
        for (std::int64_t i = 4; i < 8; ++i)
            for (std::int64_t j = 0; j < 8; ++j)
                for (std::int64_t k = 0; k < 8; ++k) half.at(i, j, k) = 2;
        auto c = v;
        zero_background(c, half);
        for (std::int64_t idx = 0; idx < v.size(); ++idx) CHECK(c[idx] == (half[idx] ? v[idx] : 0.0f));
    }

    TEST_CASE("synthesize_pair: everything off with zero variances gives piecewise-constant views") {
        auto cfg = all_off();
        cfg.gmm_std = {0.0, 0.0};
        const auto labels = blob_labels(24, 20);
        const auto pair = synthesize_pair(labels, cfg, RngStream(21));
        CHECK(pair.labels == labels);
        for (const auto *v : {&pair.v1, &pair.v2}) {
            std::map<std::uint16_t, float> value;
            for (std::int64_t i = 0; i < labels.size(); ++i) {
                const auto it = value.emplace(labels[i], (*v)[i]).first;
                REQUIRE(it->second == (*v)[i]);
            }
        }
        CHECK(pair.provenance.view1.gmm != pair.provenance.view2.gmm);
    }

    TEST_CASE("synthesize_pair: default config is deterministic and the geometry is shared") {
        const AugmentationConfig cfg;
        const auto labels = blob_labels(32, 22);
        const auto a = synthesize_pair(labels, cfg, RngStream(23).derive("pair", 0));
        const auto b = synthesize_pair(labels, cfg, RngStream(23).derive("pair", 0));
        CHECK(a.v1 == b.v1);
        CHECK(a.v2 == b.v2);
        CHECK(a.labels == b.labels);
        REQUIRE(a.provenance.view1.geometric.has_value());
        CHECK(a.provenance.view1.geometric == a.provenance.view2.geometric);
        CHECK(a.provenance.stream == "23/pair:0");
        const auto j = to_json(a.provenance);
        CHECK(j.at("view1").at("stages").size() == cfg.pass_stages(Pass::offline).size());
        CHECK(a.v1 != a.v2);
    }

    TEST_CASE("synthesize_pair: over 100 pairs only labelled voxels can be nonzero") {
        const AugmentationConfig cfg;
        for (std::uint64_t s = 0; s < 100; ++s) {
            const auto labels = blob_labels(16, 100 + s, 3);
            const auto pair = synthesize_pair(labels, cfg, RngStream(s));
            REQUIRE(pair.provenance.view1.geometric == pair.provenance.view2.geometric);
            for (std::int64_t i = 0; i < labels.size(); ++i) {
                if (pair.labels[i] == 0) {
                    REQUIRE(pair.v1[i] == 0.0f);
                    REQUIRE(pair.v2[i] == 0.0f);
                }
            }
        }
    }

    TEST_CASE("offline then online equals the concatenated stage list") {
        AugmentationConfig cfg;
        for (auto &s : cfg.stages) s.probability = 0.7;
        cfg.settings(Stage::blur).pass = Pass::online;
        const auto labels = blob_labels(24, 24);
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            const RngStream rng = RngStream(seed).derive("pair", 0);
            auto split = synthesize_pair(labels, cfg, rng);
            run_online(split, cfg, rng);
            auto stages = cfg.pass_stages(Pass::offline);
            for (Stage s : cfg.pass_stages(Pass::online)) stages.push_back(s);
            const auto joint = synthesize_pair(labels, cfg, rng, stages);
            CHECK(split.v1 == joint.v1);
            CHECK(split.v2 == joint.v2);
            CHECK(split.labels == joint.labels);
            CHECK(to_json(split.provenance) == to_json(joint.provenance));
        }
    }

    TEST_CASE("single-view run_stages draws view-1 streams and needs labels for zero_background") {
        const AugmentationConfig cfg;
        const auto labels = blob_labels(16, 25);
        const RngStream rng(26);
        auto pair = synthesize_pair(labels, cfg, rng, {});
        auto single = pair.v1;
        PairProvenance p1, p2;
        run_stages(cfg.pass_stages(Pass::online), &single, nullptr, nullptr, cfg, rng, p1);
        run_stages(cfg.pass_stages(Pass::online), &pair.v1, &pair.v2, nullptr, cfg, rng, p2);
        CHECK(single == pair.v1);
        CHECK(p1.view2.stages.empty());
        auto v = pair.v1;
        PairProvenance p3;
        CHECK_THROWS_AS(run_stages({Stage::zero_background}, &v, nullptr, nullptr, cfg, rng, p3), Error);
    }
}
