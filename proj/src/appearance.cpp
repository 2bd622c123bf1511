#include "voxsynth/appearance.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "voxsynth/fft.hpp"
#include "voxsynth/noise.hpp"

namespace voxsynth {
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kStageCount> kStageNames{
    "texture", "bias", "gamma", "noise", "blur", "sharpen", "resolution", "gibbs", "spikes", "motion",
    "geometric", "zero_background"};

void check_range(const Range &r, const char *name) {
    if (!(r.lo <= r.hi)) fail(ErrorCode::invalid_argument, std::string(name) + ": range lower bound exceeds upper");
}
void check_range(const IntRange &r, const char *name) {
    if (r.lo > r.hi) fail(ErrorCode::invalid_argument, std::string(name) + ": range lower bound exceeds upper");
}
void check_probability(double p, const std::string &name) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::invalid_argument, name + ": probability outside [0,1]");
}

std::vector<double> to_double(const IntensityVolume &vol) { return {vol.values.begin(), vol.values.end()}; }

void store(IntensityVolume &vol, const std::vector<double> &v) {
    for (std::size_t i = 0; i < v.size(); ++i) vol.values[i] = static_cast<float>(v[i]);
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) return {1.0};
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double sum = 0.0;
    for (int t = -r; t <= r; ++t) {
        k[t + r] = std::exp(-0.5 * (t * t) / (sigma * sigma));
        sum += k[t + r];
    }
    for (auto &w : k) w /= sum;
    return k;
}

// One axis of a separable convolution with clamped edges.
void convolve_axis(std::vector<double> &data, const Index3 &dims, int axis, const std::vector<double> &kernel) {
    if (kernel.size() == 1) return;
    const std::int64_t r = static_cast<std::int64_t>(kernel.size() / 2);
    const std::int64_t n = dims[axis];
    const std::int64_t strides[3] = {dims[1] * dims[2], dims[2], 1};
    const std::int64_t stride = strides[axis];
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    std::vector<double> line(static_cast<std::size_t>(n));
    for (std::int64_t p = 0; p < dims[a1]; ++p)
        for (std::int64_t q = 0; q < dims[a2]; ++q) {
            const std::int64_t base = p * strides[a1] + q * strides[a2];
            for (std::int64_t x = 0; x < n; ++x) line[x] = data[base + x * stride];
            for (std::int64_t x = 0; x < n; ++x) {
                double acc = 0.0;
                for (std::int64_t t = -r; t <= r; ++t) {
                    const std::int64_t s = std::clamp<std::int64_t>(x + t, 0, n - 1);
                    acc += kernel[t + r] * line[s];
                }
                data[base + x * stride] = acc;
            }
        }
}

std::vector<double> gaussian(std::vector<double> data, const Index3 &dims, const Vec3 &sigma) {
    for (int a = 0; a < 3; ++a) convolve_axis(data, dims, a, gaussian_kernel(sigma[a]));
    return data;
}

void finish(IntensityVolume &vol, const std::vector<double> &v) {
    store(vol, v);
    minmax_normalize(vol);
}

json vec_json(const Vec3 &v) { return json::array({v[0], v[1], v[2]}); }
Vec3 vec_from(const json &j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

std::string_view stage_name(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

Stage stage_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kStageCount; ++i) {
        if (kStageNames[i] == name) return static_cast<Stage>(i);
    }
    fail(ErrorCode::invalid_argument, "unknown augmentation stage: " + std::string(name));
}

std::string_view pass_name(Pass p) { return p == Pass::offline ? "offline" : "online"; }

Pass pass_from_name(std::string_view name) {
    if (name == "offline") return Pass::offline;
    if (name == "online") return Pass::online;
    fail(ErrorCode::invalid_argument, "unknown pass: " + std::string(name));
}

std::array<StageSettings, kStageCount> AugmentationConfig::default_stages() {
    std::array<StageSettings, kStageCount> s{};
    for (auto &x : s) x = StageSettings{0.33, Pass::offline};
    s[static_cast<std::size_t>(Stage::texture)].probability = 1.0;
    s[static_cast<std::size_t>(Stage::geometric)].probability = 1.0;
    s[static_cast<std::size_t>(Stage::zero_background)].probability = 1.0;
    s[static_cast<std::size_t>(Stage::gamma)].pass = Pass::online;
    s[static_cast<std::size_t>(Stage::noise)].pass = Pass::online;
    return s;
}

std::vector<Stage> AugmentationConfig::pass_stages(Pass p) const {
    std::vector<Stage> out;
    for (Stage s : kStageOrder) {
        if (settings(s).pass == p) out.push_back(s);
    }
    return out;
}

void AugmentationConfig::validate() const {
    check_range(gmm_mean, "gmm_mean");
    check_range(gmm_std, "gmm_std");
    if (gmm_std.lo < 0.0) fail(ErrorCode::invalid_argument, "gmm_std must be non-negative");
    for (Stage s : kStageOrder) check_probability(settings(s).probability, std::string(stage_name(s)));
    if (texture_octaves.empty()) fail(ErrorCode::invalid_argument, "texture_octaves must be non-empty");
    check_range(texture_amplitude, "texture_amplitude");
    check_range(bias_coefficient, "bias_coefficient");
    check_range(gamma, "gamma");
    if (gamma.lo < 0.0) fail(ErrorCode::invalid_argument, "gamma must be non-negative");
    check_range(noise_std, "noise_std");
    check_range(blur_sigma, "blur_sigma");
    check_range(sharpen_alpha, "sharpen_alpha");
    check_range(sharpen_sigma1, "sharpen_sigma1");
    check_range(sharpen_sigma2, "sharpen_sigma2");
    check_range(resolution_factor, "resolution_factor");
    if (resolution_factor.lo < 1) fail(ErrorCode::invalid_argument, "resolution factor must be positive");
    check_range(gibbs_alpha, "gibbs_alpha");
    check_range(spike_count, "spike_count");
    if (spike_count.lo < 0) fail(ErrorCode::invalid_argument, "spike count must be non-negative");
    check_range(spike_intensity, "spike_intensity");
    check_range(motion_weight, "motion_weight");
    check_range(motion_shift, "motion_shift");
    for (double p : flip_probability) check_probability(p, "flip_probability");
    check_range(rotation, "rotation");
    check_range(scale, "scale");
    if (scale.lo <= 0.0) fail(ErrorCode::invalid_argument, "scale must be positive");
    check_range(shear, "shear");
    check_range(translation, "translation");
}

void to_json(json &j, const AugmentationConfig &c) {
    json stages = json::object();
    for (Stage s : kStageOrder) {
        stages[std::string(stage_name(s))] = {{"p", c.settings(s).probability},
                                              {"pass", std::string(pass_name(c.settings(s).pass))}};
    }
    j = json{{"gmm_mean", c.gmm_mean},
             {"gmm_std", c.gmm_std},
             {"stages", stages},
             {"texture_octaves", c.texture_octaves},
             {"texture_amplitude", c.texture_amplitude},
             {"bias_coefficient", c.bias_coefficient},
             {"gamma", c.gamma},
             {"noise_std", c.noise_std},
             {"blur_sigma", c.blur_sigma},
             {"sharpen_alpha", c.sharpen_alpha},
             {"sharpen_sigma1", c.sharpen_sigma1},
             {"sharpen_sigma2", c.sharpen_sigma2},
             {"resolution_factor", c.resolution_factor},
             {"gibbs_alpha", c.gibbs_alpha},
             {"spike_count", c.spike_count},
             {"spike_intensity", c.spike_intensity},
             {"motion_weight", c.motion_weight},
             {"motion_shift", c.motion_shift},
             {"flip_probability", c.flip_probability},
             {"rotation", c.rotation},
             {"scale", c.scale},
             {"shear", c.shear},
             {"translation", c.translation}};
}

void from_json(const json &j, AugmentationConfig &c) {
    auto get = [&](const char *key, auto &field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("gmm_mean", c.gmm_mean);
    get("gmm_std", c.gmm_std);
    if (j.contains("stages")) {
        for (const auto &[name, v] : j.at("stages").items()) {
            auto &st = c.settings(stage_from_name(name));
            if (v.contains("p")) st.probability = v.at("p").get<double>();
            if (v.contains("pass")) st.pass = pass_from_name(v.at("pass").get<std::string>());
        }
    }
    get("texture_octaves", c.texture_octaves);
    get("texture_amplitude", c.texture_amplitude);
    get("bias_coefficient", c.bias_coefficient);
    get("gamma", c.gamma);
    get("noise_std", c.noise_std);
    get("blur_sigma", c.blur_sigma);
    get("sharpen_alpha", c.sharpen_alpha);
    get("sharpen_sigma1", c.sharpen_sigma1);
    get("sharpen_sigma2", c.sharpen_sigma2);
    get("resolution_factor", c.resolution_factor);
    get("gibbs_alpha", c.gibbs_alpha);
    get("spike_count", c.spike_count);
    get("spike_intensity", c.spike_intensity);
    get("motion_weight", c.motion_weight);
    get("motion_shift", c.motion_shift);
    get("flip_probability", c.flip_probability);
    get("rotation", c.rotation);
    get("scale", c.scale);
    get("shear", c.shear);
    get("translation", c.translation);
}

// ---------------------------------------------------------------- stages

GmmParams sample_gmm_params(std::uint16_t max_label, const Range &mean, const Range &stddev, RngStream &rng) {
    GmmParams p;
    const std::size_t n = static_cast<std::size_t>(max_label) + 1;
    p.means.resize(n);
    p.stds.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        p.means[k] = rng.uniform(mean.lo, mean.hi);
        p.stds[k] = rng.uniform(stddev.lo, stddev.hi);
    }
    return p;
}

IntensityVolume sample_gmm_raw(const LabelVolume &labels, const GmmParams &params, RngStream &rng) {
    if (params.means.size() != params.stds.size()) {
        fail(ErrorCode::invalid_argument, "GMM means and stds differ in length");
    }
    for (double s : params.stds) {
        if (!(s >= 0.0)) fail(ErrorCode::invalid_argument, "GMM standard deviations must be non-negative");
    }
    if (static_cast<std::size_t>(max_label(labels)) >= params.means.size()) {
        fail(ErrorCode::invalid_argument, "GMM parameters missing for label " + std::to_string(max_label(labels)));
    }
    IntensityVolume out(labels.meta);
    for (std::size_t i = 0; i < labels.values.size(); ++i) {
        const auto k = labels.values[i];
        // Zero-variance labels skip the draw so degenerate mixtures stay exact.
        out.values[i] = params.stds[k] > 0.0 ? static_cast<float>(rng.normal(params.means[k], params.stds[k]))
                                             : static_cast<float>(params.means[k]);
    }
    return out;
}

IntensityVolume sample_gmm_volume(const LabelVolume &labels, const GmmParams &params, RngStream &rng) {
    auto out = sample_gmm_raw(labels, params, rng);
    minmax_normalize(out);
    return out;
}

void apply_texture(IntensityVolume &vol, const ScalarField &field) {
    require_same_lattice(vol.meta, field.meta, "texture");
    auto v = to_double(vol);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= static_cast<double>(field.values[i]);
    finish(vol, v);
}

std::vector<std::array<int, 3>> bias_monomials() {
    std::vector<std::array<int, 3>> out;
    for (int deg = 0; deg <= 3; ++deg)
        for (int a = deg; a >= 0; --a)
            for (int b = deg - a; b >= 0; --b) out.push_back({a, b, deg - a - b});
    return out;
}

void apply_bias_field(IntensityVolume &vol, const std::vector<double> &coefficients) {
    const auto terms = bias_monomials();
    if (coefficients.size() != terms.size()) {
        fail(ErrorCode::invalid_argument, "bias field needs " + std::to_string(terms.size()) + " coefficients");
    }
    const auto &d = vol.meta.dims;
    // powers[axis][x][e] = coord^e with coord in [-1,1].
    std::array<std::vector<std::array<double, 4>>, 3> powers;
    for (int a = 0; a < 3; ++a) {
        powers[a].resize(static_cast<std::size_t>(d[a]));
        for (std::int64_t x = 0; x < d[a]; ++x) {
            const double c = d[a] > 1 ? 2.0 * static_cast<double>(x) / static_cast<double>(d[a] - 1) - 1.0 : 0.0;
            powers[a][x] = {1.0, c, c * c, c * c * c};
        }
    }
    auto v = to_double(vol);
    for (std::int64_t i = 0; i < d[0]; ++i)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t k = 0; k < d[2]; ++k) {
                double p = 0.0;
                for (std::size_t t = 0; t < terms.size(); ++t) {
                    if (coefficients[t] == 0.0) continue;
                    p += coefficients[t] * powers[0][i][terms[t][0]] * powers[1][j][terms[t][1]] *
                         powers[2][k][terms[t][2]];
                }
                v[vol.meta.linear(i, j, k)] *= std::exp(p);
            }
    finish(vol, v);
}

void apply_gamma(IntensityVolume &vol, double gamma) {
    if (gamma < 0.0) fail(ErrorCode::invalid_argument, "gamma must be non-negative");
    auto v = to_double(vol);
    for (auto &x : v) x = std::pow(std::max(x, 0.0), gamma);
    finish(vol, v);
}

void apply_noise(IntensityVolume &vol, double sigma, RngStream &rng) {
    if (sigma < 0.0) fail(ErrorCode::invalid_argument, "noise sigma must be non-negative");
    if (sigma == 0.0) return;
    auto v = to_double(vol);
    for (auto &x : v) x = std::clamp(x + rng.normal(0.0, sigma), 0.0, 1.0);
    finish(vol, v);
}

void gaussian_filter(IntensityVolume &vol, const Vec3 &sigma) {
    store(vol, gaussian(to_double(vol), vol.meta.dims, sigma));
}

void apply_blur(IntensityVolume &vol, const Vec3 &sigma) {
    for (double s : sigma) {
        if (s < 0.0) fail(ErrorCode::invalid_argument, "blur sigma must be non-negative");
    }
    finish(vol, gaussian(to_double(vol), vol.meta.dims, sigma));
}

void apply_sharpen(IntensityVolume &vol, double alpha, double sigma1, double sigma2) {
    if (sigma1 < 0.0 || sigma2 < 0.0) fail(ErrorCode::invalid_argument, "sharpen sigmas must be non-negative");
    const auto v = to_double(vol);
    const auto g1 = gaussian(v, vol.meta.dims, {sigma1, sigma1, sigma1});
    const auto g2 = gaussian(v, vol.meta.dims, {sigma2, sigma2, sigma2});
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] + alpha * (g1[i] - g2[i]);
    finish(vol, out);
}

void apply_resolution(IntensityVolume &vol, int factor) {
    if (factor < 1) fail(ErrorCode::invalid_argument, "resolution factor must be positive");
    if (factor == 1) return;
    const auto &d = vol.meta.dims;
    GridMeta coarse_meta;
    for (int a = 0; a < 3; ++a) coarse_meta.dims[a] = (d[a] + factor - 1) / factor;
    std::vector<double> sum(static_cast<std::size_t>(coarse_meta.voxel_count()), 0.0);
    std::vector<int> count(sum.size(), 0);
    for (std::int64_t i = 0; i < d[0]; ++i)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t k = 0; k < d[2]; ++k) {
                const auto c = coarse_meta.linear(i / factor, j / factor, k / factor);
                sum[c] += vol.at(i, j, k);
                ++count[c];
            }
    IntensityVolume coarse(coarse_meta);
    for (std::size_t c = 0; c < sum.size(); ++c) coarse.values[c] = static_cast<float>(sum[c] / count[c]);

    std::vector<double> out(vol.values.size());
    const double f = factor;
    for (std::int64_t i = 0; i < d[0]; ++i)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t k = 0; k < d[2]; ++k) {
                const Vec3 p{(i + 0.5) / f - 0.5, (j + 0.5) / f - 0.5, (k + 0.5) / f - 0.5};
                out[vol.meta.linear(i, j, k)] = trilinear_sample(coarse, p);
            }
    finish(vol, out);
}

double gibbs_radius(const Index3 &bin, const Index3 &dims) {
    double r2 = 0.0, corner2 = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double f = static_cast<double>(signed_frequency(bin[a], dims[a]));
        const double half = static_cast<double>(dims[a] / 2);
        r2 += f * f;
        corner2 += half * half;
    }
    return corner2 > 0.0 ? std::sqrt(r2 / corner2) : 0.0;
}

void apply_gibbs(IntensityVolume &vol, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) fail(ErrorCode::invalid_argument, "gibbs alpha must lie in [0,1]");
    const auto &d = vol.meta.dims;
    auto spec = fft3_forward(to_double(vol), d);
    const double cutoff = 1.0 - alpha;
    for (std::int64_t i = 0; i < d[0]; ++i)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t k = 0; k < d[2]; ++k) {
                if (gibbs_radius({i, j, k}, d) > cutoff) spec[vol.meta.linear(i, j, k)] = 0.0;
            }
    finish(vol, fft3_inverse_real(spec, d));
}

void apply_spikes(IntensityVolume &vol, const std::vector<Spike> &spikes) {
    if (spikes.empty()) return;
    const auto &d = vol.meta.dims;
    auto spec = fft3_forward(to_double(vol), d);
    const double dc = std::abs(spec[0]);
    for (const auto &s : spikes) {
        Index3 mirror{};
        for (int a = 0; a < 3; ++a) {
            if (s.bin[a] < 0 || s.bin[a] >= d[a]) fail(ErrorCode::invalid_argument, "spike bin outside the spectrum");
            mirror[a] = (d[a] - s.bin[a]) % d[a];
        }
        const auto z = std::polar(s.intensity * dc, s.phase);
        spec[vol.meta.linear(s.bin)] += z;
        spec[vol.meta.linear(mirror)] += std::conj(z);
    }
    finish(vol, fft3_inverse_real(spec, d));
}

void apply_motion(IntensityVolume &vol, double weight, const Vec3 &shift) {
    if (weight == 0.0) return;
    const auto &d = vol.meta.dims;
    auto spec = fft3_forward(to_double(vol), d);
    for (std::int64_t i = 0; i < d[0]; ++i)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t k = 0; k < d[2]; ++k) {
                const double phase = -2.0 * std::numbers::pi *
                                     (signed_frequency(i, d[0]) * shift[0] / d[0] +
                                      signed_frequency(j, d[1]) * shift[1] / d[1] +
                                      signed_frequency(k, d[2]) * shift[2] / d[2]);
                spec[vol.meta.linear(i, j, k)] *= (1.0 - weight) + weight * std::polar(1.0, phase);
            }
    finish(vol, fft3_inverse_real(spec, d));
}

IntensityVolume warp_trilinear(const IntensityVolume &vol, const AffineTransform &xf) {
    IntensityVolume out(vol.meta);
    const auto &d = vol.meta.dims;
    for (std::int64_t i = 0; i < d[0]; ++i)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t k = 0; k < d[2]; ++k) {
                const Vec3 p = xf.inverse_map({static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)});
                out.at(i, j, k) = static_cast<float>(trilinear_sample(vol, p));
            }
    return out;
}

LabelVolume warp_nearest(const LabelVolume &labels, const AffineTransform &xf) {
    LabelVolume out(labels.meta);
    const auto &d = labels.meta.dims;
    for (std::int64_t i = 0; i < d[0]; ++i)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t k = 0; k < d[2]; ++k) {
                const Vec3 p = xf.inverse_map({static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)});
                out.at(i, j, k) = nearest_sample(labels, p);
            }
    return out;
}

void apply_shared_geometric(IntensityVolume *v1, IntensityVolume *v2, LabelVolume *labels, const GeometricDraw &draw) {
    const GridMeta *meta = v1 ? &v1->meta : v2 ? &v2->meta : labels ? &labels->meta : nullptr;
    if (!meta) return;
    if (v1 && v2) require_same_lattice(v1->meta, v2->meta, "shared geometric");
    if (labels) require_same_lattice(*meta, labels->meta, "shared geometric");
    for (int a = 0; a < 3; ++a) {
        if (!draw.flips[a]) continue;
        if (v1) flip_axis(*v1, a);
        if (v2) flip_axis(*v2, a);
        if (labels) flip_axis(*labels, a);
    }
    if (draw.affine == AffineParams{}) return;
    const AffineTransform xf(draw.affine, grid_center(*meta));
    if (v1) *v1 = warp_trilinear(*v1, xf);
    if (v2) *v2 = warp_trilinear(*v2, xf);
    if (labels) *labels = warp_nearest(*labels, xf);
}

void zero_background(IntensityVolume &vol, const LabelVolume &labels) {
    require_same_lattice(vol.meta, labels.meta, "zero_background");
    for (std::size_t i = 0; i < vol.values.size(); ++i) {
        if (labels.values[i] == 0) vol.values[i] = 0.0f;
    }
}

// ---------------------------------------------------------------- pipeline

GeometricDraw geometric_from_json(const json &p) {
    GeometricDraw g;
    if (p.is_null()) return g;
    g.flips = p.at("flips").get<std::array<bool, 3>>();
    g.affine.rotation = vec_from(p.at("rotation"));
    g.affine.scale = vec_from(p.at("scale"));
    g.affine.shear = vec_from(p.at("shear"));
    g.affine.translation = vec_from(p.at("translation"));
    return g;
}

StageRecord draw_stage(Stage stage, const AugmentationConfig &cfg, const GridMeta &meta, RngStream &rng) {
    StageRecord rec;
    rec.stage = stage;
    rec.firing_draw = rng.uniform();
    rec.fired = rec.firing_draw < cfg.settings(stage).probability;
    if (!rec.fired) return rec;

    auto vec_draw = [&](const Range &r) { return Vec3{rng.uniform(r.lo, r.hi), rng.uniform(r.lo, r.hi), rng.uniform(r.lo, r.hi)}; };
    switch (stage) {
        case Stage::texture:
            rec.params = {{"amplitude", rng.uniform(cfg.texture_amplitude.lo, cfg.texture_amplitude.hi)}};
            break;
        case Stage::bias: {
            std::vector<double> c(bias_monomials().size());
            for (auto &x : c) x = rng.uniform(cfg.bias_coefficient.lo, cfg.bias_coefficient.hi);
            rec.params = {{"coefficients", c}};
            break;
        }
        case Stage::gamma:
            rec.params = {{"gamma", rng.uniform(cfg.gamma.lo, cfg.gamma.hi)}};
            break;
        case Stage::noise:
            rec.params = {{"std", rng.uniform(cfg.noise_std.lo, cfg.noise_std.hi)}};
            break;
        case Stage::blur:
            rec.params = {{"sigma", vec_json(vec_draw(cfg.blur_sigma))}};
            break;
        case Stage::sharpen: {
            const double alpha = rng.uniform(cfg.sharpen_alpha.lo, cfg.sharpen_alpha.hi);
            const double s1 = rng.uniform(cfg.sharpen_sigma1.lo, cfg.sharpen_sigma1.hi);
            const double s2 = rng.uniform(cfg.sharpen_sigma2.lo, cfg.sharpen_sigma2.hi);
            rec.params = {{"alpha", alpha}, {"sigma1", s1}, {"sigma2", s2}};
            break;
        }
        case Stage::resolution:
            rec.params = {{"factor", rng.uniform_int(cfg.resolution_factor.lo, cfg.resolution_factor.hi)}};
            break;
        case Stage::gibbs:
            rec.params = {{"alpha", rng.uniform(cfg.gibbs_alpha.lo, cfg.gibbs_alpha.hi)}};
            break;
        case Stage::spikes: {
            const auto n = rng.uniform_int(cfg.spike_count.lo, cfg.spike_count.hi);
            json list = json::array();
            for (std::int64_t s = 0; s < n; ++s) {
                Index3 bin{0, 0, 0};
                while (bin == Index3{0, 0, 0}) {
                    for (int a = 0; a < 3; ++a) bin[a] = rng.uniform_int(0, meta.dims[a] - 1);
                    if (meta.voxel_count() == 1) break;
                }
                const double intensity = rng.uniform(cfg.spike_intensity.lo, cfg.spike_intensity.hi);
                const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
                list.push_back({{"bin", bin}, {"intensity", intensity}, {"phase", phase}});
            }
            rec.params = {{"spikes", list}};
            break;
        }
        case Stage::motion: {
            const double w = rng.uniform(cfg.motion_weight.lo, cfg.motion_weight.hi);
            rec.params = {{"weight", w}, {"shift", vec_json(vec_draw(cfg.motion_shift))}};
            break;
        }
        case Stage::geometric: {
            std::array<bool, 3> flips{};
            for (int a = 0; a < 3; ++a) flips[a] = rng.bernoulli(cfg.flip_probability[a]);
            const Vec3 rot = vec_draw(cfg.rotation);
            const Vec3 scale = vec_draw(cfg.scale);
            const Vec3 shear = vec_draw(cfg.shear);
            const Vec3 trans = vec_draw(cfg.translation);
            rec.params = {{"flips", flips},
                          {"rotation", vec_json(rot)},
                          {"scale", vec_json(scale)},
                          {"shear", vec_json(shear)},
                          {"translation", vec_json(trans)}};
            break;
        }
        case Stage::zero_background:
            rec.params = json::object();
            break;
    }
    return rec;
}

void apply_intensity_stage(IntensityVolume &vol, const StageRecord &rec, const AugmentationConfig &cfg,
                           RngStream &stage_rng) {
    if (!rec.fired) return;
    const auto &p = rec.params;
    switch (rec.stage) {
        case Stage::texture: {
            auto field_rng = stage_rng.derive("field", 0);
            const auto field =
                make_perlin_field(vol.meta, cfg.texture_octaves, p.at("amplitude").get<double>(), field_rng);
            apply_texture(vol, field);
            break;
        }
        case Stage::bias:
            apply_bias_field(vol, p.at("coefficients").get<std::vector<double>>());
            break;
        case Stage::gamma:
            apply_gamma(vol, p.at("gamma").get<double>());
            break;
        case Stage::noise:
            apply_noise(vol, p.at("std").get<double>(), stage_rng);
            break;
        case Stage::blur:
            apply_blur(vol, vec_from(p.at("sigma")));
            break;
        case Stage::sharpen:
            apply_sharpen(vol, p.at("alpha").get<double>(), p.at("sigma1").get<double>(), p.at("sigma2").get<double>());
            break;
        case Stage::resolution:
            apply_resolution(vol, p.at("factor").get<int>());
            break;
        case Stage::gibbs:
            apply_gibbs(vol, p.at("alpha").get<double>());
            break;
        case Stage::spikes: {
            std::vector<Spike> spikes;
            for (const auto &s : p.at("spikes")) {
                spikes.push_back({s.at("bin").get<Index3>(), s.at("intensity").get<double>(), s.at("phase").get<double>()});
            }
            apply_spikes(vol, spikes);
            break;
        }
        case Stage::motion:
            apply_motion(vol, p.at("weight").get<double>(), vec_from(p.at("shift")));
            break;
        case Stage::geometric:
        case Stage::zero_background:
            fail(ErrorCode::invalid_argument, "stage " + std::string(stage_name(rec.stage)) + " is not per-view");
    }
}

void run_stages(const std::vector<Stage> &stages, IntensityVolume *v1, IntensityVolume *v2, LabelVolume *labels,
                const AugmentationConfig &cfg, const RngStream &rng, PairProvenance &prov) {
    cfg.validate();
    if (!v1) fail(ErrorCode::invalid_argument, "run_stages needs at least one view");
    if (v2) require_same_lattice(v1->meta, v2->meta, "pair views");
    if (labels) require_same_lattice(v1->meta, labels->meta, "pair labels");
    IntensityVolume *views[2] = {v1, v2};
    ViewProvenance *records[2] = {&prov.view1, &prov.view2};

    for (Stage stage : stages) {
        if (stage == Stage::geometric || stage == Stage::zero_background) {
            auto srng = rng.derive(stage_name(stage), 0);
            auto rec = draw_stage(stage, cfg, v1->meta, srng);
            if (rec.fired) {
                if (stage == Stage::geometric) {
                    apply_shared_geometric(v1, v2, labels, geometric_from_json(rec.params));
                } else {
                    if (!labels) fail(ErrorCode::precondition, "zero_background needs the label map");
                    for (auto *v : views) {
                        if (v) zero_background(*v, *labels);
                    }
                }
            }
            for (int v = 0; v < 2; ++v) {
                if (!views[v]) continue;
                if (stage == Stage::geometric) records[v]->geometric = geometric_from_json(rec.params);
                records[v]->stages.push_back(rec);
            }
            continue;
        }
        for (int v = 0; v < 2; ++v) {
            if (!views[v]) continue;
            auto srng = rng.derive(stage_name(stage), static_cast<std::uint64_t>(v + 1));
            auto rec = draw_stage(stage, cfg, views[v]->meta, srng);
            apply_intensity_stage(*views[v], rec, cfg, srng);
            records[v]->stages.push_back(std::move(rec));
        }
    }
}

PairSample synthesize_pair(const LabelVolume &labels, const AugmentationConfig &cfg, const RngStream &rng) {
    return synthesize_pair(labels, cfg, rng, cfg.pass_stages(Pass::offline));
}

PairSample synthesize_pair(const LabelVolume &labels, const AugmentationConfig &cfg, const RngStream &rng,
                           const std::vector<Stage> &stages) {
    cfg.validate();
    PairSample pair;
    pair.labels = labels;
    pair.provenance.stream = rng.path_string();
    const auto k = max_label(labels);
    auto g1 = rng.derive("gmm", 1);
    auto g2 = rng.derive("gmm", 2);
    pair.provenance.view1.gmm = sample_gmm_params(k, cfg.gmm_mean, cfg.gmm_std, g1);
    pair.v1 = sample_gmm_volume(labels, pair.provenance.view1.gmm, g1);
    pair.provenance.view2.gmm = sample_gmm_params(k, cfg.gmm_mean, cfg.gmm_std, g2);
    pair.v2 = sample_gmm_volume(labels, pair.provenance.view2.gmm, g2);
    run_stages(stages, &pair.v1, &pair.v2, &pair.labels, cfg, rng, pair.provenance);
    return pair;
}

void run_online(PairSample &pair, const AugmentationConfig &cfg, const RngStream &rng) {
    run_stages(cfg.pass_stages(Pass::online), &pair.v1, &pair.v2, &pair.labels, cfg, rng, pair.provenance);
}

namespace {
json view_json(const ViewProvenance &v) {
    json stages = json::array();
    for (const auto &r : v.stages) {
        stages.push_back({{"stage", std::string(stage_name(r.stage))},
                          {"fired", r.fired},
                          {"firing_draw", r.firing_draw},
                          {"params", r.params}});
    }
    return {{"gmm", {{"means", v.gmm.means}, {"stds", v.gmm.stds}}}, {"stages", stages}};
}
}  // namespace

json to_json(const PairProvenance &p) {
    return {{"stream", p.stream}, {"view1", view_json(p.view1)}, {"view2", view_json(p.view2)}};
}

}  // namespace voxsynth
