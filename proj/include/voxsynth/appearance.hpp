#pragma once

// Appearance model: label map -> contrastive pair (V1, V2).
//
// Each view gets its own Gaussian-mixture intensities and then runs an
// ordered list of stages. Intensity stages draw independently per view;
// the geometric stage is drawn once and applied to V1, V2 and the labels.
// Every intensity stage ends with a min-max renormalisation.
//
// Stream layout under a pair stream R:
//   ("gmm", v)          mixture parameters and voxel draws of view v (1 or 2)
//   (stage_name, v)     firing draw and parameters of an intensity stage
//   ("geometric", 0)    shared flips and affine
// Because every stage owns its stream, running one subsequence of the stage
// list and then another equals running their concatenation.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "voxsynth/geometry.hpp"
#include "voxsynth/grid.hpp"
#include "voxsynth/ranges.hpp"
#include "voxsynth/rng.hpp"

namespace voxsynth {

enum class Stage {
    texture,
    bias,
    gamma,
    noise,
    blur,
    sharpen,
    resolution,
    gibbs,
    spikes,
    motion,
    geometric,
    zero_background,
};
inline constexpr std::size_t kStageCount = 12;

// Canonical execution order.
inline constexpr std::array<Stage, kStageCount> kStageOrder{
    Stage::texture, Stage::bias,  Stage::gamma,  Stage::noise,  Stage::blur,      Stage::sharpen,
    Stage::resolution, Stage::gibbs, Stage::spikes, Stage::motion, Stage::geometric, Stage::zero_background};

std::string_view stage_name(Stage s);
// Throws ErrorCode::invalid_argument for an unknown name.
Stage stage_from_name(std::string_view name);

enum class Pass { offline, online };
std::string_view pass_name(Pass p);
Pass pass_from_name(std::string_view name);

struct StageSettings {
    double probability = 0.33;
    Pass pass = Pass::offline;
    bool operator==(const StageSettings &) const = default;
};

struct GmmParams {
    std::vector<double> means;  // index = label
    std::vector<double> stds;
    bool operator==(const GmmParams &) const = default;
};

struct AugmentationConfig {
    Range gmm_mean{0.0, 1.0};
    Range gmm_std{0.01, 0.1};

    std::array<StageSettings, kStageCount> stages = default_stages();

    std::vector<double> texture_octaves{8.0, 16.0, 32.0};
    Range texture_amplitude{0.0, 0.5};
    Range bias_coefficient{0.0, 0.075};
    Range gamma{0.0, 4.5};
    Range noise_std{0.1, 0.1};
    Range blur_sigma{0.0, 0.1};  // per axis, voxels
    Range sharpen_alpha{1.0, 30.0};
    Range sharpen_sigma1{0.0, 3.0};
    Range sharpen_sigma2{0.0, 1.0};
    IntRange resolution_factor{2, 4};
    Range gibbs_alpha{0.0, 0.33};
    IntRange spike_count{1, 3};
    Range spike_intensity{0.05, 0.25};  // impulse magnitude / DC magnitude
    Range motion_weight{0.0, 0.5};
    Range motion_shift{-4.0, 4.0};  // per axis, voxels
    std::array<double, 3> flip_probability{0.5, 0.5, 0.5};
    Range rotation{-0.7853981633974483, 0.7853981633974483};
    Range scale{0.8, 1.2};
    Range shear{-0.2, 0.2};
    Range translation{-5.0, 5.0};

    StageSettings &settings(Stage s) { return stages[static_cast<std::size_t>(s)]; }
    const StageSettings &settings(Stage s) const { return stages[static_cast<std::size_t>(s)]; }

    // Stages of one pass, in canonical order.
    std::vector<Stage> pass_stages(Pass p) const;

    // Throws ErrorCode::invalid_argument on inverted ranges or probabilities
    // outside [0,1].
    void validate() const;

    // Corruptions fire with 0.33; texture, geometric and zero_background
    // always fire; gamma and noise run online.
    static std::array<StageSettings, kStageCount> default_stages();
};

void to_json(nlohmann::json &j, const AugmentationConfig &c);
// Missing keys keep their defaults.
void from_json(const nlohmann::json &j, AugmentationConfig &c);

// ---------------------------------------------------------------- stages

GmmParams sample_gmm_params(std::uint16_t max_label, const Range &mean, const Range &stddev, RngStream &rng);
// Raw N(mu_k, sigma_k^2) draws in linear voxel order, not normalised.
IntensityVolume sample_gmm_raw(const LabelVolume &labels, const GmmParams &params, RngStream &rng);
IntensityVolume sample_gmm_volume(const LabelVolume &labels, const GmmParams &params, RngStream &rng);

void apply_texture(IntensityVolume &vol, const ScalarField &field);

// 20 coefficients for the monomials x^a y^b z^c with a+b+c <= 3, in the
// order of bias_monomials().
std::vector<std::array<int, 3>> bias_monomials();
void apply_bias_field(IntensityVolume &vol, const std::vector<double> &coefficients);

void apply_gamma(IntensityVolume &vol, double gamma);
// Adds N(0, sigma^2) per voxel in linear order, then clips to [0,1].
void apply_noise(IntensityVolume &vol, double sigma, RngStream &rng);
// Separable Gaussian with kernel radius ceil(3 sigma), edges clamped.
void gaussian_filter(IntensityVolume &vol, const Vec3 &sigma);
void apply_blur(IntensityVolume &vol, const Vec3 &sigma);
// v + alpha (G_sigma1 v - G_sigma2 v).
void apply_sharpen(IntensityVolume &vol, double alpha, double sigma1, double sigma2);
// Block average by `factor`, then trilinear back to the original dims.
void apply_resolution(IntensityVolume &vol, int factor);

// Zeroes every frequency whose radius, relative to the corner of the
// spectrum, exceeds 1 - alpha. alpha = 0 keeps the whole spectrum.
void apply_gibbs(IntensityVolume &vol, double alpha);
double gibbs_radius(const Index3 &freq_bin, const Index3 &dims);

struct Spike {
    Index3 bin{0, 0, 0};
    double intensity = 0.0;  // fraction of the DC magnitude
    double phase = 0.0;
};
// Each spike is added at its bin and, conjugated, at the mirrored bin.
void apply_spikes(IntensityVolume &vol, const std::vector<Spike> &spikes);
// F <- F ((1 - w) + w exp(-2 pi i k.s / n)).
void apply_motion(IntensityVolume &vol, double weight, const Vec3 &shift);

struct GeometricDraw {
    std::array<bool, 3> flips{false, false, false};
    AffineParams affine;
    bool operator==(const GeometricDraw &) const = default;
};

template <class T>
void flip_axis(Volume<T> &vol, int axis) {
    const auto &d = vol.meta.dims;
    for (std::int64_t i = 0; i < d[0]; ++i)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t k = 0; k < d[2]; ++k) {
                Index3 m{i, j, k};
                m[axis] = d[axis] - 1 - m[axis];
                const std::int64_t a = vol.meta.linear(i, j, k), b = vol.meta.linear(m);
                if (a < b) std::swap(vol.values[a], vol.values[b]);
            }
}

IntensityVolume warp_trilinear(const IntensityVolume &vol, const AffineTransform &xf);
LabelVolume warp_nearest(const LabelVolume &labels, const AffineTransform &xf);

// Flips first, then the affine about the grid centre. Either view may be
// null; the labels may be null.
void apply_shared_geometric(IntensityVolume *v1, IntensityVolume *v2, LabelVolume *labels, const GeometricDraw &draw);

void zero_background(IntensityVolume &vol, const LabelVolume &labels);

// ---------------------------------------------------------------- pipeline

struct StageRecord {
    Stage stage = Stage::texture;
    bool fired = false;
    double firing_draw = 0.0;
    nlohmann::json params;  // drawn parameters; null when not fired
};

struct ViewProvenance {
    GmmParams gmm;
    std::vector<StageRecord> stages;
    std::optional<GeometricDraw> geometric;  // set once the geometric stage has run
};

struct PairProvenance {
    std::string stream;  // path of the pair stream
    ViewProvenance view1;
    ViewProvenance view2;
};
nlohmann::json to_json(const PairProvenance &p);

struct PairSample {
    LabelVolume labels;
    IntensityVolume v1;
    IntensityVolume v2;
    PairProvenance provenance;
};

// Draws one stage's firing decision and parameters from its stream. Params
// are null when the stage does not fire.
StageRecord draw_stage(Stage stage, const AugmentationConfig &cfg, const GridMeta &meta, RngStream &rng);
GeometricDraw geometric_from_json(const nlohmann::json &params);

// Applies a recorded intensity stage to one view. `stage_rng` is the stream
// the record was drawn from; it feeds the texture field and the per-voxel
// noise.
void apply_intensity_stage(IntensityVolume &vol, const StageRecord &record, const AugmentationConfig &cfg,
                           RngStream &stage_rng);

// Runs `stages` in the given order on the pair. v2 may be null for a single
// volume; labels may be null unless zero_background fires.
void run_stages(const std::vector<Stage> &stages, IntensityVolume *v1, IntensityVolume *v2, LabelVolume *labels,
                const AugmentationConfig &cfg, const RngStream &rng, PairProvenance &prov);

// GMM draws for both views followed by `stages` (default: the offline pass).
PairSample synthesize_pair(const LabelVolume &labels, const AugmentationConfig &cfg, const RngStream &rng);
PairSample synthesize_pair(const LabelVolume &labels, const AugmentationConfig &cfg, const RngStream &rng,
                           const std::vector<Stage> &stages);

// The online pass on a stored pair, drawn from the same pair stream.
void run_online(PairSample &pair, const AugmentationConfig &cfg, const RngStream &rng);

}  // namespace voxsynth
