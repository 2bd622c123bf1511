#pragma once

// Label-ensemble synthesis.
//
// One label map is built as follows:
//   1. N ~ U{n_lo..n_hi} templates are drawn from the bank.
//   2. Template i is centred, warped by a random affine and painted with
//      label i, overwriting earlier labels.
//   3. The map is median-smoothed.
//   4. With probability P(p_fg > threshold) a Perlin-deformed ball S masks
//      the map: labels outside S become 0, labels inside S are incremented.
//   5. For masked maps, with probability P(p_env > threshold) a shell
//      E = dilate(S, w) & !erode(S, w) is incremented once more.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxsynth/geometry.hpp"
#include "voxsynth/grid.hpp"
#include "voxsynth/ranges.hpp"
#include "voxsynth/rng.hpp"
#include "voxsynth/templates.hpp"

namespace voxsynth {

struct LabelEngineConfig {
    std::int64_t grid = kTemplateGrid;
    IntRange n_templates{20, 40};
    bool sample_with_replacement = true;

    double p_fg_threshold = 1.0 / 3.0;
    double p_envelope_threshold = 0.5;
    IntRange sphere_radius{48, 72};
    IntRange sphere_center{32, 96};  // per axis
    Range perlin_sigma{1.0, 5.0};    // peak deformation of the sphere, voxels
    std::vector<double> deformation_octaves{8.0, 16.0, 32.0};
    IntRange envelope_width{2, 4};
    // Increment only E \ S instead of the whole shell E.
    bool envelope_outer_only = false;

    Range translation{-5.0, 5.0};
    Range rotation{-3.141592653589793, 3.141592653589793};
    // Scale factor is 1 + s with s drawn from this range.
    Range scale_perturbation{-0.5, 0.5};
    Range shear{-0.5, 0.5};

    int median_radius = 1;

    // Throws ErrorCode::invalid_argument on inverted ranges or bad thresholds.
    void validate() const;
};

void to_json(nlohmann::json &j, const LabelEngineConfig &c);
void from_json(const nlohmann::json &j, LabelEngineConfig &c);

// Draw order: rotation[3], translation[3], scale[3], shear[3].
AffineParams sample_affine(const LabelEngineConfig &cfg, RngStream &rng);

// Paints `label` wherever the affinely warped template is true. The warp
// rotates about the grid centre and samples the template with nearest
// neighbour; points that map outside the template's bounding box are false.
void place_template(LabelVolume &labels, const BinaryTemplate &tmpl, std::uint16_t label, const AffineParams &affine);

// Median of the sorted (2r+1)^3 neighbourhood, edges clamped.
LabelVolume median_smooth(const LabelVolume &labels, int radius);

struct ForegroundMask {
    MaskVolume mask;  // S; empty when not applied
    bool applied = false;
    double p_fg = 0.0;
    std::int64_t radius = 0;
    Index3 center{0, 0, 0};
    double sigma = 0.0;

    bool envelope_applied = false;
    double p_envelope = 0.0;
    std::optional<int> envelope_width;
};

ForegroundMask apply_foreground_mask(LabelVolume &labels, const LabelEngineConfig &cfg, RngStream &rng);

// E = dilate(S, w) & !erode(S, w) with a ball of radius w.
MaskVolume envelope_shell(const MaskVolume &sphere, int width);

// Requires `fg.applied`; updates the envelope fields of `fg`.
void add_envelope(LabelVolume &labels, ForegroundMask &fg, const LabelEngineConfig &cfg, RngStream &rng);

struct LabelProvenance {
    std::int64_t n_templates = 0;
    std::vector<std::size_t> template_indices;
    std::vector<AffineParams> affines;
    bool fg_applied = false;
    double p_fg = 0.0;
    std::int64_t sphere_radius = 0;
    Index3 sphere_center{0, 0, 0};
    double sphere_sigma = 0.0;
    bool envelope_applied = false;
    double p_envelope = 0.0;
    std::optional<int> envelope_width;
};

nlohmann::json to_json(const LabelProvenance &p);

struct LabelMap {
    LabelVolume labels;
    LabelProvenance provenance;
};

// Child streams: ("count",0), ("pick",0), ("affine",i), ("foreground",0),
// ("envelope",0).
LabelMap synthesize_label_map(const TemplateBank &bank, const LabelEngineConfig &cfg, const RngStream &rng);

}  // namespace voxsynth
