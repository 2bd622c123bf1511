#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>

#include "json.hpp"
#include "voxsynth/grid.hpp"

namespace voxsynth {

struct DiceReport {
    std::map<std::uint16_t, double> per_label;
    double mean = 0.0;  // over the evaluated labels, background excluded
    std::set<std::uint16_t> labels;
};

// Per label 2|A & B| / (|A| + |B|), 1 when both are empty. An empty label set
// evaluates every nonzero label present in either map.
DiceReport dice(const LabelVolume &a, const LabelVolume &b, const std::set<std::uint16_t> &labels = {});
nlohmann::json to_json(const DiceReport &r);

enum class Interp { trilinear, nearest };

// out(x) = vol(x + u(x)), coordinates clamped to the grid.
IntensityVolume warp(const IntensityVolume &vol, const DisplacementField &field, Interp interp = Interp::trilinear);
LabelVolume warp(const LabelVolume &labels, const DisplacementField &field);
FeatureVolume warp(const FeatureVolume &features, const DisplacementField &field);

inline constexpr double kFoldThreshold = 0.005;

struct FoldReport {
    double fold_fraction = 0.0;
    std::int64_t folding_voxels = 0;
    std::int64_t total_voxels = 0;
    bool threshold_pass = true;  // fold_fraction < 0.005
    double min_determinant = 0.0;
};

// det(I + grad u) with central differences inside and one-sided differences
// on the boundary. Every voxel counts, boundary included.
std::vector<double> jacobian_determinant(const DisplacementField &field);
FoldReport jacobian_folds(const DisplacementField &field);
nlohmann::json to_json(const FoldReport &r);

// weight * mean over voxels and channels of (fixed - warp(moving))^2.
// `margin` voxels next to each face are left out of the mean.
double feature_dissimilarity(const FeatureVolume &fixed, const FeatureVolume &moving, const DisplacementField &field,
                             double channel_weight, int margin = 0);

// Mean over axes of the mean squared forward difference of u along that
// axis, taken over every valid position and component.
double diffusion_regularizer(const DisplacementField &field);

struct RegistrationObjective {
    double total = 0.0;
    double data_term = 0.0;
    double reg_term = 0.0;
};

RegistrationObjective registration_objective(const FeatureVolume &fixed, const FeatureVolume &moving,
                                             const DisplacementField &field, double lambda,
                                             double channel_weight = 1.0, int margin = 0);
nlohmann::json to_json(const RegistrationObjective &r);

}  // namespace voxsynth
