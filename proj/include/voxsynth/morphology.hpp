#pragma once

#include <vector>

#include "voxsynth/grid.hpp"

namespace voxsynth {

// Exact squared Euclidean distance (in voxels) from every voxel to the
// nearest voxel whose mask value equals `target`. Voxels with no target in
// the grid get a value >= 1e19.
std::vector<double> squared_distance_transform(const MaskVolume &mask, std::uint8_t target);

// Morphology with the ball {d : |d| <= radius}. Voxels outside the grid count
// as background, so dilation is clipped at the border and erosion eats in
// from it.
MaskVolume dilate_ball(const MaskVolume &mask, int radius);
MaskVolume erode_ball(const MaskVolume &mask, int radius);

}  // namespace voxsynth
