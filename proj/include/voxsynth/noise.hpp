#pragma once

#include <span>

#include "voxsynth/grid.hpp"
#include "voxsynth/rng.hpp"

namespace voxsynth {

// Sum of value-noise octaves. Each octave draws N(0,1) values on a lattice
// with `scale` voxels per cell and upsamples them trilinearly to the grid.
// Octave o uses the child stream ("octave", o).
std::vector<double> smooth_noise(const GridMeta &meta, std::span<const double> octave_scales, RngStream &rng);

// Multiplicative texture: 1 + amplitude * (n - mean(n)) / max|n - mean(n)|,
// so the mean is 1 and every value lies in [1 - amplitude, 1 + amplitude].
ScalarField make_perlin_field(const GridMeta &meta, std::span<const double> octave_scales, double amplitude,
                              RngStream &rng);

// Smooth displacement whose largest vector norm equals `max_displacement`
// voxels. Component c uses the child stream ("component", c).
DisplacementField make_perlin_displacement(const GridMeta &meta, std::span<const double> octave_scales,
                                           double max_displacement, RngStream &rng);


// Ball of `radius` around `center` pulled back through a displacement:
// voxel x is set iff |x + u(x) - center|^2 <= radius^2. A null field gives the
// exact discrete ball.
MaskVolume deformed_ball(const GridMeta &meta, const Vec3 &center, double radius, const DisplacementField *field);

}  // namespace voxsynth
