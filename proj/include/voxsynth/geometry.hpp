#pragma once

#include <array>

#include "voxsynth/grid.hpp"

namespace voxsynth {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 identity3();
Mat3 matmul(const Mat3 &a, const Mat3 &b);
Vec3 matvec(const Mat3 &m, const Vec3 &v);
double determinant(const Mat3 &m);
Mat3 inverse(const Mat3 &m);

// Rz(angles[2]) * Ry(angles[1]) * Rx(angles[0]).
Mat3 rotation_matrix(const Vec3 &angles);

// Random affine drawn by the label engine or by the shared geometric stage.
// `scale` holds the final per-axis factors, already > 0.
struct AffineParams {
    Vec3 rotation{0.0, 0.0, 0.0};     // radians
    Vec3 translation{0.0, 0.0, 0.0};  // voxels
    Vec3 scale{1.0, 1.0, 1.0};
    Vec3 shear{0.0, 0.0, 0.0};        // xy, xz, yz

    bool operator==(const AffineParams &) const = default;
};

// y = M (x - c) + c + t with M = R * Shear * Scale. Warps sample the source
// at inverse(y), so content moves forward by t.
class AffineTransform {
  public:
    AffineTransform(const AffineParams &params, const Vec3 &center);

    Vec3 forward(const Vec3 &x) const;
    Vec3 inverse_map(const Vec3 &y) const;
    const Mat3 &linear() const noexcept { return linear_; }

  private:
    Mat3 linear_;
    Mat3 inverse_;
    Vec3 center_;
    Vec3 translation_;
};

// Integer grid centre (d/2 per axis), (64,64,64) on the default 128^3 grid.
Vec3 grid_center(const GridMeta &meta);

}  // namespace voxsynth
