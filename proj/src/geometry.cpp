#include "voxsynth/geometry.hpp"

#include <cmath>

namespace voxsynth {

Mat3 identity3() { return Mat3{{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}}; }

Mat3 matmul(const Mat3 &a, const Mat3 &b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a[i][k] * b[k][j];
            r[i][j] = s;
        }
    return r;
}

Vec3 matvec(const Mat3 &m, const Vec3 &v) {
    return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2], m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

double determinant(const Mat3 &m) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

Mat3 inverse(const Mat3 &m) {
    const double det = determinant(m);
    if (det == 0.0 || !std::isfinite(det)) fail(ErrorCode::invalid_argument, "singular 3x3 matrix");
    Mat3 r{};
    r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return r;
}

Mat3 rotation_matrix(const Vec3 &angles) {
    const double cx = std::cos(angles[0]), sx = std::sin(angles[0]);
    const double cy = std::cos(angles[1]), sy = std::sin(angles[1]);
    const double cz = std::cos(angles[2]), sz = std::sin(angles[2]);
    const Mat3 rx{{{1.0, 0.0, 0.0}, {0.0, cx, -sx}, {0.0, sx, cx}}};
    const Mat3 ry{{{cy, 0.0, sy}, {0.0, 1.0, 0.0}, {-sy, 0.0, cy}}};
    const Mat3 rz{{{cz, -sz, 0.0}, {sz, cz, 0.0}, {0.0, 0.0, 1.0}}};
    return matmul(rz, matmul(ry, rx));
}

AffineTransform::AffineTransform(const AffineParams &p, const Vec3 &center)
    : center_(center), translation_(p.translation) {
    for (double s : p.scale) {
        if (!(s > 0.0)) fail(ErrorCode::invalid_argument, "affine scale factors must be > 0");
    }
    const Mat3 shear{{{1.0, p.shear[0], p.shear[1]}, {0.0, 1.0, p.shear[2]}, {0.0, 0.0, 1.0}}};
    const Mat3 scale{{{p.scale[0], 0.0, 0.0}, {0.0, p.scale[1], 0.0}, {0.0, 0.0, p.scale[2]}}};
    linear_ = matmul(rotation_matrix(p.rotation), matmul(shear, scale));
    inverse_ = inverse(linear_);
}

Vec3 AffineTransform::forward(const Vec3 &x) const {
    const Vec3 d{x[0] - center_[0], x[1] - center_[1], x[2] - center_[2]};
    const Vec3 m = matvec(linear_, d);
    return {m[0] + center_[0] + translation_[0], m[1] + center_[1] + translation_[1],
            m[2] + center_[2] + translation_[2]};
}

Vec3 AffineTransform::inverse_map(const Vec3 &y) const {
    const Vec3 d{y[0] - center_[0] - translation_[0], y[1] - center_[1] - translation_[1],
                 y[2] - center_[2] - translation_[2]};
    const Vec3 m = matvec(inverse_, d);
    return {m[0] + center_[0], m[1] + center_[1], m[2] + center_[2]};
}

Vec3 grid_center(const GridMeta &meta) {
    return {static_cast<double>(meta.dims[0] / 2), static_cast<double>(meta.dims[1] / 2),
            static_cast<double>(meta.dims[2] / 2)};
}

}  // namespace voxsynth
