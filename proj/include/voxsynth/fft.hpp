#pragma once

#include <complex>
#include <vector>

#include "voxsynth/grid.hpp"

namespace voxsynth {

// Unnormalised forward 3D DFT of a real C-ordered grid. Any size is accepted.
std::vector<std::complex<double>> fft3_forward(const std::vector<double> &real, const Index3 &dims);

// Inverse DFT scaled by 1/N; returns the real part.
std::vector<double> fft3_inverse_real(const std::vector<std::complex<double>> &spectrum, const Index3 &dims);

// Signed frequency index of bin b on an axis of length n: b for b <= n/2,
// b - n above.
inline std::int64_t signed_frequency(std::int64_t b, std::int64_t n) { return b <= n / 2 ? b : b - n; }

}  // namespace voxsynth
