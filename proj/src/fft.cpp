#include "voxsynth/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <memory>
#include <mutex>

namespace voxsynth {
namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex &planner_mutex() {
    static std::mutex m;
    return m;
}

struct Buffer {
    fftw_complex *data = nullptr;
    explicit Buffer(std::size_t n) : data(static_cast<fftw_complex *>(fftw_malloc(sizeof(fftw_complex) * n))) {
        if (!data) throw std::bad_alloc();
    }
    ~Buffer() { fftw_free(data); }
    Buffer(const Buffer &) = delete;
    Buffer &operator=(const Buffer &) = delete;
};

void run(Buffer &buf, const Index3 &dims, int sign) {
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_3d(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]),
                                buf.data, buf.data, sign, FFTW_ESTIMATE);
    }
    if (!plan) fail(ErrorCode::invalid_argument, "FFT planning failed");
    fftw_execute(plan);
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
}

}  // namespace

std::vector<std::complex<double>> fft3_forward(const std::vector<double> &real, const Index3 &dims) {
    const auto n = static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
    if (real.size() != n) fail(ErrorCode::dimension_mismatch, "FFT input size does not match dims");
    Buffer buf(n);
    for (std::size_t i = 0; i < n; ++i) {
        buf.data[i][0] = real[i];
        buf.data[i][1] = 0.0;
    }
    run(buf, dims, FFTW_FORWARD);
    std::vector<std::complex<double>> out(n);
    std::memcpy(static_cast<void *>(out.data()), buf.data, n * sizeof(fftw_complex));
    return out;
}

std::vector<double> fft3_inverse_real(const std::vector<std::complex<double>> &spectrum, const Index3 &dims) {
    const auto n = static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
    if (spectrum.size() != n) fail(ErrorCode::dimension_mismatch, "FFT input size does not match dims");
    Buffer buf(n);
    std::memcpy(buf.data, static_cast<const void *>(spectrum.data()), n * sizeof(fftw_complex));
    run(buf, dims, FFTW_BACKWARD);
    std::vector<double> out(n);
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = buf.data[i][0] * scale;
    return out;
}

}  // namespace voxsynth
