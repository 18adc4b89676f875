#include <cstring>
#include <mutex>

#include <fftw3.h>

#include "timbre/errors.hpp"
#include "timbre/fft.hpp"

namespace timbre {

namespace {
std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}
} // namespace

struct RealFft::Plan {
    fftw_plan plan = nullptr;
};

RealFft::RealFft(std::size_t size) : size_(size), plan_(std::make_unique<Plan>())
{
    if (size < 2) {
        throw ParameterError("RealFft: size must be at least 2");
    }
    std::lock_guard lock(planner_mutex());
    auto* in = fftw_alloc_real(size);
    auto* out = fftw_alloc_complex(size / 2 + 1);
    // ESTIMATE keeps the chosen algorithm, and therefore the output bits, fixed across runs.
    plan_->plan = fftw_plan_dft_r2c_1d(static_cast<int>(size), in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
}

RealFft::~RealFft()
{
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_->plan);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) const
{
    if (in.size() != size_ || out.size() != bins()) {
        throw DimensionError("RealFft: buffer sizes do not match the plan");
    }
    auto* buf_in = fftw_alloc_real(size_);
    auto* buf_out = fftw_alloc_complex(bins());
    std::memcpy(buf_in, in.data(), size_ * sizeof(double));
    fftw_execute_dft_r2c(plan_->plan, buf_in, buf_out);
    std::memcpy(static_cast<void*>(out.data()), buf_out, bins() * sizeof(fftw_complex));
    fftw_free(buf_in);
    fftw_free(buf_out);
}

} // namespace timbre
