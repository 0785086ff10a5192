#include "ppgan/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>

namespace ppgan {

namespace {
std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}
} // namespace

struct Fft2d::Impl {
    fftw_complex* buf_in = nullptr;
    fftw_complex* buf_out = nullptr;
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
};

Fft2d::Fft2d(int height, int width) : height_(height), width_(width), impl_(std::make_unique<Impl>())
{
    const std::size_t n = static_cast<std::size_t>(height) * width;
    std::lock_guard lock(planner_mutex());
    impl_->buf_in = fftw_alloc_complex(n);
    impl_->buf_out = fftw_alloc_complex(n);
    impl_->fwd = fftw_plan_dft_2d(height, width, impl_->buf_in, impl_->buf_out, FFTW_FORWARD, FFTW_ESTIMATE);
    impl_->bwd = fftw_plan_dft_2d(height, width, impl_->buf_in, impl_->buf_out, FFTW_BACKWARD, FFTW_ESTIMATE);
}

Fft2d::~Fft2d()
{
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(impl_->fwd);
    fftw_destroy_plan(impl_->bwd);
    fftw_free(impl_->buf_in);
    fftw_free(impl_->buf_out);
}

void Fft2d::forward(std::span<const double> real_in, std::vector<std::complex<double>>& out)
{
    const std::size_t n = static_cast<std::size_t>(height_) * width_;
    for (std::size_t i = 0; i < n; ++i) {
        impl_->buf_in[i][0] = real_in[i];
        impl_->buf_in[i][1] = 0.0;
    }
    fftw_execute(impl_->fwd);
    out.resize(n);
    std::memcpy(static_cast<void*>(out.data()), impl_->buf_out, n * sizeof(fftw_complex));
}

void Fft2d::backward(std::span<const std::complex<double>> in, std::vector<std::complex<double>>& out)
{
    const std::size_t n = static_cast<std::size_t>(height_) * width_;
    std::memcpy(impl_->buf_in, static_cast<const void*>(in.data()), n * sizeof(fftw_complex));
    fftw_execute(impl_->bwd);
    out.resize(n);
    std::memcpy(static_cast<void*>(out.data()), impl_->buf_out, n * sizeof(fftw_complex));
}

Fft2d& Fft2d::plan_for(int height, int width)
{
    thread_local std::map<std::pair<int, int>, std::unique_ptr<Fft2d>> cache;
    auto& slot = cache[{height, width}];
    if (!slot) slot = std::make_unique<Fft2d>(height, width);
    return *slot;
}

} // namespace ppgan
