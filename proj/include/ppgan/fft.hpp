#pragma once

#include <complex>
#include <memory>
#include <span>
#include <vector>

namespace ppgan {

/// Unnormalized 2-D complex DFT of a fixed size, backed by FFTW.
/// Instances are not shareable between threads; use plan_for() for a
/// per-thread cached instance.
class Fft2d {
public:
    Fft2d(int height, int width);
    ~Fft2d();
    Fft2d(const Fft2d&) = delete;
    Fft2d& operator=(const Fft2d&) = delete;

    int height() const { return height_; }
    int width() const { return width_; }

    /// X[k] = sum_n x[n] exp(-2 pi i k.n / N), row-major.
    void forward(std::span<const double> real_in, std::vector<std::complex<double>>& out);
    /// x[n] = sum_k X[k] exp(+2 pi i k.n / N), no 1/N factor.
    void backward(std::span<const std::complex<double>> in, std::vector<std::complex<double>>& out);

    static Fft2d& plan_for(int height, int width);

private:
    struct Impl;
    int height_;
    int width_;
    std::unique_ptr<Impl> impl_;
};

} // namespace ppgan
