#pragma once

#include "ppgan/raster.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <array>
#include <span>
#include <vector>

namespace ppgan {

/// Margin used when callers do not choose one: keeps the central 75% of each side.
inline constexpr double kDefaultMargin = 0.125;
inline constexpr int kDefaultRadialBins = 16;

/// Fitted RE = G * exp(-H * NIR) + K * NIR, plus the latent correlation rho.
struct CoefficientSet {
    double G = 0.0;
    double H = 0.0;
    double K = 0.0;
    double rho = 0.0;
    double fit_residual = 0.0; ///< RMSE over the fitted pixels
    bool converged = true;

    bool operator==(const CoefficientSet&) const = default;
};

void to_json(nlohmann::json& j, const CoefficientSet& c);
void from_json(const nlohmann::json& j, CoefficientSet& c);

struct CoefficientFit {
    CoefficientSet coeffs;
    int iterations = 0;
    std::size_t pixel_count = 0;
    double cov_nir_re_data = 0.0;
    double cov_nir_re_model = 0.0;
    double cov_gap = 0.0; ///< |Cov(NIR, RE_model) - Cov(NIR, RE_data)|
    /// RMSE after the initial least-squares solve and after every accepted
    /// Gauss-Newton step of the winning start.
    std::vector<double> residual_trace;
};

/// Fits the red-edge/NIR curve over inner-rectangle pixels of all non-mild images.
CoefficientFit fit_re_nir_coefficients(const PlotDataset& dataset, int max_iters = 200, double tol = 1e-12,
                                       double margin_fraction = kDefaultMargin);

/// Same fit on explicit (nir, re) samples; rho is left at 0.
CoefficientFit fit_re_nir_samples(std::span<const double> nir, std::span<const double> re, int max_iters = 200,
                                  double tol = 1e-12);

using LatentBatch = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Replaces the red-edge block of each latent row by rho * z_nir + sqrt(1 - rho^2) * z_re.
/// Each row is split into 5 equal blocks, block i standing for band i.
LatentBatch manipulate_latent(const LatentBatch& z, const CoefficientSet& coeffs);

struct SpectralProfile {
    std::array<double, kBandCount> mean{};
    std::array<double, kBandCount> std{};
    std::size_t source_count = 0;
    bool operator==(const SpectralProfile&) const = default;
};

SpectralProfile spectral_profile(std::span<const MultispectralImage> images, double margin_fraction);

/// R^2 of synth band means against real band means.
double profile_r2(const SpectralProfile& real, const SpectralProfile& synth);

/// Symmetric KL divergence between the normalized mean vectors.
double sid(const SpectralProfile& a, const SpectralProfile& b);

struct RadialPowerProfile {
    int radial_bins = kDefaultRadialBins;
    std::vector<double> power; ///< band-major, kBandCount * radial_bins, log(1 + mean |F|^2)

    double at(int band, int bin) const { return power[static_cast<std::size_t>(band) * radial_bins + bin]; }
};

/// Assignment of every DFT coefficient of an h x w plane to a radial bin.
/// Bin 0 holds only the DC term; bins 1..R-1 split (0, Nyquist] into equal
/// widths; frequencies past the Nyquist radius are ignored (bin -1).
struct RadialBinning {
    int height = 0;
    int width = 0;
    int bins = 0;
    std::vector<int> bin_of; ///< row-major over the unshifted DFT grid
    std::vector<int> count;

    RadialBinning(int height, int width, int bins);
    static const RadialBinning& cached(int height, int width, int bins);
};

RadialPowerProfile radial_power_profile(const MultispectralImage& image, int radial_bins = kDefaultRadialBins);

/// Radial profile of one band-planar image (5 * h * w floats); writes 5 * bins values.
template <class T>
void radial_power_planar(std::span<const T> planar, int height, int width, int radial_bins, std::span<double> out);

/// Accumulates d(loss)/d(pixel) into grad_planar given d(loss)/d(profile).
template <class T>
void radial_power_planar_backward(std::span<const T> planar, int height, int width, int radial_bins,
                                  std::span<const double> grad_profile, std::span<T> grad_planar);

/// Mean squared difference of batch-mean radial profiles, over bands and bins.
double spectral_reg_loss(std::span<const MultispectralImage> real_batch,
                         std::span<const MultispectralImage> fake_batch, int radial_bins = kDefaultRadialBins);

/// Planar-batch form used in training: both batches are n x 5 x h x w floats.
/// When grad_fake is non-empty it receives d(loss)/d(fake pixel) (overwritten).
template <class T>
double spectral_reg_loss_planar(std::span<const T> real, int real_count, std::span<const T> fake, int fake_count,
                                int height, int width, int radial_bins, std::span<T> grad_fake);

} // namespace ppgan
