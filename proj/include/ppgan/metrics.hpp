#pragma once

#include "ppgan/nn/layers.hpp"
#include "ppgan/raster.hpp"
#include "ppgan/spectral.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <array>
#include <span>

namespace ppgan {

inline constexpr std::uint64_t kEmbedderSeed = 1337;
inline constexpr int kEmbeddingDim = 64;
inline constexpr double kCovarianceShrinkage = 1e-6;
inline constexpr int kDefaultHistogramBins = 256;

using FeatureMatrix = Eigen::MatrixXd;

/// Fixed random conv net standing in for a pretrained feature extractor.
/// Three stride-2 3x3 conv stages (3->16->32->64) with ReLU, then global
/// average pooling. Weights are N(0, 2/fan_in) from Pcg64(seed).
class FeatureEmbedder {
public:
    explicit FeatureEmbedder(std::uint64_t seed = kEmbedderSeed);

    /// One row per image; `first_band` selects three consecutive bands (0-based).
    FeatureMatrix embed(std::span<const MultispectralImage> images, int first_band) const;
    /// Raw 3-channel NCHW input.
    FeatureMatrix embed(const nn::Tensor<double>& input) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    struct Stage {
        int cin, cout;
        std::vector<double> weight;
    };
    std::array<Stage, 3> stages_;
};

double fid(const FeatureMatrix& real, const FeatureMatrix& synth);

struct FidScores {
    double fid_mean = 0.0;
    double fid_123 = 0.0;
    double fid_345 = 0.0;
};

/// FID over bands 1-3 and 3-5 (band 3 shared).
FidScores fid_multispectral(const PlotDataset& real, const PlotDataset& synth, const FeatureEmbedder& embedder,
                            double margin_fraction = 0.0);

struct HistogramScores {
    double chi_square = 0.0;
    double intersection = 0.0;
    double bhattacharyya = 0.0;
};

/// Per-band normalized histograms over [0,1], band-major (5 x bins).
std::vector<double> band_histograms(const PlotDataset& dataset, int bins, double margin_fraction = 0.0);
/// Compare band-major normalized histograms; IC and BC are averaged over bands.
HistogramScores compare_histograms(std::span<const double> p_real, std::span<const double> p_synth, int bands);
HistogramScores histogram_metrics(const PlotDataset& real, const PlotDataset& synth,
                                  int bins = kDefaultHistogramBins, double margin_fraction = 0.0);

struct MetricsReport {
    double fid_mean = 0.0;
    double fid_bands_123 = 0.0;
    double fid_bands_345 = 0.0;
    double chi_square = 0.0;
    double intersection = 0.0;
    double bhattacharyya = 0.0;
    double sid = 0.0;
    double profile_r2 = 0.0;
    int real_count = 0;
    int synth_count = 0;
    SpectralProfile real_profile;
    SpectralProfile synth_profile;

    bool operator==(const MetricsReport&) const = default;
};

void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);

MetricsReport full_report(const PlotDataset& real, const PlotDataset& synth, const FeatureEmbedder& embedder,
                          double margin_fraction = kDefaultMargin, int bins = kDefaultHistogramBins);

} // namespace ppgan
