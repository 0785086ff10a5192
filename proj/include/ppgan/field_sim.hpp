#pragma once

#include "ppgan/raster.hpp"

#include <json.hpp>

#include <array>
#include <map>
#include <utility>
#include <vector>

namespace ppgan {

using BandValues = std::array<double, kBandCount>;

/// Spectral signature of one health class. Means are the vegetation
/// reflectance at date 0; date_drift[d] is the additive shift at date d.
/// std is the plot-to-plot spread of each band mean.
struct ClassSignature {
    BandValues mean{};
    BandValues std{};
    std::vector<BandValues> date_drift;

    BandValues mean_at(int date) const;
};

/// Ground-truth red-edge curve used to render the RE band from NIR.
struct RedEdgeCurve {
    double G = 0.2;
    double H = 3.0;
    double K = 0.6;

    double operator()(double nir) const;
};

struct SimConfig {
    int image_size = 64;
    int date_count = 5;
    /// counts[class][date]
    std::map<Health, std::vector<int>> counts;
    int row_count = 7;
    double row_amplitude = 0.35;
    double noise_correlation_length = 2.0;
    double texture_std = 0.015;
    double re_noise_std = 0.004;
    RedEdgeCurve red_edge;
    BandValues soil{0.10, 0.14, 0.18, 0.22, 0.26};
    std::uint64_t seed = 0;
    std::map<Health, ClassSignature> class_signatures;

    /// Throws ValidationError naming the offending field.
    void validate() const;
};

/// Built-in healthy/mild/unhealthy signatures for 5 dates.
std::map<Health, ClassSignature> default_signatures(const RedEdgeCurve& curve = {});

/// Default config: signatures from default_signatures and the given
/// per-(class, date) count for healthy/mild/unhealthy.
SimConfig default_sim_config(int healthy_per_date, int mild_per_date, int unhealthy_per_date, std::uint64_t seed = 0);

PlotDataset simulate_dataset(const SimConfig& config);

struct SplitCounts {
    int train_healthy = 106;
    int train_unhealthy = 56;
    /// Test samples drawn from what is left at the final date, keeping the
    /// pool's class proportions.
    int test_size = 60;
};

struct TrainTestSplit {
    PlotDataset train;
    PlotDataset test;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
};

/// Reproduces the 106/56 healthy/unhealthy imbalance at the final date.
TrainTestSplit fixed_count_split(const PlotDataset& dataset, std::uint64_t seed, const SplitCounts& counts = {});

void to_json(nlohmann::json& j, const SimConfig& c);
void from_json(const nlohmann::json& j, SimConfig& c);

} // namespace ppgan
