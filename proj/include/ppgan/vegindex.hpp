#pragma once

#include "ppgan/raster.hpp"
#include "ppgan/spectral.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace ppgan {

struct BandMeans {
    double B = 0.0, G = 0.0, R = 0.0, RE = 0.0, N = 0.0;
};

/// Division helper handed to index formulas; records guard hits.
class GuardedMath {
public:
    explicit GuardedMath(double guard) : guard_(guard) {}
    double div(double num, double den)
    {
        if (std::abs(den) < guard_) {
            tripped_ = true;
            return 0.0;
        }
        return num / den;
    }
    bool tripped() const { return tripped_; }

private:
    double guard_;
    bool tripped_ = false;
};

struct IndexDefinition {
    std::string name;
    std::string formula;
    std::function<double(const BandMeans&, GuardedMath&)> evaluate;
    double denominator_guard = 1e-9;
};

const std::vector<IndexDefinition>& builtin_registry();

struct IndexVector {
    long plot_id = 0;
    int date_index = 0;
    Health health = Health::healthy;
    Origin origin = Origin::real;
    std::vector<double> values;
    /// Names of indices whose denominator guard fired (value forced to 0).
    std::vector<std::string> guarded;
};

BandMeans band_means(const MultispectralImage& image, double margin_fraction);

std::vector<IndexVector> extract_indices(const PlotDataset& dataset, const std::vector<IndexDefinition>& registry,
                                         double margin_fraction = kDefaultMargin);

struct FeatureTable {
    std::vector<std::string> index_names;
    std::vector<IndexVector> rows;
};

std::string feature_table_csv(const std::vector<IndexVector>& vectors, const std::vector<std::string>& index_names);
void write_feature_table(const std::vector<IndexVector>& vectors, const std::vector<IndexDefinition>& registry,
                         const std::filesystem::path& path);
FeatureTable parse_feature_table(const std::string& csv, const std::string& source);
FeatureTable read_feature_table(const std::filesystem::path& path);

std::vector<std::string> registry_names(const std::vector<IndexDefinition>& registry);

} // namespace ppgan
