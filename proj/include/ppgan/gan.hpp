#pragma once

#include "ppgan/gan_config.hpp"
#include "ppgan/nn/adam.hpp"
#include "ppgan/raster.hpp"
#include "ppgan/spectral.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ppgan {

struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;

    bool operator==(const NamedTensor&) const = default;
};

/// Serialized parameters (and batch-norm buffers) of one network.
struct NetworkParams {
    std::string topology;
    std::vector<NamedTensor> tensors;

    const NamedTensor* find(const std::string& name) const;
    NamedTensor* find(const std::string& name);
    bool operator==(const NetworkParams&) const = default;
};

struct LossRecord {
    long step = 0;
    double d1_loss = 0.0;
    double d2_loss = 0.0;
    double g_loss = 0.0;
    double sr_loss = 0.0;

    bool operator==(const LossRecord&) const = default;
};

struct ModelBundle {
    NetworkParams generator;
    NetworkParams d1;
    NetworkParams d2;
    CoefficientSet coeffs;
    TrainConfig config;
    std::vector<LossRecord> loss_history;
    /// Class the bundle was trained on, if the training set held one class.
    std::optional<Health> class_hint;
    std::vector<std::string> dates;
    /// Latest date present in the training set; synthetic samples carry it.
    int date_index = 0;

    bool operator==(const ModelBundle&) const = default;
};

/// Freshly initialized parameters for the given configuration.
ModelBundle initial_bundle(const TrainConfig& cfg, const CoefficientSet& coeffs = {});

std::vector<MultispectralImage> generator_forward(const NetworkParams& params, const TrainConfig& cfg,
                                                  const LatentBatch& z);
std::vector<double> d1_forward(const NetworkParams& params, const TrainConfig& cfg,
                               std::span<const MultispectralImage> images);
std::vector<double> d2_forward(const NetworkParams& params, const TrainConfig& cfg,
                               std::span<const MultispectralImage> images);

using AdamState = std::map<std::string, nn::AdamMoments>;

/// One Adam update of every tensor in `params` using the same-named tensor in
/// `grads`. Buffers (running statistics) must be absent from `grads`.
void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state, const TrainConfig& cfg, long t);

struct TrainProgress {
    int epoch = 0;
    long step = 0;
    LossRecord losses;
};

/// Adversarial training on every non-mild image in `dataset`.
ModelBundle train(const PlotDataset& dataset, const CoefficientSet& coeffs, const TrainConfig& config,
                  const std::function<void(const TrainProgress&)>& on_record = {});

/// `count` synthetic samples; class defaults to the bundle's class_hint and
/// date to the bundle's date_index.
PlotDataset generate(const ModelBundle& bundle, int count, std::optional<Health> class_hint, std::uint64_t seed);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);
ModelBundle load_bundle(const std::filesystem::path& dir);

/// step,d1_loss,d2_loss,g_loss,sr_loss
std::string loss_history_csv(std::span<const LossRecord> history);

std::vector<unsigned char> encode_weights(std::span<const NamedTensor> tensors);
std::vector<NamedTensor> decode_weights(std::span<const unsigned char> bytes);

} // namespace ppgan
