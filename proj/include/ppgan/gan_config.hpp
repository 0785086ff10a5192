#pragma once

#include <json.hpp>

#include <cstdint>

namespace ppgan {

struct TrainConfig {
    int epochs = 50;
    int log_every_steps = 5;
    int batch_size = 16;
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.99;
    int latent_dim = 100;
    double w_d2 = 0.5;
    double w_sr = 0.1;
    bool ablation_baseline = false;
    std::uint64_t seed = 0;
    /// Generator output side: 32 (4x4 seed) or 64 (8x8 seed).
    int image_size = 32;
    /// Channel width of the narrowest generator stage / first D1 stage.
    int base_channels = 16;
    int radial_bins = 16;

    void validate() const;
    int seed_side() const { return image_size / 8; }
    /// Weight actually applied to D2 and SR terms (0 in ablation mode).
    double effective_w_d2() const { return ablation_baseline ? 0.0 : w_d2; }
    double effective_w_sr() const { return ablation_baseline ? 0.0 : w_sr; }

    bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

} // namespace ppgan
