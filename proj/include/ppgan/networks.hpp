#pragma once

#include "ppgan/gan_config.hpp"
#include "ppgan/nn/layers.hpp"
#include "ppgan/raster.hpp"
#include "ppgan/rng.hpp"
#include "ppgan/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace ppgan {

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kLeakySlope = 0.2;
inline constexpr double kInitStd = 0.02;

inline int d2_feature_dim(int radial_bins) { return kBandCount * radial_bins + 2 * kBandCount; }

std::string generator_topology(const TrainConfig& cfg);
std::string d1_topology(const TrainConfig& cfg);
std::string d2_topology(const TrainConfig& cfg);

/// Latent -> 4x4 (or 8x8) seed -> three stride-2 transposed convolutions,
/// each with batch norm and LeakyReLU -> 3x3 convolution to 5 bands -> sigmoid.
template <class T>
nn::Sequential<T> build_generator(const TrainConfig& cfg)
{
    const int b = cfg.base_channels;
    const int s = cfg.seed_side();
    nn::Sequential<T> g;
    g.template add<nn::Linear<T>>("proj", cfg.latent_dim, 8 * b * s * s);
    g.template add<nn::Reshape<T>>("proj_reshape", 8 * b, s, s);
    g.template add<nn::BatchNorm<T>>("proj_bn", 8 * b);
    g.template add<nn::LeakyRelu<T>>("proj_act", kLeakySlope);
    int ch = 8 * b;
    for (int stage = 1; stage <= 3; ++stage) {
        const std::string name = "up" + std::to_string(stage);
        g.template add<nn::ConvTranspose2d<T>>(name, ch, ch / 2, 4, 2, 1);
        g.template add<nn::BatchNorm<T>>(name + "_bn", ch / 2);
        g.template add<nn::LeakyRelu<T>>(name + "_act", kLeakySlope);
        ch /= 2;
    }
    g.template add<nn::Conv2d<T>>("to_bands", ch, kBandCount, 3, 1, 1);
    g.template add<nn::Sigmoid<T>>("out");
    return g;
}

/// Three stride-2 convolutions with LeakyReLU (batch norm on the second and
/// third), flatten, one logistic unit.
template <class T>
nn::Sequential<T> build_d1(const TrainConfig& cfg)
{
    const int b = cfg.base_channels;
    const int side = cfg.image_size / 8;
    nn::Sequential<T> d;
    d.template add<nn::Conv2d<T>>("conv1", kBandCount, b, 4, 2, 1);
    d.template add<nn::LeakyRelu<T>>("act1", kLeakySlope);
    d.template add<nn::Conv2d<T>>("conv2", b, 2 * b, 4, 2, 1);
    d.template add<nn::BatchNorm<T>>("bn2", 2 * b);
    d.template add<nn::LeakyRelu<T>>("act2", kLeakySlope);
    d.template add<nn::Conv2d<T>>("conv3", 2 * b, 4 * b, 4, 2, 1);
    d.template add<nn::BatchNorm<T>>("bn3", 4 * b);
    d.template add<nn::LeakyRelu<T>>("act3", kLeakySlope);
    d.template add<nn::Linear<T>>("fc", 4 * b * side * side, 1);
    d.template add<nn::Sigmoid<T>>("out");
    return d;
}

/// Learned head of D2 on the fixed spectral feature vector.
template <class T>
nn::Sequential<T> build_d2_head(const TrainConfig& cfg)
{
    nn::Sequential<T> d;
    d.template add<nn::Linear<T>>("fc1", d2_feature_dim(cfg.radial_bins), 64);
    d.template add<nn::LeakyRelu<T>>("act1", kLeakySlope);
    d.template add<nn::Linear<T>>("fc2", 64, 32);
    d.template add<nn::LeakyRelu<T>>("act2", kLeakySlope);
    d.template add<nn::Linear<T>>("fc3", 32, 1);
    d.template add<nn::Sigmoid<T>>("out");
    return d;
}

/// N(0, 0.02) weights, zero biases, batch-norm scales N(1, 0.02).
template <class T>
void init_network(nn::Sequential<T>& net, Pcg64& rng)
{
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        auto& layer = net.layer(i);
        if (auto* l = dynamic_cast<nn::Linear<T>*>(&layer)) l->init(rng, kInitStd);
        else if (auto* c = dynamic_cast<nn::Conv2d<T>*>(&layer)) c->init(rng, kInitStd);
        else if (auto* t = dynamic_cast<nn::ConvTranspose2d<T>*>(&layer)) t->init(rng, kInitStd);
        else if (auto* bn = dynamic_cast<nn::BatchNorm<T>*>(&layer)) bn->init(rng, kInitStd);
    }
}

/// Fixed spectral features per image: 5 x bins radial log-power, then 5 band
/// means, then 5 band standard deviations.
template <class T>
nn::Tensor<T> d2_features(const nn::Tensor<T>& images, int radial_bins)
{
    const int n = images.n();
    const int h = images.h(), w = images.w();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const int radial = kBandCount * radial_bins;
    nn::Tensor<T> out(n, d2_feature_dim(radial_bins), 1, 1);
    std::vector<double> prof(radial);
    for (int i = 0; i < n; ++i) {
        const std::span<const T> img(images.sample(i), images.sample_size());
        radial_power_planar<T>(img, h, w, radial_bins, prof);
        T* f = out.sample(i);
        for (int k = 0; k < radial; ++k) f[k] = static_cast<T>(prof[k]);
        for (int b = 0; b < kBandCount; ++b) {
            double s = 0.0, sq = 0.0;
            for (std::size_t p = 0; p < plane; ++p) {
                const double v = img[b * plane + p];
                s += v;
                sq += v * v;
            }
            const double mean = s / plane;
            f[radial + b] = static_cast<T>(mean);
            f[radial + kBandCount + b] = static_cast<T>(std::sqrt(std::max(0.0, sq / plane - mean * mean)));
        }
    }
    return out;
}

template <class T>
nn::Tensor<T> d2_features_backward(const nn::Tensor<T>& images, const nn::Tensor<T>& grad_features, int radial_bins)
{
    const int n = images.n();
    const int h = images.h(), w = images.w();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const int radial = kBandCount * radial_bins;
    nn::Tensor<T> dx(images.n(), images.c(), h, w);
    std::vector<double> gprof(radial);
    for (int i = 0; i < n; ++i) {
        const std::span<const T> img(images.sample(i), images.sample_size());
        const T* g = grad_features.sample(i);
        for (int k = 0; k < radial; ++k) gprof[k] = g[k];
        std::span<T> d(dx.sample(i), dx.sample_size());
        radial_power_planar_backward<T>(img, h, w, radial_bins, gprof, d);
        for (int b = 0; b < kBandCount; ++b) {
            double s = 0.0, sq = 0.0;
            for (std::size_t p = 0; p < plane; ++p) {
                const double v = img[b * plane + p];
                s += v;
                sq += v * v;
            }
            const double mean = s / plane;
            const double sd = std::sqrt(std::max(0.0, sq / plane - mean * mean));
            const double g_mean = g[radial + b];
            const double g_std = g[radial + kBandCount + b];
            for (std::size_t p = 0; p < plane; ++p) {
                double v = g_mean / plane;
                if (sd > 1e-12) v += g_std * (img[b * plane + p] - mean) / (plane * sd);
                d[b * plane + p] += static_cast<T>(v);
            }
        }
    }
    return dx;
}

struct AdversarialLosses {
    double d1_loss = 0.0;
    double d2_loss = 0.0;
    double g_loss = 0.0;
};

/// Discriminator cross-entropies and the non-saturating generator loss
/// g = -mean log D1(fake) - w_d2 mean log D2(fake) + w_sr sr.
AdversarialLosses adversarial_losses(std::span<const double> d1_real, std::span<const double> d1_fake,
                                     std::span<const double> d2_real, std::span<const double> d2_fake, double sr,
                                     const TrainConfig& cfg);

namespace detail {

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

/// Mean of -log(p) (target real) or -log(1 - p) (target fake), with its
/// gradient w.r.t. p scaled by `weight`; clamped entries get zero gradient.
template <class T>
double bce_mean(const nn::Tensor<T>& p, bool target_real, double weight, nn::Tensor<T>* grad)
{
    const int n = p.n();
    double loss = 0.0;
    if (grad) *grad = nn::Tensor<T>(n, 1, 1, 1);
    for (int i = 0; i < n; ++i) {
        const double raw = p.data[i];
        const double q = clamp_prob(raw);
        const bool clamped = q != raw;
        if (target_real) {
            loss -= std::log(q);
            if (grad && !clamped) grad->data[i] = static_cast<T>(-weight / (n * q));
        } else {
            loss -= std::log(1.0 - q);
            if (grad && !clamped) grad->data[i] = static_cast<T>(weight / (n * (1.0 - q)));
        }
    }
    return loss / n;
}

template <class T>
std::vector<double> to_doubles(const nn::Tensor<T>& t)
{
    return {t.data.begin(), t.data.end()};
}

} // namespace detail

/// Live generator + two discriminators with the objective evaluations and
/// their backward passes. Used by training (float) and gradient checks (double).
template <class T>
struct GanNetworks {
    TrainConfig config;
    nn::Sequential<T> generator;
    nn::Sequential<T> d1;
    nn::Sequential<T> d2;

    explicit GanNetworks(const TrainConfig& cfg)
        : config(cfg), generator(build_generator<T>(cfg)), d1(build_d1<T>(cfg)), d2(build_d2_head<T>(cfg))
    {
    }

    void initialize(std::uint64_t seed)
    {
        Pcg64 g_rng(derive_seed(seed, 1)), d1_rng(derive_seed(seed, 2)), d2_rng(derive_seed(seed, 3));
        init_network(generator, g_rng);
        init_network(d1, d1_rng);
        init_network(d2, d2_rng);
    }

    struct DiscriminatorPass {
        double d1_loss = 0.0;
        double d2_loss = 0.0;
        std::vector<double> d1_real, d1_fake, d2_real, d2_fake;
    };

    /// d1_loss + d2_loss on (real, fake); accumulates discriminator gradients
    /// when `backward`. D2 receives gradients only outside ablation mode.
    DiscriminatorPass discriminator_objective(const nn::Tensor<T>& real, const nn::Tensor<T>& fake, bool backward)
    {
        DiscriminatorPass out;
        nn::Tensor<T> grad;
        auto p_real = d1.forward(real, nn::Mode::train);
        double l_real = detail::bce_mean(p_real, true, 1.0, backward ? &grad : nullptr);
        if (backward) d1.backward(grad);
        auto p_fake = d1.forward(fake, nn::Mode::train);
        double l_fake = detail::bce_mean(p_fake, false, 1.0, backward ? &grad : nullptr);
        if (backward) d1.backward(grad);
        out.d1_loss = l_real + l_fake;
        out.d1_real = detail::to_doubles(p_real);
        out.d1_fake = detail::to_doubles(p_fake);

        const bool train_d2 = backward && !config.ablation_baseline;
        auto q_real = d2.forward(d2_features(real, config.radial_bins), nn::Mode::train);
        l_real = detail::bce_mean(q_real, true, 1.0, train_d2 ? &grad : nullptr);
        if (train_d2) d2.backward(grad);
        auto q_fake = d2.forward(d2_features(fake, config.radial_bins), nn::Mode::train);
        l_fake = detail::bce_mean(q_fake, false, 1.0, train_d2 ? &grad : nullptr);
        if (train_d2) d2.backward(grad);
        out.d2_loss = l_real + l_fake;
        out.d2_real = detail::to_doubles(q_real);
        out.d2_fake = detail::to_doubles(q_fake);
        return out;
    }

    struct GeneratorPass {
        nn::Tensor<T> fake;
        double g_loss = 0.0;
        double sr_loss = 0.0;
    };

    /// Generator loss for latent batch z against the real batch; accumulates
    /// generator gradients (through D1, D2 features and SR) when `backward`.
    GeneratorPass generator_objective(const nn::Tensor<T>& z, const nn::Tensor<T>& real, bool backward)
    {
        return generator_loss(generator.forward(z, nn::Mode::train), real, backward);
    }

    /// As generator_objective, for a `fake` batch produced by the most recent
    /// generator forward pass (whose cached state the backward pass reuses).
    GeneratorPass generator_loss(nn::Tensor<T> fake, const nn::Tensor<T>& real, bool backward)
    {
        GeneratorPass out;
        out.fake = std::move(fake);
        const auto& f = out.fake;
        const double w_d2 = config.effective_w_d2();
        const double w_sr = config.effective_w_sr();

        nn::Tensor<T> grad;
        auto p = d1.forward(f, nn::Mode::train);
        out.g_loss = detail::bce_mean(p, true, 1.0, backward ? &grad : nullptr);
        nn::Tensor<T> g_img;
        if (backward) g_img = d1.backward(grad);

        if (w_d2 > 0.0) {
            auto q = d2.forward(d2_features(f, config.radial_bins), nn::Mode::train);
            out.g_loss += w_d2 * detail::bce_mean(q, true, w_d2, backward ? &grad : nullptr);
            if (backward) {
                auto g_feat = d2.backward(grad);
                auto g2 = d2_features_backward(f, g_feat, config.radial_bins);
                for (std::size_t i = 0; i < g_img.size(); ++i) g_img.data[i] += g2.data[i];
            }
        }

        std::vector<T> g_sr(backward && w_sr > 0.0 ? f.size() : 0);
        out.sr_loss = spectral_reg_loss_planar<T>(real.span(), real.n(), f.span(), f.n(), f.h(), f.w(),
                                                  config.radial_bins, std::span<T>(g_sr));
        if (w_sr > 0.0) {
            out.g_loss += w_sr * out.sr_loss;
            if (backward)
                for (std::size_t i = 0; i < g_img.size(); ++i) g_img.data[i] += static_cast<T>(w_sr * g_sr[i]);
        }
        if (backward) generator.backward(g_img);
        return out;
    }
};

} // namespace ppgan
