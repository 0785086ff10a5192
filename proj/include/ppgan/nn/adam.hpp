#pragma once

#include "ppgan/error.hpp"
#include "ppgan/nn/tensor.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace ppgan::nn {

struct AdamConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.99;
    double eps = 1e-8;
};

/// First and second moment estimates for one parameter tensor.
struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

/// Bias-corrected Adam update of one tensor at step t (t >= 1).
template <class T>
void adam_update(const std::string& name, std::span<T> value, std::span<const T> grad, AdamMoments& state,
                 const AdamConfig& cfg, long t)
{
    if (t < 1) throw ValidationError("adam: step index must be >= 1");
    if (grad.size() != value.size()) throw ValidationError("adam: gradient shape mismatch for " + name);
    if (state.m.empty()) {
        state.m.assign(value.size(), 0.0);
        state.v.assign(value.size(), 0.0);
    }
    if (state.m.size() != value.size()) throw ValidationError("adam: moment shape mismatch for " + name);
    for (const T g : grad)
        if (!std::isfinite(static_cast<double>(g))) throw RuntimeFailure("adam: non-finite gradient in " + name);

    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        value[i] = static_cast<T>(value[i] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
}

template <class T>
void adam_update(Param<T>& p, AdamMoments& state, const AdamConfig& cfg, long t)
{
    adam_update<T>(p.name, std::span<T>(p.value), std::span<const T>(p.grad), state, cfg, t);
}

/// Adam over a fixed list of trainable parameters; buffers are skipped.
template <class T>
class Adam {
public:
    Adam(std::vector<Param<T>*> params, AdamConfig cfg) : cfg_(cfg)
    {
        for (auto* p : params)
            if (p->trainable) params_.push_back(p);
        state_.resize(params_.size());
    }

    void step()
    {
        ++t_;
        for (std::size_t i = 0; i < params_.size(); ++i) adam_update(*params_[i], state_[i], cfg_, t_);
    }

    long steps() const { return t_; }

private:
    AdamConfig cfg_;
    std::vector<Param<T>*> params_;
    std::vector<AdamMoments> state_;
    long t_ = 0;
};

} // namespace ppgan::nn
