#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "macmd/param_store.hpp"

namespace macmd {

/// Cosine annealing from lr_max (step 0) down to lr_min (step total-1).
inline double cosine_lr(double lr_max, double lr_min, Index step, Index total_steps) {
    if (total_steps < 1) throw std::invalid_argument("cosine_lr: need at least one step");
    if (step < 0 || step >= total_steps) {
        throw std::invalid_argument("cosine_lr: step " + std::to_string(step) +
                                    " outside schedule of " + std::to_string(total_steps));
    }
    if (total_steps == 1) return lr_max;
    const double progress = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(progress * 3.14159265358979323846));
}

struct AdamWConfig {
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        if (lr <= 0) throw std::invalid_argument("AdamW: learning rate must be positive");
        if (weight_decay < 0) throw std::invalid_argument("AdamW: negative weight decay");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw std::invalid_argument("AdamW: betas must lie in [0,1)");
        if (eps <= 0) throw std::invalid_argument("AdamW: epsilon must be positive");
    }
};

/// Decoupled-decay Adam over a store's parameters, moment buffers held in
/// registration order. Decay is applied before the adaptive step; moments
/// are bias-corrected by the 1-based step count.
template <typename S>
class AdamW {
public:
    AdamW(ParamStore<S>& store, AdamWConfig cfg) : store_(store), cfg_(cfg) {
        cfg_.validate();
        for (const auto& p : store.parameters()) {
            m_.emplace_back(static_cast<std::size_t>(p.value.size()), 0.0);
            v_.emplace_back(static_cast<std::size_t>(p.value.size()), 0.0);
        }
    }

    const AdamWConfig& config() const { return cfg_; }

    /// One update over every parameter; lr overrides the configured rate so
    /// a schedule can drive it. t counts from 1.
    void step(Index t, double lr) {
        if (t < 1) throw std::invalid_argument("AdamW: step count starts at 1");
        if (store_.parameters().size() != m_.size())
            throw std::logic_error("AdamW: store changed size after construction");
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < m_.size(); ++i) {
            auto& p = store_.parameters()[i];
            S* value = p.value.data();
            const auto& grad = p.value.grad();
            double* m = m_[i].data();
            double* v = v_[i].data();
            for (std::size_t k = 0; k < grad.size(); ++k) {
                double w = static_cast<double>(value[k]);
                w -= lr * cfg_.weight_decay * w;
                const double g = static_cast<double>(grad[k]);
                m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
                v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
                const double m_hat = m[k] / bc1;
                const double v_hat = v[k] / bc2;
                w -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
                value[k] = static_cast<S>(w);
            }
        }
    }

    void step(Index t) { step(t, cfg_.lr); }

private:
    ParamStore<S>& store_;
    AdamWConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace macmd
