#pragma once

#include <cmath>
#include <cstdint>

#include "vlearn/error.hpp"
#include "vlearn/nn/network.hpp"

namespace vlearn::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update at step `t` (1-based) using the gradients
/// currently stored in `params`. Gradients are left untouched.
inline void adam_step(ParamSet& params, const AdamConfig& cfg, std::int64_t t) {
    if (t < 1) throw ConfigError("adam step index starts at 1");
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (auto& p : params.items) {
        double* w = p.value.data.data();
        const double* g = p.grad.data.data();
        double* m = p.m.data.data();
        double* v = p.v.data.data();
        const std::size_t n = p.value.size();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace vlearn::nn
