#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vlearn/error.hpp"
#include "vlearn/nn/network.hpp"

namespace vlearn::nn {

/// |a - n| / max(1e-8, |a| + |n|)
inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Compares analytic gradients against central differences of `loss` taken by
/// nudging each value through its pointer. Returns the max relative error.
inline double check_gradients(std::span<double* const> values, std::span<const double> analytic,
                              const std::function<double()>& loss, double h = 1e-4) {
    if (values.size() != analytic.size()) throw ShapeError("gradient count does not match value count");
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        double& x = *values[i];
        const double saved = x;
        x = saved + h;
        const double up = loss();
        x = saved - h;
        const double down = loss();
        x = saved;
        worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h)));
    }
    return worst;
}

/// Scalar loss of a network output; writes d(loss)/d(output) into `grad`.
using OutputLoss = std::function<double(const Tensor& output, Tensor& grad)>;

inline std::vector<double*> parameter_pointers(ParamSet& params) {
    std::vector<double*> out;
    for (auto& p : params.items)
        for (auto& x : p.value.data) out.push_back(&x);
    return out;
}

inline std::vector<double> gradient_values(const ParamSet& params) {
    std::vector<double> out;
    for (const auto& p : params.items) out.insert(out.end(), p.grad.data.begin(), p.grad.data.end());
    return out;
}

/// Analytic parameter gradients of loss(net(input)). Dropout masks come from
/// `seed` so repeated evaluations see the same network.
inline std::vector<double> analytic_gradients(Sequential& net, const OutputLoss& loss, const Tensor& input,
                                              std::uint64_t seed = 0) {
    net.params().zero_grad();
    Rng rng(seed);
    ForwardCache cache;
    const Tensor out = net.forward(input, Mode::train, &rng, &cache);
    Tensor grad(out.shape);
    loss(out, grad);
    net.backward(cache, grad, false);
    return gradient_values(net.params());
}

inline double evaluate_loss(const Sequential& net, const OutputLoss& loss, const Tensor& input, std::uint64_t seed = 0) {
    Rng rng(seed);
    const Tensor out = net.forward(input, Mode::train, &rng);
    Tensor grad(out.shape);
    return loss(out, grad);
}

/// Max relative error between backprop and central differences over every parameter.
inline double grad_check(Sequential& net, const OutputLoss& loss, const Tensor& input, double h = 1e-4,
                         std::uint64_t seed = 0) {
    const auto analytic = analytic_gradients(net, loss, input, seed);
    const auto ptrs = parameter_pointers(net.params());
    return check_gradients(ptrs, analytic, [&] { return evaluate_loss(net, loss, input, seed); }, h);
}

}  // namespace vlearn::nn
