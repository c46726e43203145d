#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vlearn/error.hpp"
#include "vlearn/nn/tensor.hpp"
#include "vlearn/rng.hpp"

namespace vlearn::nn {

enum class LayerKind : std::uint32_t { dense = 0, conv2d = 1, relu = 2, sigmoid = 3, dropout = 4 };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::sigmoid: return "sigmoid";
        case LayerKind::dropout: return "dropout";
    }
    return "unknown";
}

/// Layer description. Dense uses in/out features; conv2d uses channels,
/// kernel, stride, zero padding and the input height/width; activations and
/// dropout take their width from the previous layer when `in` is 0.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t in_height = 0;
    std::size_t in_width = 0;
    double rate = 0.0;

    static LayerSpec dense(std::size_t in, std::size_t out) {
        LayerSpec s;
        s.kind = LayerKind::dense;
        s.in = in;
        s.out = out;
        return s;
    }

    static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                            std::size_t padding, std::size_t in_height, std::size_t in_width) {
        LayerSpec s;
        s.kind = LayerKind::conv2d;
        s.in_channels = in_channels;
        s.out_channels = out_channels;
        s.kernel = kernel;
        s.stride = stride;
        s.padding = padding;
        s.in_height = in_height;
        s.in_width = in_width;
        s.in = in_channels * in_height * in_width;
        if (stride > 0 && in_height + 2 * padding >= kernel && in_width + 2 * padding >= kernel)
            s.out = out_channels * s.out_height() * s.out_width();
        return s;
    }

    static LayerSpec relu(std::size_t n = 0) { return activation(LayerKind::relu, n); }
    static LayerSpec sigmoid(std::size_t n = 0) { return activation(LayerKind::sigmoid, n); }
    static LayerSpec dropout(double rate, std::size_t n = 0) {
        LayerSpec s = activation(LayerKind::dropout, n);
        s.rate = rate;
        return s;
    }

    std::size_t out_height() const { return (in_height + 2 * padding - kernel) / stride + 1; }
    std::size_t out_width() const { return (in_width + 2 * padding - kernel) / stride + 1; }

    bool has_params() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }

    void validate() const {
        const std::string name = layer_kind_name(kind);
        switch (kind) {
            case LayerKind::dense:
                if (in == 0 || out == 0) throw ConfigError(name + ": sizes must be positive");
                break;
            case LayerKind::conv2d:
                if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 || in_height == 0 ||
                    in_width == 0)
                    throw ConfigError(name + ": sizes must be positive");
                if (in_height + 2 * padding < kernel || in_width + 2 * padding < kernel)
                    throw ConfigError(name + ": kernel larger than padded input");
                break;
            case LayerKind::dropout:
                if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0,1)");
                [[fallthrough]];
            default:
                if (in == 0 || in != out) throw ConfigError(name + ": width must be positive");
        }
    }

    bool operator==(const LayerSpec&) const = default;

private:
    static LayerSpec activation(LayerKind kind, std::size_t n) {
        LayerSpec s;
        s.kind = kind;
        s.in = n;
        s.out = n;
        return s;
    }
};

/// Trainable tensor with its gradient accumulator and Adam moments.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;

    Param(std::string n, std::vector<std::size_t> shape)
        : name(std::move(n)), value(shape), grad(shape), m(shape), v(shape) {}
};

struct ParamSet {
    std::vector<Param> items;

    void zero_grad() {
        for (auto& p : items) p.grad.fill(0.0);
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& p : items) n += p.value.size();
        return n;
    }
};

enum class Mode { train, eval };

/// Values kept by a forward pass for the matching backward pass.
struct ForwardCache {
    std::vector<Tensor> activations;          // input of layer l at index l; final output last
    std::vector<std::vector<double>> masks;   // dropout scale factors per layer
    bool valid = false;
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline void im2col(const LayerSpec& s, const double* image, RowMat& cols) {
    const std::size_t k = s.kernel, oh = s.out_height(), ow = s.out_width();
    const auto h = static_cast<std::ptrdiff_t>(s.in_height), w = static_cast<std::ptrdiff_t>(s.in_width);
    cols.resize(static_cast<Eigen::Index>(s.in_channels * k * k), static_cast<Eigen::Index>(oh * ow));
    for (std::size_t c = 0; c < s.in_channels; ++c)
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                double* dst = cols.data() + ((c * k + ky) * k + kx) * oh * ow;
                const double* plane = image + c * s.in_height * s.in_width;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - static_cast<std::ptrdiff_t>(s.padding);
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(ox * s.stride + kx) - static_cast<std::ptrdiff_t>(s.padding);
                        *dst++ = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? plane[iy * w + ix] : 0.0;
                    }
                }
            }
}

inline void col2im_add(const LayerSpec& s, const RowMat& cols, double* image) {
    const std::size_t k = s.kernel, oh = s.out_height(), ow = s.out_width();
    const auto h = static_cast<std::ptrdiff_t>(s.in_height), w = static_cast<std::ptrdiff_t>(s.in_width);
    for (std::size_t c = 0; c < s.in_channels; ++c)
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                const double* src = cols.data() + ((c * k + ky) * k + kx) * oh * ow;
                double* plane = image + c * s.in_height * s.in_width;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - static_cast<std::ptrdiff_t>(s.padding);
                    for (std::size_t ox = 0; ox < ow; ++ox, ++src) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(ox * s.stride + kx) - static_cast<std::ptrdiff_t>(s.padding);
                        if (iy >= 0 && iy < h && ix >= 0 && ix < w) plane[iy * w + ix] += *src;
                    }
                }
            }
}

}  // namespace detail

/// Feed-forward stack of layers with reverse-mode gradients.
class Sequential {
public:
    Sequential() = default;

    explicit Sequential(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
        if (layers_.empty()) throw ConfigError("network needs at least one layer");
        std::size_t width = 0;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            auto& s = layers_[l];
            if (!s.has_params() && s.in == 0) s.in = s.out = width;
            s.validate();
            if (l > 0 && s.in != width)
                throw ShapeError("layer " + std::to_string(l) + " (" + layer_kind_name(s.kind) + "): expects width " +
                                 std::to_string(s.in) + " but previous layer produces " + std::to_string(width));
            width = s.out;
            param_offset_.push_back(params_.items.size());
            const std::string prefix = "layer" + std::to_string(l) + ".";
            if (s.kind == LayerKind::dense) {
                params_.items.emplace_back(prefix + "weight", std::vector<std::size_t>{s.out, s.in});
                params_.items.emplace_back(prefix + "bias", std::vector<std::size_t>{s.out});
            } else if (s.kind == LayerKind::conv2d) {
                params_.items.emplace_back(prefix + "weight",
                                           std::vector<std::size_t>{s.out_channels, s.in_channels, s.kernel, s.kernel});
                params_.items.emplace_back(prefix + "bias", std::vector<std::size_t>{s.out_channels});
            }
        }
    }

    /// Glorot-uniform weights, zero biases.
    void initialize(std::uint64_t seed) {
        Rng rng = make_rng(seed, streams::init);
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& s = layers_[l];
            if (!s.has_params()) continue;
            double fan_in = 0, fan_out = 0;
            if (s.kind == LayerKind::dense) {
                fan_in = static_cast<double>(s.in);
                fan_out = static_cast<double>(s.out);
            } else {
                fan_in = static_cast<double>(s.in_channels * s.kernel * s.kernel);
                fan_out = static_cast<double>(s.out_channels * s.kernel * s.kernel);
            }
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            auto& w = params_.items[param_offset_[l]].value;
            for (auto& x : w.data) x = uniform(rng, -limit, limit);
            params_.items[param_offset_[l] + 1].value.fill(0.0);
        }
    }

    const std::vector<LayerSpec>& layers() const { return layers_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    std::size_t input_size() const { return layers_.front().in; }
    std::size_t output_size() const { return layers_.back().out; }

    Param& weight(std::size_t layer) { return params_.items.at(param_offset(layer)); }
    Param& bias(std::size_t layer) { return params_.items.at(param_offset(layer) + 1); }

    /// Forward pass over a [batch, features] tensor. `rng` drives dropout in
    /// train mode; pass `cache` to enable a later backward().
    Tensor forward(const Tensor& input, Mode mode, Rng* rng = nullptr, ForwardCache* cache = nullptr) const {
        if (input.shape.empty() || input.cols() != input_size())
            throw ShapeError("layer 0 (" + std::string(layer_kind_name(layers_[0].kind)) + "): expected " +
                             std::to_string(input_size()) + " features per sample, got input " + input.shape_string());
        if (cache) {
            cache->activations.clear();
            cache->masks.assign(layers_.size(), {});
            cache->valid = false;
        }
        Tensor x = input;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            Tensor y = forward_layer(l, x, mode, rng, cache ? &cache->masks[l] : nullptr);
            if (cache) cache->activations.push_back(std::move(x));
            x = std::move(y);
        }
        if (cache) {
            cache->activations.push_back(x);
            cache->valid = true;
        }
        return x;
    }

    /// Reverse pass; adds parameter gradients into params().grad and returns
    /// d(loss)/d(input) (empty when `need_input_grad` is false).
    Tensor backward(const ForwardCache& cache, const Tensor& output_grad, bool need_input_grad = true) {
        if (!cache.valid || cache.activations.size() != layers_.size() + 1)
            throw Error("backward called without a matching forward cache");
        if (output_grad.size() != cache.activations.back().size())
            throw ShapeError("output gradient " + output_grad.shape_string() + " does not match network output " +
                             cache.activations.back().shape_string());
        Tensor g = output_grad;
        for (std::size_t l = layers_.size(); l-- > 0;) {
            const bool want = need_input_grad || l > 0;
            g = backward_layer(l, cache, g, want);
        }
        return need_input_grad ? g : Tensor{};
    }

private:
    std::size_t param_offset(std::size_t layer) const {
        if (layer >= layers_.size() || !layers_[layer].has_params()) throw ConfigError("layer has no parameters");
        return param_offset_[layer];
    }

    Tensor forward_layer(std::size_t l, const Tensor& x, Mode mode, Rng* rng, std::vector<double>* mask) const {
        using namespace detail;
        const auto& s = layers_[l];
        const auto n = static_cast<Eigen::Index>(x.rows());
        Tensor y({x.rows(), s.out});
        switch (s.kind) {
            case LayerKind::dense: {
                const auto& w = params_.items[param_offset_[l]].value;
                const auto& b = params_.items[param_offset_[l] + 1].value;
                ConstMap X(x.data.data(), n, static_cast<Eigen::Index>(s.in));
                ConstMap W(w.data.data(), static_cast<Eigen::Index>(s.out), static_cast<Eigen::Index>(s.in));
                MutMap Y(y.data.data(), n, static_cast<Eigen::Index>(s.out));
                Y.noalias() = X * W.transpose();
                Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data.data(), static_cast<Eigen::Index>(s.out));
                break;
            }
            case LayerKind::conv2d: {
                const auto& w = params_.items[param_offset_[l]].value;
                const auto& b = params_.items[param_offset_[l] + 1].value;
                const auto patch = static_cast<Eigen::Index>(s.in_channels * s.kernel * s.kernel);
                const auto cout = static_cast<Eigen::Index>(s.out_channels);
                const auto area = static_cast<Eigen::Index>(s.out_height() * s.out_width());
                ConstMap K(w.data.data(), cout, patch);
                RowMat cols;
                for (std::size_t i = 0; i < x.rows(); ++i) {
                    im2col(s, x.row(i), cols);
                    MutMap Y(y.row(i), cout, area);
                    Y.noalias() = K * cols;
                    for (Eigen::Index c = 0; c < cout; ++c) Y.row(c).array() += b.data[static_cast<std::size_t>(c)];
                }
                break;
            }
            case LayerKind::relu:
                for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
                break;
            case LayerKind::sigmoid:
                for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = 1.0 / (1.0 + std::exp(-x.data[i]));
                break;
            case LayerKind::dropout:
                if (mode == Mode::train && s.rate > 0.0) {
                    if (!rng) throw Error("dropout layer " + std::to_string(l) + " needs an rng in train mode");
                    const double keep = 1.0 - s.rate;
                    std::vector<double> local;
                    std::vector<double>& m = mask ? *mask : local;
                    m.resize(x.size());
                    for (std::size_t i = 0; i < x.size(); ++i) {
                        m[i] = uniform01(*rng) < keep ? 1.0 / keep : 0.0;
                        y.data[i] = x.data[i] * m[i];
                    }
                } else {
                    y.data = x.data;
                }
                break;
        }
        return y;
    }

    Tensor backward_layer(std::size_t l, const ForwardCache& cache, const Tensor& g, bool need_input_grad) {
        using namespace detail;
        const auto& s = layers_[l];
        const Tensor& x = cache.activations[l];
        const auto n = static_cast<Eigen::Index>(x.rows());
        Tensor dx;
        if (need_input_grad) dx = Tensor(x.shape);
        switch (s.kind) {
            case LayerKind::dense: {
                auto& wp = params_.items[param_offset_[l]];
                auto& bp = params_.items[param_offset_[l] + 1];
                const auto in = static_cast<Eigen::Index>(s.in), out = static_cast<Eigen::Index>(s.out);
                ConstMap X(x.data.data(), n, in);
                ConstMap G(g.data.data(), n, out);
                MutMap dW(wp.grad.data.data(), out, in);
                dW.noalias() += G.transpose() * X;
                // plain loops: Eigen's reductions peel by address alignment, which makes the
                // summation order (and the last bits) depend on where the heap put the buffer
                for (std::size_t i = 0; i < x.rows(); ++i) {
                    const double* gi = g.row(i);
                    for (std::size_t j = 0; j < s.out; ++j) bp.grad.data[j] += gi[j];
                }
                if (need_input_grad) {
                    ConstMap W(wp.value.data.data(), out, in);
                    MutMap dX(dx.data.data(), n, in);
                    dX.noalias() = G * W;
                }
                break;
            }
            case LayerKind::conv2d: {
                auto& wp = params_.items[param_offset_[l]];
                auto& bp = params_.items[param_offset_[l] + 1];
                const auto patch = static_cast<Eigen::Index>(s.in_channels * s.kernel * s.kernel);
                const auto cout = static_cast<Eigen::Index>(s.out_channels);
                const auto area = static_cast<Eigen::Index>(s.out_height() * s.out_width());
                ConstMap K(wp.value.data.data(), cout, patch);
                MutMap dK(wp.grad.data.data(), cout, patch);
                RowMat cols, dcols;
                for (std::size_t i = 0; i < x.rows(); ++i) {
                    im2col(s, x.row(i), cols);
                    ConstMap G(g.row(i), cout, area);
                    dK.noalias() += G * cols.transpose();
                    for (std::size_t c = 0; c < s.out_channels; ++c) {
                        const double* gc = g.row(i) + c * static_cast<std::size_t>(area);
                        double acc = 0.0;
                        for (Eigen::Index a = 0; a < area; ++a) acc += gc[a];
                        bp.grad.data[c] += acc;
                    }
                    if (need_input_grad) {
                        dcols.noalias() = K.transpose() * G;
                        col2im_add(s, dcols, dx.row(i));
                    }
                }
                break;
            }
            case LayerKind::relu:
                if (need_input_grad)
                    for (std::size_t i = 0; i < x.size(); ++i) dx.data[i] = x.data[i] > 0.0 ? g.data[i] : 0.0;
                break;
            case LayerKind::sigmoid:
                if (need_input_grad) {
                    const Tensor& y = cache.activations[l + 1];
                    for (std::size_t i = 0; i < x.size(); ++i) dx.data[i] = g.data[i] * y.data[i] * (1.0 - y.data[i]);
                }
                break;
            case LayerKind::dropout:
                if (need_input_grad) {
                    const auto& m = cache.masks[l];
                    if (m.empty())
                        dx.data = g.data;
                    else
                        for (std::size_t i = 0; i < x.size(); ++i) dx.data[i] = g.data[i] * m[i];
                }
                break;
        }
        return dx;
    }

    std::vector<LayerSpec> layers_;
    ParamSet params_;
    std::vector<std::size_t> param_offset_;
};

}  // namespace vlearn::nn
