#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "vlearn/camera.hpp"
#include "vlearn/dataset.hpp"
#include "vlearn/error.hpp"
#include "vlearn/geometry.hpp"
#include "vlearn/image.hpp"
#include "vlearn/nn/adam.hpp"
#include "vlearn/nn/checkpoint.hpp"
#include "vlearn/nn/network.hpp"
#include "vlearn/params.hpp"
#include "vlearn/vae.hpp"

namespace vlearn {

// ---- losses -------------------------------------------------------------------

/// Deformed mesh vertices expressed in the camera frame (mm).
inline std::vector<Vec3> camera_space_vertices(const ShapeModel& model, const ParamVector& p) {
    const ViewFrame frame = look_at(p.camera());
    std::vector<Vec3> out;
    out.reserve(model.base.vertices.size());
    for (std::size_t i = 0; i < model.base.vertices.size(); ++i) out.push_back(frame.apply(deform_vertex(model, i, p.weight)));
    return out;
}

inline double mean_vertex_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    if (a.size() != b.size() || a.empty()) throw ShapeError("vertex sets differ in size");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]).norm();
    return acc / static_cast<double>(a.size());
}

/// Mean distance between corresponding camera-space vertices of the true and
/// estimated (deformation, camera) pairs, in mm.
inline double loss_reconstruction(const ParamVector& estimate, const ParamVector& truth, const ShapeModel& model) {
    return mean_vertex_distance(camera_space_vertices(model, truth), camera_space_vertices(model, estimate));
}

/// Mean squared difference of the range-normalized parameters.
inline double loss_parameter(const ParamVector& estimate, const ParamVector& truth, const ParamRanges& r) {
    const auto a = normalize_params(truth, r);
    const auto b = normalize_params(estimate, r);
    double acc = 0.0;
    for (std::size_t d = 0; d < kParamCount; ++d) acc += (a[d] - b[d]) * (a[d] - b[d]);
    return acc / static_cast<double>(kParamCount);
}

inline double loss_total(const ParamVector& estimate, const ParamVector& truth, const ShapeModel& model,
                         const ParamRanges& r, double lambda_p = 0.5) {
    return loss_reconstruction(estimate, truth, model) + lambda_p * loss_parameter(estimate, truth, r);
}

/// Gradient of the reconstruction loss w.r.t. the six raw estimated
/// parameters, from the look-at derivatives and the linear deformation.
inline ParamArray reconstruction_gradient(const ParamVector& estimate, const std::vector<Vec3>& truth_cam,
                                          const ShapeModel& model) {
    const CameraParams cam = estimate.camera();
    const ViewFrame frame = look_at(cam);
    const auto dR = look_at_rotation_derivatives(cam);
    const std::size_t n = model.base.vertices.size();
    if (truth_cam.size() != n) throw ShapeError("target vertex count differs from model");
    ParamArray g{};
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 rel = deform_vertex(model, i, estimate.weight) - frame.origin;
        const Vec3 est = frame.rotation * rel;
        const Vec3 e = truth_cam[i] - est;
        const double len = e.norm();
        if (len == 0.0) continue;
        const Vec3 dir = -e / len;  // d|e| / d(est)
        for (std::size_t k = 0; k < 3; ++k)
            g[k] += dir.dot(dR[k] * rel - frame.rotation.col(static_cast<Eigen::Index>(k)));
        for (std::size_t k = 0; k < 2; ++k) g[3 + k] += dir.dot(dR[3 + k] * rel);
        g[5] += dir.dot(frame.rotation * model.disp_field[i]);
    }
    for (auto& v : g) v /= static_cast<double>(n);
    return g;
}

inline ParamArray reconstruction_gradient_fd(const ParamVector& estimate, const std::vector<Vec3>& truth_cam,
                                             const ShapeModel& model, double h = 1e-6) {
    ParamArray g{};
    const auto base = estimate.to_array();
    for (std::size_t d = 0; d < kParamCount; ++d) {
        auto up = base, down = base;
        const double step = h * std::max(1.0, std::abs(base[d]));
        up[d] += step;
        down[d] -= step;
        const double lu = mean_vertex_distance(truth_cam, camera_space_vertices(model, ParamVector::from_array(up)));
        const double ld = mean_vertex_distance(truth_cam, camera_space_vertices(model, ParamVector::from_array(down)));
        g[d] = (lu - ld) / (2.0 * step);
    }
    return g;
}

struct RegressionLoss {
    double recon = 0.0;
    double param = 0.0;
    double total = 0.0;
    ParamArray d_normalized{};  // d(total) / d(normalized estimate)
};

/// Total loss and its gradient w.r.t. the network's normalized outputs.
inline RegressionLoss regression_loss(const ParamArray& normalized_estimate, const ParamVector& truth,
                                      const std::vector<Vec3>& truth_cam, const ShapeModel& model,
                                      const ParamRanges& r, double lambda_p, bool finite_difference = false) {
    const ParamVector est = denormalize_params(normalized_estimate, r);
    const auto nt = normalize_params(truth, r);
    RegressionLoss out;
    out.recon = mean_vertex_distance(truth_cam, camera_space_vertices(model, est));
    const ParamArray g = finite_difference ? reconstruction_gradient_fd(est, truth_cam, model)
                                           : reconstruction_gradient(est, truth_cam, model);
    for (std::size_t d = 0; d < kParamCount; ++d) {
        const double diff = normalized_estimate[d] - nt[d];
        out.param += diff * diff / static_cast<double>(kParamCount);
        out.d_normalized[d] = r.half_widths[d] * g[d] + lambda_p * 2.0 * diff / static_cast<double>(kParamCount);
    }
    out.total = out.recon + lambda_p * out.param;
    return out;
}

// ---- model ------------------------------------------------------------------------

struct RegressorArch {
    int width = 180;
    int height = 120;
    std::array<std::size_t, 4> channels{8, 16, 16, 32};
    std::size_t hidden = 128;
    double dropout = 0.5;
};

/// Four 3x3 stride-2 conv blocks and a two-layer dense head producing the six
/// range-normalized parameters.
struct RegressorModel {
    RegressorArch arch;
    nn::Sequential net;
};

inline RegressorModel make_regressor(const RegressorArch& arch, std::uint64_t seed) {
    using nn::LayerSpec;
    std::vector<LayerSpec> layers;
    std::size_t c = 1, h = static_cast<std::size_t>(arch.height), w = static_cast<std::size_t>(arch.width);
    for (std::size_t ch : arch.channels) {
        const auto conv = LayerSpec::conv2d(c, ch, 3, 2, 1, h, w);
        layers.push_back(conv);
        layers.push_back(LayerSpec::relu());
        c = ch;
        h = conv.out_height();
        w = conv.out_width();
    }
    layers.push_back(LayerSpec::dense(c * h * w, arch.hidden));
    layers.push_back(LayerSpec::relu());
    layers.push_back(LayerSpec::dropout(arch.dropout));
    layers.push_back(LayerSpec::dense(arch.hidden, kParamCount));
    RegressorModel m;
    m.arch = arch;
    m.net = nn::Sequential(std::move(layers));
    m.net.initialize(seed);
    return m;
}

inline std::vector<ParamArray> predict_normalized(const RegressorModel& m, const std::vector<const Image*>& images,
                                                  std::size_t batch = 60) {
    std::vector<ParamArray> out;
    out.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += batch) {
        const std::size_t stop = std::min(images.size(), start + batch);
        std::vector<const Image*> chunk(images.begin() + static_cast<std::ptrdiff_t>(start),
                                        images.begin() + static_cast<std::ptrdiff_t>(stop));
        for (const Image* img : chunk)
            if (img->width != m.arch.width || img->height != m.arch.height)
                throw ShapeError("regressor expects " + std::to_string(m.arch.width) + "x" +
                                 std::to_string(m.arch.height) + " images");
        const nn::Tensor y = m.net.forward(detail::stack_images(chunk), nn::Mode::eval);
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            ParamArray a{};
            std::copy(y.row(i), y.row(i) + kParamCount, a.begin());
            out.push_back(a);
        }
    }
    return out;
}

inline ParamVector predict_params(const RegressorModel& m, const Image& image, const ParamRanges& r) {
    return denormalize_params(predict_normalized(m, {&image}).front(), r);
}

// ---- training -----------------------------------------------------------------

enum class TrainingMode { real_only, virtual_learning, proposed };

inline const char* mode_name(TrainingMode m) {
    switch (m) {
        case TrainingMode::real_only: return "real-only";
        case TrainingMode::virtual_learning: return "virtual";
        case TrainingMode::proposed: return "proposed";
    }
    return "unknown";
}

inline TrainingMode parse_mode(std::string_view s) {
    if (s == "real-only" || s == "real_only") return TrainingMode::real_only;
    if (s == "virtual") return TrainingMode::virtual_learning;
    if (s == "proposed") return TrainingMode::proposed;
    throw ConfigError("unknown training mode '" + std::string(s) + "' (real-only, virtual, proposed)");
}

struct RegressorHyper {
    std::size_t epochs = 500;
    std::size_t batch = 60;
    double lr = 1e-3;
    double lambda_p = 0.5;
    RegressorArch arch;
    std::uint64_t seed = 1;
    bool finite_difference_jacobian = false;
    std::function<void(std::size_t epoch, const RegressionLoss&)> on_epoch;
};

struct RegressorTraining {
    RegressorModel model;
    std::vector<RegressionLoss> history;  // epoch means; d_normalized unused
};

/// Images and targets a training mode sees.
struct TrainingSet {
    std::vector<Image> owned;
    std::vector<const Image*> images;
    std::vector<ParamVector> targets;
};

inline TrainingSet training_set(const Dataset& ds, const Split& split, TrainingMode mode, const VaeModel* translator) {
    TrainingSet set;
    switch (mode) {
        case TrainingMode::real_only:
            if (split.train_paired.empty()) throw ConfigError("real-only training needs pseudo-real samples");
            for (std::size_t i : split.train_paired) {
                const auto& s = ds.samples.at(i);
                if (!s.pseudo_real) throw ConfigError("sample " + std::to_string(i) + " has no pseudo-real image");
                set.images.push_back(&*s.pseudo_real);
                set.targets.push_back(s.params);
            }
            break;
        case TrainingMode::virtual_learning:
        case TrainingMode::proposed: {
            const auto sims = ds.simulated_indices();
            if (sims.empty()) throw ConfigError(std::string(mode_name(mode)) + " training needs simulated samples");
            if (mode == TrainingMode::proposed && !translator)
                throw ConfigError("proposed training needs a trained translator");
            std::vector<const Image*> raw;
            for (std::size_t i : sims) {
                raw.push_back(&ds.samples[i].simulated);
                set.targets.push_back(ds.samples[i].params);
            }
            if (mode == TrainingMode::proposed) {
                set.owned = translate_batch(*translator, raw);
                for (const auto& img : set.owned) set.images.push_back(&img);
            } else {
                set.images = std::move(raw);
            }
            break;
        }
    }
    return set;
}

inline RegressorTraining train_regressor_on(const TrainingSet& set, const ShapeModel& model, const ParamRanges& r,
                                            const RegressorHyper& hyper) {
    if (set.images.empty()) throw ConfigError("regressor training set is empty");
    if (hyper.batch == 0) throw ConfigError("batch size must be positive");
    for (double h : r.half_widths)
        if (!(h > 0.0)) throw ConfigError("regressor training needs positive half widths");

    std::vector<std::vector<Vec3>> truth_cam;
    truth_cam.reserve(set.targets.size());
    for (const auto& t : set.targets) truth_cam.push_back(camera_space_vertices(model, t));

    RegressorTraining result;
    result.model = make_regressor(hyper.arch, hyper.seed);
    auto& net = result.model.net;
    nn::AdamConfig adam;
    adam.lr = hyper.lr;
    std::int64_t step = 0;
    std::vector<std::size_t> order(set.images.size());
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle = make_rng(hyper.seed, streams::shuffle, epoch);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle() % i]);
        Rng drop = make_rng(hyper.seed, streams::dropout, epoch);

        RegressionLoss epoch_loss;
        for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
            const std::size_t stop = std::min(order.size(), start + hyper.batch);
            const std::size_t n = stop - start;
            std::vector<const Image*> imgs;
            for (std::size_t j = start; j < stop; ++j) imgs.push_back(set.images[order[j]]);
            nn::ForwardCache cache;
            const nn::Tensor y = net.forward(detail::stack_images(imgs), nn::Mode::train, &drop, &cache);
            nn::Tensor grad(y.shape);
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t idx = order[start + j];
                ParamArray est{};
                std::copy(y.row(j), y.row(j) + kParamCount, est.begin());
                const RegressionLoss l = regression_loss(est, set.targets[idx], truth_cam[idx], model, r, hyper.lambda_p,
                                                         hyper.finite_difference_jacobian);
                for (std::size_t d = 0; d < kParamCount; ++d) grad.row(j)[d] = l.d_normalized[d] / static_cast<double>(n);
                epoch_loss.recon += l.recon;
                epoch_loss.param += l.param;
                epoch_loss.total += l.total;
            }
            net.params().zero_grad();
            net.backward(cache, grad, false);
            nn::adam_step(net.params(), adam, ++step);
        }
        const double inv = 1.0 / static_cast<double>(order.size());
        epoch_loss.recon *= inv;
        epoch_loss.param *= inv;
        epoch_loss.total *= inv;
        result.history.push_back(epoch_loss);
        if (hyper.on_epoch) hyper.on_epoch(epoch, epoch_loss);
    }
    return result;
}

inline RegressorTraining train_regressor(const Dataset& ds, const ShapeModel& model, const ParamRanges& r,
                                         TrainingMode mode, const VaeModel* translator, const RegressorHyper& hyper,
                                         const Split& split) {
    return train_regressor_on(training_set(ds, split, mode, translator), model, r, hyper);
}

inline void write_regressor_history(std::ostream& out, const std::vector<RegressionLoss>& history) {
    out << "epoch,L_R,L_P,L\n";
    for (std::size_t e = 0; e < history.size(); ++e)
        out << e + 1 << ',' << text::format_double(history[e].recon) << ',' << text::format_double(history[e].param)
            << ',' << text::format_double(history[e].total) << '\n';
}

// ---- persistence -------------------------------------------------------------

inline nn::Checkpoint regressor_checkpoint(const RegressorModel& m, const ParamRanges& r, TrainingMode mode) {
    nn::Checkpoint c;
    c.metadata["kind"] = "regressor";
    c.metadata["mode"] = mode_name(mode);
    c.metadata["width"] = std::to_string(m.arch.width);
    c.metadata["height"] = std::to_string(m.arch.height);
    c.metadata["ranges.center"] = format_params(r.center);
    c.metadata["ranges.half_widths"] = text::join_doubles(r.half_widths.data(), r.half_widths.size());
    c.networks.emplace_back("regressor", m.net);
    return c;
}

struct LoadedRegressor {
    RegressorModel model;
    ParamRanges ranges;
    TrainingMode mode;
};

inline LoadedRegressor regressor_from_checkpoint(const nn::Checkpoint& c) {
    if (c.meta("kind") != "regressor") throw FormatError("checkpoint is not a regressor");
    LoadedRegressor out;
    out.mode = parse_mode(c.meta("mode"));
    out.model.arch.width = text::parse_int<int>(c.meta("width"));
    out.model.arch.height = text::parse_int<int>(c.meta("height"));
    out.model.net = c.network("regressor");
    out.ranges.center = parse_params(c.meta("ranges.center"));
    const auto hw = text::parse_doubles(c.meta("ranges.half_widths"));
    if (hw.size() != kParamCount) throw FormatError("regressor checkpoint has malformed ranges");
    std::copy(hw.begin(), hw.end(), out.ranges.half_widths.begin());
    if (out.model.net.input_size() != static_cast<std::size_t>(out.model.arch.width * out.model.arch.height) ||
        out.model.net.output_size() != kParamCount)
        throw FormatError("regressor checkpoint has the wrong input or output size");
    return out;
}

}  // namespace vlearn
