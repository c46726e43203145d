#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "vlearn/dataset.hpp"
#include "vlearn/error.hpp"
#include "vlearn/image.hpp"
#include "vlearn/nn/adam.hpp"
#include "vlearn/nn/checkpoint.hpp"
#include "vlearn/nn/network.hpp"
#include "vlearn/rng.hpp"
#include "vlearn/text.hpp"

namespace vlearn {

struct VaeArch {
    int width = 180;
    int height = 120;
    std::size_t hidden1 = 512;
    std::size_t hidden2 = 128;
    std::size_t latent = 64;

    std::size_t pixels() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
};

/// Encoder: three dense layers ending in [mu | logvar]; decoder: three dense
/// layers ending in a sigmoid image.
struct VaeModel {
    VaeArch arch;
    nn::Sequential encoder;
    nn::Sequential decoder;

    std::size_t latent() const { return arch.latent; }

    void validate() const {
        if (encoder.layers().empty() || decoder.layers().empty()) throw ConfigError("translator model is empty");
        if (encoder.input_size() != arch.pixels() || decoder.output_size() != arch.pixels())
            throw ConfigError("translator model image size mismatch");
        if (encoder.output_size() != 2 * arch.latent || decoder.input_size() != arch.latent)
            throw ConfigError("translator model latent size mismatch");
    }
};

inline VaeModel make_vae(const VaeArch& arch, std::uint64_t seed) {
    using nn::LayerSpec;
    VaeModel m;
    m.arch = arch;
    m.encoder = nn::Sequential({LayerSpec::dense(arch.pixels(), arch.hidden1), LayerSpec::relu(),
                                LayerSpec::dense(arch.hidden1, arch.hidden2), LayerSpec::relu(),
                                LayerSpec::dense(arch.hidden2, 2 * arch.latent)});
    m.decoder = nn::Sequential({LayerSpec::dense(arch.latent, arch.hidden2), LayerSpec::relu(),
                                LayerSpec::dense(arch.hidden2, arch.hidden1), LayerSpec::relu(),
                                LayerSpec::dense(arch.hidden1, arch.pixels()), LayerSpec::sigmoid()});
    m.encoder.initialize(derive_seed(seed, streams::init, 1));
    m.decoder.initialize(derive_seed(seed, streams::init, 2));
    return m;
}

struct LatentCode {
    std::vector<double> mu;
    std::vector<double> logvar;
};

namespace detail {

inline void require_image(const VaeArch& arch, const Image& img) {
    if (img.width != arch.width || img.height != arch.height)
        throw ShapeError("translator expects " + std::to_string(arch.width) + "x" + std::to_string(arch.height) +
                         " images, got " + std::to_string(img.width) + "x" + std::to_string(img.height));
}

inline nn::Tensor stack_images(const std::vector<const Image*>& images) {
    if (images.empty()) return {};
    const std::size_t p = images.front()->size();
    nn::Tensor t({images.size(), p});
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i]->size() != p) throw ShapeError("images in a batch differ in size");
        std::copy(images[i]->pixels.begin(), images[i]->pixels.end(), t.row(i));
    }
    return t;
}

}  // namespace detail

inline LatentCode encode(const VaeModel& m, const Image& image) {
    detail::require_image(m.arch, image);
    const nn::Tensor out = m.encoder.forward(detail::stack_images({&image}), nn::Mode::eval);
    const std::size_t L = m.latent();
    return {{out.data.begin(), out.data.begin() + static_cast<std::ptrdiff_t>(L)},
            {out.data.begin() + static_cast<std::ptrdiff_t>(L), out.data.end()}};
}

/// z = mu + exp(logvar / 2) * eps with eps ~ N(0, 1).
inline std::vector<double> reparameterize(const std::vector<double>& mu, const std::vector<double>& logvar, Rng& rng) {
    if (mu.size() != logvar.size()) throw ShapeError("mu and logvar lengths differ");
    std::vector<double> z(mu.size());
    for (std::size_t d = 0; d < mu.size(); ++d) z[d] = mu[d] + std::exp(0.5 * logvar[d]) * standard_normal(rng);
    return z;
}

/// KL(N(mu, exp(logvar)) || N(0, 1)) averaged over latent dimensions.
inline double kld(const std::vector<double>& mu, const std::vector<double>& logvar) {
    if (mu.size() != logvar.size()) throw ShapeError("mu and logvar lengths differ");
    if (mu.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t d = 0; d < mu.size(); ++d) acc += mu[d] * mu[d] + std::exp(logvar[d]) - logvar[d] - 1.0;
    return 0.5 * acc / static_cast<double>(mu.size());
}

enum class ReconReduction { mean, sum };

inline const char* reduction_name(ReconReduction r) { return r == ReconReduction::sum ? "sum" : "mean"; }

inline ReconReduction parse_reduction(std::string_view s) {
    if (s == "sum") return ReconReduction::sum;
    if (s == "mean") return ReconReduction::mean;
    throw ConfigError("reconstruction reduction must be 'sum' or 'mean'");
}

struct VaeLossTerms {
    double recon = 0.0;
    double kld = 0.0;
    double total = 0.0;
};

/// Batch loss recon + lambda_kl * kld, both averaged over the batch. `eps`
/// ([batch, latent]) is the reparameterization noise. With `backprop` the
/// parameter gradients are added to the encoder and decoder.
inline VaeLossTerms vae_loss(VaeModel& m, const nn::Tensor& inputs, const nn::Tensor& targets, const nn::Tensor& eps,
                             double lambda_kl, ReconReduction reduction, bool backprop) {
    const std::size_t n = inputs.rows();
    const std::size_t L = m.latent();
    const std::size_t P = m.arch.pixels();
    if (targets.rows() != n || targets.cols() != P) throw ShapeError("targets do not match inputs");
    if (eps.rows() != n || eps.cols() != L) throw ShapeError("noise tensor must be [batch, latent]");

    nn::ForwardCache enc_cache, dec_cache;
    const nn::Tensor stats = m.encoder.forward(inputs, nn::Mode::eval, nullptr, backprop ? &enc_cache : nullptr);
    nn::Tensor z({n, L});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < L; ++d)
            z.row(i)[d] = stats.row(i)[d] + std::exp(0.5 * stats.row(i)[L + d]) * eps.row(i)[d];
    const nn::Tensor recon = m.decoder.forward(z, nn::Mode::eval, nullptr, backprop ? &dec_cache : nullptr);

    const double inv_n = 1.0 / static_cast<double>(n);
    const double pix_scale = reduction == ReconReduction::mean ? 1.0 / static_cast<double>(P) : 1.0;
    VaeLossTerms terms;
    nn::Tensor d_recon;
    if (backprop) d_recon = nn::Tensor(recon.shape);
    for (std::size_t i = 0; i < recon.size(); ++i) {
        const double diff = recon.data[i] - targets.data[i];
        terms.recon += diff * diff;
        if (backprop) d_recon.data[i] = 2.0 * diff * pix_scale * inv_n;
    }
    terms.recon *= pix_scale * inv_n;
    for (std::size_t i = 0; i < n; ++i) {
        const double* s = stats.row(i);
        double acc = 0.0;
        for (std::size_t d = 0; d < L; ++d) acc += s[d] * s[d] + std::exp(s[L + d]) - s[L + d] - 1.0;
        terms.kld += 0.5 * acc / static_cast<double>(L);
    }
    terms.kld *= inv_n;
    terms.total = terms.recon + lambda_kl * terms.kld;

    if (backprop) {
        const nn::Tensor dz = m.decoder.backward(dec_cache, d_recon, true);
        nn::Tensor d_stats(stats.shape);
        const double kl_scale = lambda_kl * inv_n / static_cast<double>(L);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < L; ++d) {
                const double mu = stats.row(i)[d];
                const double lv = stats.row(i)[L + d];
                const double sigma = std::exp(0.5 * lv);
                d_stats.row(i)[d] = dz.row(i)[d] + kl_scale * mu;
                d_stats.row(i)[L + d] = dz.row(i)[d] * eps.row(i)[d] * 0.5 * sigma + kl_scale * 0.5 * (sigma * sigma - 1.0);
            }
        m.encoder.backward(enc_cache, d_stats, false);
    }
    return terms;
}

inline nn::Tensor draw_noise(std::size_t n, std::size_t latent, Rng& rng) {
    nn::Tensor eps({n, latent});
    for (auto& e : eps.data) e = standard_normal(rng);
    return eps;
}

/// Single-pair convenience: loss of reconstructing `target` from `input`.
inline VaeLossTerms vae_loss(const Image& input, const Image& target, VaeModel& m, double lambda_kl, Rng& rng,
                             ReconReduction reduction = ReconReduction::mean, bool backprop = false) {
    detail::require_image(m.arch, input);
    detail::require_image(m.arch, target);
    const nn::Tensor eps = draw_noise(1, m.latent(), rng);
    return vae_loss(m, detail::stack_images({&input}), detail::stack_images({&target}), eps, lambda_kl, reduction,
                    backprop);
}

/// Eval-time translation: decode(mu), no sampling.
inline std::vector<Image> translate_batch(const VaeModel& m, const std::vector<const Image*>& images,
                                          std::size_t batch = 60) {
    m.validate();
    const std::size_t L = m.latent();
    std::vector<Image> out;
    out.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += batch) {
        const std::size_t stop = std::min(images.size(), start + batch);
        std::vector<const Image*> chunk(images.begin() + static_cast<std::ptrdiff_t>(start),
                                        images.begin() + static_cast<std::ptrdiff_t>(stop));
        for (const Image* img : chunk) detail::require_image(m.arch, *img);
        const nn::Tensor stats = m.encoder.forward(detail::stack_images(chunk), nn::Mode::eval);
        nn::Tensor mu({chunk.size(), L});
        for (std::size_t i = 0; i < chunk.size(); ++i) std::copy(stats.row(i), stats.row(i) + L, mu.row(i));
        const nn::Tensor dec = m.decoder.forward(mu, nn::Mode::eval);
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            Image img(m.arch.width, m.arch.height);
            std::copy(dec.row(i), dec.row(i) + m.arch.pixels(), img.pixels.begin());
            out.push_back(std::move(img));
        }
    }
    return out;
}

inline Image translate(const VaeModel& m, const Image& image) { return std::move(translate_batch(m, {&image}).front()); }

// ---- training -----------------------------------------------------------------

/// `shared` learns f (pseudo-real -> paired simulated, simulated -> simulated);
/// `autoencode` is the ordinary VAE g (every image -> itself).
enum class TranslatorMode { shared, autoencode };

struct TranslatorHyper {
    std::size_t epochs = 500;
    std::size_t batch = 60;
    double lr = 1e-3;
    double lambda_kl = 5.0;
    ReconReduction reduction = ReconReduction::sum;
    TranslatorMode mode = TranslatorMode::shared;
    /// Times each pseudo-real pair appears per epoch.
    std::size_t real_repeat = 1;
    VaeArch arch;
    std::uint64_t seed = 1;
    std::function<void(std::size_t epoch, const VaeLossTerms&)> on_epoch;
};

struct TranslatorTraining {
    VaeModel model;
    std::vector<VaeLossTerms> history;  // one entry per epoch
};

inline TranslatorTraining train_translator(const Dataset& ds, const std::vector<std::size_t>& paired_train,
                                           const TranslatorHyper& hyper) {
    if (ds.samples.empty()) throw ConfigError("cannot train a translator on an empty dataset");
    if (hyper.batch == 0) throw ConfigError("batch size must be positive");
    struct Pair {
        const Image* input;
        const Image* target;
    };
    std::vector<Pair> pairs;
    for (std::size_t i : ds.simulated_indices()) pairs.push_back({&ds.samples[i].simulated, &ds.samples[i].simulated});
    for (std::size_t i : paired_train) {
        const Sample& s = ds.samples.at(i);
        if (!s.pseudo_real) throw ConfigError("sample " + std::to_string(i) + " has no pseudo-real image");
        pairs.push_back({&s.simulated, &s.simulated});
        const Image* target = hyper.mode == TranslatorMode::shared ? &s.simulated : &*s.pseudo_real;
        for (std::size_t r = 0; r < hyper.real_repeat; ++r) pairs.push_back({&*s.pseudo_real, target});
    }
    if (pairs.empty()) throw ConfigError("translator training set is empty");

    TranslatorTraining result;
    result.model = make_vae(hyper.arch, hyper.seed);
    VaeModel& m = result.model;
    for (const auto& p : pairs) detail::require_image(m.arch, *p.input);

    nn::AdamConfig adam;
    adam.lr = hyper.lr;
    std::int64_t step = 0;
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle = make_rng(hyper.seed, streams::shuffle, epoch);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle() % i]);
        Rng noise = make_rng(hyper.seed, streams::latent, epoch);

        VaeLossTerms epoch_terms;
        for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
            const std::size_t stop = std::min(order.size(), start + hyper.batch);
            std::vector<const Image*> ins, tgts;
            for (std::size_t j = start; j < stop; ++j) {
                ins.push_back(pairs[order[j]].input);
                tgts.push_back(pairs[order[j]].target);
            }
            const nn::Tensor eps = draw_noise(ins.size(), m.latent(), noise);
            m.encoder.params().zero_grad();
            m.decoder.params().zero_grad();
            const VaeLossTerms t = vae_loss(m, detail::stack_images(ins), detail::stack_images(tgts), eps,
                                            hyper.lambda_kl, hyper.reduction, true);
            ++step;
            nn::adam_step(m.encoder.params(), adam, step);
            nn::adam_step(m.decoder.params(), adam, step);
            const double w = static_cast<double>(stop - start);
            epoch_terms.recon += t.recon * w;
            epoch_terms.kld += t.kld * w;
            epoch_terms.total += t.total * w;
        }
        const double inv = 1.0 / static_cast<double>(order.size());
        epoch_terms.recon *= inv;
        epoch_terms.kld *= inv;
        epoch_terms.total *= inv;
        result.history.push_back(epoch_terms);
        if (hyper.on_epoch) hyper.on_epoch(epoch, epoch_terms);
    }
    return result;
}

inline void write_translator_history(std::ostream& out, const std::vector<VaeLossTerms>& history) {
    out << "epoch,recon,kld,total\n";
    for (std::size_t e = 0; e < history.size(); ++e)
        out << e + 1 << ',' << text::format_double(history[e].recon) << ',' << text::format_double(history[e].kld) << ','
            << text::format_double(history[e].total) << '\n';
}

// ---- persistence -------------------------------------------------------------

inline nn::Checkpoint translator_checkpoint(const VaeModel& m, TranslatorMode mode = TranslatorMode::shared) {
    nn::Checkpoint c;
    c.metadata["kind"] = "translator";
    c.metadata["mode"] = mode == TranslatorMode::shared ? "shared" : "autoencode";
    c.metadata["width"] = std::to_string(m.arch.width);
    c.metadata["height"] = std::to_string(m.arch.height);
    c.metadata["latent"] = std::to_string(m.arch.latent);
    c.networks.emplace_back("encoder", m.encoder);
    c.networks.emplace_back("decoder", m.decoder);
    return c;
}

inline VaeModel translator_from_checkpoint(const nn::Checkpoint& c) {
    if (c.meta("kind") != "translator") throw FormatError("checkpoint is not a translator");
    VaeModel m;
    m.arch.width = text::parse_int<int>(c.meta("width"));
    m.arch.height = text::parse_int<int>(c.meta("height"));
    m.arch.latent = text::parse_int<std::size_t>(c.meta("latent"));
    m.encoder = c.network("encoder");
    m.decoder = c.network("decoder");
    m.arch.hidden1 = m.encoder.layers().front().out;
    m.arch.hidden2 = m.encoder.layers().at(2).out;
    try {
        m.validate();
    } catch (const ConfigError& e) {
        throw FormatError(e.what());
    }
    return m;
}

}  // namespace vlearn
