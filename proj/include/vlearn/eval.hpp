#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "vlearn/dataset.hpp"
#include "vlearn/error.hpp"
#include "vlearn/image.hpp"
#include "vlearn/nn/checkpoint.hpp"
#include "vlearn/params.hpp"
#include "vlearn/regressor.hpp"
#include "vlearn/text.hpp"
#include "vlearn/vae.hpp"

namespace vlearn {

/// Shape reconstruction error in mm: the same camera-space vertex distance the
/// regressor is trained on.
inline double mae_metric(const ParamVector& estimate, const ParamVector& truth, const ShapeModel& model) {
    return loss_reconstruction(estimate, truth, model);
}

// ---- statistics ----------------------------------------------------------------

struct Summary {
    std::size_t n = 0;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation (n - 1)
};

inline Summary summarize(const std::vector<double>& values) {
    Summary s;
    s.n = values.size();
    if (values.empty()) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
    if (s.n > 1) {
        double acc = 0.0;
        for (double v : values) acc += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(acc / static_cast<double>(s.n - 1));
    }
    return s;
}

struct AnovaResult {
    double f = 0.0;
    double p = 1.0;
    double df_between = 0.0;
    double df_within = 0.0;
};

/// F-distribution survival function P(F > f) via the regularized incomplete beta.
inline double f_survival(double f, double df1, double df2) {
    if (!(df1 > 0.0 && df2 > 0.0)) throw ConfigError("F distribution needs positive degrees of freedom");
    if (f <= 0.0) return 1.0;
    if (std::isinf(f)) return 0.0;
    return boost::math::ibeta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f));
}

inline AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw ConfigError("ANOVA needs at least two groups");
    std::size_t total = 0;
    double grand = 0.0;
    for (const auto& g : groups) {
        if (g.size() < 2) throw ConfigError("ANOVA needs at least two samples per group");
        total += g.size();
        grand += std::accumulate(g.begin(), g.end(), 0.0);
    }
    grand /= static_cast<double>(total);
    double ss_between = 0.0, ss_within = 0.0;
    for (const auto& g : groups) {
        const double mean = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
        ss_between += static_cast<double>(g.size()) * (mean - grand) * (mean - grand);
        for (double v : g) ss_within += (v - mean) * (v - mean);
    }
    AnovaResult r;
    r.df_between = static_cast<double>(groups.size() - 1);
    r.df_within = static_cast<double>(total - groups.size());
    if (!(ss_within > 0.0)) throw ConfigError("ANOVA is undefined for groups without within-group variance");
    r.f = (ss_between / r.df_between) / (ss_within / r.df_within);
    r.p = f_survival(r.f, r.df_between, r.df_within);
    return r;
}

// ---- pipeline --------------------------------------------------------------------

inline constexpr std::array<TrainingMode, 3> kConditions = {TrainingMode::real_only, TrainingMode::virtual_learning,
                                                            TrainingMode::proposed};

struct PipelineConfig {
    DatasetConfig dataset;
    TranslatorHyper translator;
    RegressorHyper regressor;
    double test_fraction = 0.2;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::size_t threads = 1;
    /// When set, datasets and checkpoints are written under this directory.
    std::filesystem::path artifact_dir;
    std::function<void(const std::string&)> log;
};

/// Similarity of the two domains before and after translation on the test split.
struct TranslationMetrics {
    double mse_raw = 0.0;         // mean MSE(I_R, I_S)
    double mse_translated = 0.0;  // mean MSE(f(I_R), I_S)
    double mse_between = 0.0;     // mean MSE(f(I_R), f(I_S))
    double latent_match = 0.0;    // fraction of pairs whose mu_R is nearer mu_S than a mismatched mu_S'
};

struct Artifact {
    std::string path;
    std::uint64_t hash = 0;
};

struct SeedRun {
    std::uint64_t seed = 0;
    std::array<std::vector<double>, 3> mae;  // indexed like kConditions
    TranslationMetrics translation;
    std::array<double, 3> final_loss{};
    std::vector<Artifact> artifacts;
};

struct EvalReport {
    std::vector<SeedRun> runs;
    std::array<Summary, 3> conditions;
    double improvement = 0.0;  // (virtual - proposed) / virtual * 100
    AnovaResult anova;
    text::KeyValues config;
};

inline std::uint64_t hash_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw FormatError("cannot hash " + p.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        h = text::fnv1a(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), h);
    }
    return h;
}

inline std::uint64_t hash_directory(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& f : files) {
        h = text::fnv1a(f.filename().string(), h);
        h = text::fnv1a(std::to_string(hash_file(f)), h);
    }
    return h;
}

inline double vector_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

inline TranslationMetrics translation_metrics(const VaeModel& vae, const Dataset& ds,
                                              const std::vector<std::size_t>& test) {
    TranslationMetrics m;
    if (test.empty()) return m;
    std::vector<const Image*> reals, sims;
    for (std::size_t i : test) {
        reals.push_back(&*ds.samples[i].pseudo_real);
        sims.push_back(&ds.samples[i].simulated);
    }
    const auto fr = translate_batch(vae, reals);
    const auto fs = translate_batch(vae, sims);
    std::vector<LatentCode> zr, zs;
    for (std::size_t j = 0; j < test.size(); ++j) {
        m.mse_raw += mean_squared_error(*reals[j], *sims[j]);
        m.mse_translated += mean_squared_error(fr[j], *sims[j]);
        m.mse_between += mean_squared_error(fr[j], fs[j]);
        zr.push_back(encode(vae, *reals[j]));
        zs.push_back(encode(vae, *sims[j]));
    }
    const double n = static_cast<double>(test.size());
    m.mse_raw /= n;
    m.mse_translated /= n;
    m.mse_between /= n;
    if (test.size() > 1) {
        std::size_t hits = 0;
        for (std::size_t j = 0; j < test.size(); ++j) {
            const std::size_t other = (j + 1) % test.size();
            if (vector_distance(zr[j].mu, zs[j].mu) < vector_distance(zr[j].mu, zs[other].mu)) ++hits;
        }
        m.latent_match = static_cast<double>(hits) / n;
    }
    return m;
}

/// Regressor inputs for a held-out pseudo-real image under each condition.
inline std::vector<double> evaluate_condition(const RegressorModel& reg, TrainingMode mode, const VaeModel* translator,
                                              const Dataset& ds, const ShapeModel& model, const ParamRanges& r,
                                              const std::vector<std::size_t>& test) {
    std::vector<const Image*> inputs;
    for (std::size_t i : test) inputs.push_back(&*ds.samples.at(i).pseudo_real);
    std::vector<Image> translated;
    if (mode == TrainingMode::proposed) {
        if (!translator) throw ConfigError("proposed evaluation needs a translator");
        translated = translate_batch(*translator, inputs);
        inputs.clear();
        for (const auto& img : translated) inputs.push_back(&img);
    }
    const auto preds = predict_normalized(reg, inputs);
    std::vector<double> mae;
    for (std::size_t j = 0; j < test.size(); ++j)
        mae.push_back(mae_metric(denormalize_params(preds[j], r), ds.samples[test[j]].params, model));
    return mae;
}

inline void finalize_report(EvalReport& report) {
    std::array<std::vector<double>, 3> pooled;
    for (const auto& run : report.runs)
        for (std::size_t c = 0; c < 3; ++c) pooled[c].insert(pooled[c].end(), run.mae[c].begin(), run.mae[c].end());
    for (std::size_t c = 0; c < 3; ++c) report.conditions[c] = summarize(pooled[c]);
    const double virt = report.conditions[1].mean;
    report.improvement = virt != 0.0 ? (virt - report.conditions[2].mean) / virt * 100.0 : 0.0;
    if (std::all_of(pooled.begin(), pooled.end(), [](const auto& g) { return g.size() >= 2; })) {
        try {
            report.anova = anova_oneway({pooled.begin(), pooled.end()});
        } catch (const ConfigError&) {
            report.anova = {};
        }
    }
}

inline text::KeyValues describe(const PipelineConfig& cfg) {
    text::KeyValues kv = manifest_keys(cfg.dataset);
    kv.erase("seed");
    kv.erase("format_version");
    kv["translator.epochs"] = std::to_string(cfg.translator.epochs);
    kv["translator.batch"] = std::to_string(cfg.translator.batch);
    kv["translator.lr"] = text::format_double(cfg.translator.lr);
    kv["translator.lambda_kl"] = text::format_double(cfg.translator.lambda_kl);
    kv["translator.reduction"] = reduction_name(cfg.translator.reduction);
    kv["translator.real_repeat"] = std::to_string(cfg.translator.real_repeat);
    kv["regressor.epochs"] = std::to_string(cfg.regressor.epochs);
    kv["regressor.batch"] = std::to_string(cfg.regressor.batch);
    kv["regressor.lr"] = text::format_double(cfg.regressor.lr);
    kv["regressor.lambda_p"] = text::format_double(cfg.regressor.lambda_p);
    kv["regressor.dropout"] = text::format_double(cfg.regressor.arch.dropout);
    kv["test_fraction"] = text::format_double(cfg.test_fraction);
    std::string seeds;
    for (auto s : cfg.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
    kv["seeds"] = seeds;
    return kv;
}

/// Full pipeline for one seed: dataset, translator, three regressors, evaluation.
inline SeedRun run_seed(const PipelineConfig& cfg, std::uint64_t seed) {
    auto log = [&](const std::string& msg) {
        if (cfg.log) cfg.log("[seed " + std::to_string(seed) + "] " + msg);
    };
    SeedRun run;
    run.seed = seed;
    // artifact paths are reported relative to the artifact directory
    auto rel = [&](const std::filesystem::path& p) { return p.lexically_relative(cfg.artifact_dir).generic_string(); };
    std::string stage = "dataset";
    try {
        DatasetConfig dcfg = cfg.dataset;
        dcfg.seed = seed;
        const ShapeModel model = make_phantom(dcfg.phantom);
        const Dataset ds = build_dataset(model, dcfg);
        const Split split = split_paired(ds, cfg.test_fraction, seed);
        if (split.test_paired.empty()) throw ConfigError("test split is empty");
        log("dataset ready: " + std::to_string(ds.samples.size()) + " samples, " +
            std::to_string(split.test_paired.size()) + " held out");
        std::filesystem::path dir;
        if (!cfg.artifact_dir.empty()) {
            dir = cfg.artifact_dir / ("seed_" + std::to_string(seed));
            save_dataset(ds, dir / "dataset");
            run.artifacts.push_back({rel(dir / "dataset"), hash_directory(dir / "dataset")});
        }

        stage = "train-vae";
        TranslatorHyper th = cfg.translator;
        th.seed = derive_seed(seed, 100);
        if (cfg.log)
            th.on_epoch = [&](std::size_t e, const VaeLossTerms& t) {
                if ((e + 1) % 10 == 0 || e == 0)
                    log("translator epoch " + std::to_string(e + 1) + " loss " + text::format_double(t.total));
            };
        const TranslatorTraining vae = train_translator(ds, split.train_paired, th);
        run.translation = translation_metrics(vae.model, ds, split.test_paired);
        log("translation mse raw " + text::format_double(run.translation.mse_raw) + " translated " +
            text::format_double(run.translation.mse_translated));
        if (!dir.empty()) {
            const auto p = dir / "translator.ckpt";
            nn::save_checkpoint(p, translator_checkpoint(vae.model, th.mode));
            run.artifacts.push_back({rel(p), hash_file(p)});
        }

        for (std::size_t c = 0; c < 3; ++c) {
            const TrainingMode mode = kConditions[c];
            stage = std::string("train-regressor/") + mode_name(mode);
            RegressorHyper rh = cfg.regressor;
            rh.seed = derive_seed(seed, 200 + c);
            if (cfg.log)
                rh.on_epoch = [&](std::size_t e, const RegressionLoss& l) {
                    if ((e + 1) % 10 == 0 || e == 0)
                        log(std::string(mode_name(mode)) + " epoch " + std::to_string(e + 1) + " L " +
                            text::format_double(l.total));
                };
            const RegressorTraining reg =
                train_regressor(ds, model, dcfg.ranges, mode, mode == TrainingMode::proposed ? &vae.model : nullptr, rh,
                                split);
            run.final_loss[c] = reg.history.empty() ? 0.0 : reg.history.back().total;
            stage = std::string("evaluate/") + mode_name(mode);
            run.mae[c] = evaluate_condition(reg.model, mode, &vae.model, ds, model, dcfg.ranges, split.test_paired);
            log(std::string(mode_name(mode)) + " mean MAE " + text::format_double(summarize(run.mae[c]).mean));
            if (!dir.empty()) {
                const auto p = dir / (std::string("regressor_") + mode_name(mode) + ".ckpt");
                nn::save_checkpoint(p, regressor_checkpoint(reg.model, dcfg.ranges, mode));
                run.artifacts.push_back({rel(p), hash_file(p)});
            }
        }
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
    return run;
}

/// Real-only vs virtual vs proposed on the same held-out pseudo-real split, per seed.
inline EvalReport compare_conditions(const PipelineConfig& cfg) {
    if (cfg.seeds.empty()) throw ConfigError("compare needs at least one seed");
    EvalReport report;
    report.config = describe(cfg);
    if (cfg.threads > 1) {
        std::vector<std::future<SeedRun>> futures;
        for (std::size_t start = 0; start < cfg.seeds.size(); start += cfg.threads) {
            const std::size_t stop = std::min(cfg.seeds.size(), start + cfg.threads);
            futures.clear();
            for (std::size_t i = start; i < stop; ++i)
                futures.push_back(std::async(std::launch::async, [&cfg, seed = cfg.seeds[i]] { return run_seed(cfg, seed); }));
            for (auto& f : futures) report.runs.push_back(f.get());
        }
    } else {
        for (auto seed : cfg.seeds) report.runs.push_back(run_seed(cfg, seed));
    }
    finalize_report(report);
    return report;
}

struct CrossValidation {
    std::vector<EvalReport> reports;             // one per phantom
    std::array<double, 3> aggregate_mean{};      // equal-weight mean of per-phantom means
    std::array<double, 3> aggregate_std{};       // spread of the per-phantom means
    double improvement = 0.0;
};

/// Three default-sized phantoms differing in bump pattern and collapse direction.
inline std::vector<PhantomConfig> default_phantom_suite() {
    std::vector<PhantomConfig> out(3);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].seed = i + 1;
        out[i].collapse_axis = i == 2 ? 0 : 1;
    }
    return out;
}

inline CrossValidation cross_validate(const std::vector<PhantomConfig>& phantoms, const PipelineConfig& cfg) {
    if (phantoms.size() < 2) throw ConfigError("cross-validation needs at least two phantoms");
    CrossValidation cv;
    for (const auto& ph : phantoms) {
        PipelineConfig c = cfg;
        c.dataset.phantom = ph;
        if (!cfg.artifact_dir.empty()) c.artifact_dir = cfg.artifact_dir / ("phantom_" + std::to_string(ph.seed));
        cv.reports.push_back(compare_conditions(c));
    }
    for (std::size_t k = 0; k < 3; ++k) {
        std::vector<double> means;
        for (const auto& r : cv.reports) means.push_back(r.conditions[k].mean);
        const Summary s = summarize(means);
        cv.aggregate_mean[k] = s.mean;
        cv.aggregate_std[k] = s.std;
    }
    cv.improvement = cv.aggregate_mean[1] != 0.0 ? (cv.aggregate_mean[1] - cv.aggregate_mean[2]) / cv.aggregate_mean[1] * 100.0 : 0.0;
    return cv;
}

// ---- report files -----------------------------------------------------------------

/// CSV with a `#` header (config, artifacts, optional timestamp) followed by one
/// row per held-out sample and condition.
inline void write_report_csv(std::ostream& out, const EvalReport& report, bool timestamp = true) {
    out << "# vlearn evaluation report\n";
    if (timestamp) {
        const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        out << "# generated: " << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ") << '\n';
    }
    for (const auto& [k, v] : report.config) out << "# config " << k << " = " << v << '\n';
    for (const auto& run : report.runs)
        for (const auto& a : run.artifacts) {
            char hex[17];
            std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(a.hash));
            out << "# artifact seed=" << run.seed << ' ' << a.path << " fnv1a64=" << hex << '\n';
        }
    for (const auto& run : report.runs) {
        const auto& t = run.translation;
        out << "# translation seed=" << run.seed << " mse_raw=" << text::format_double(t.mse_raw)
            << " mse_translated=" << text::format_double(t.mse_translated)
            << " mse_between=" << text::format_double(t.mse_between)
            << " latent_match=" << text::format_double(t.latent_match) << '\n';
    }
    out << "seed,condition,sample,mae_mm\n";
    for (const auto& run : report.runs)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t j = 0; j < run.mae[c].size(); ++j)
                out << run.seed << ',' << mode_name(kConditions[c]) << ',' << j << ','
                    << text::format_double(run.mae[c][j]) << '\n';
}

/// Rebuilds per-sample values (and translation metrics) from a report CSV and
/// recomputes the summary statistics.
inline EvalReport read_report_csv(std::istream& in) {
    EvalReport report;
    std::string line;
    auto run_for = [&](std::uint64_t seed) -> SeedRun& {
        for (auto& r : report.runs)
            if (r.seed == seed) return r;
        report.runs.push_back({});
        report.runs.back().seed = seed;
        return report.runs.back();
    };
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ls(line.substr(1));
            std::string tag;
            ls >> tag;
            if (tag == "config") {
                std::string rest;
                std::getline(ls, rest);
                const auto eq = rest.find('=');
                if (eq != std::string::npos)
                    report.config[std::string(text::trim(rest.substr(0, eq)))] = std::string(text::trim(rest.substr(eq + 1)));
            } else if (tag == "translation") {
                std::string field;
                SeedRun* run = nullptr;
                while (ls >> field) {
                    const auto eq = field.find('=');
                    if (eq == std::string::npos) continue;
                    const std::string key = field.substr(0, eq), val = field.substr(eq + 1);
                    if (key == "seed") run = &run_for(text::parse_int<std::uint64_t>(val));
                    else if (!run) continue;
                    else if (key == "mse_raw") run->translation.mse_raw = text::parse_double(val);
                    else if (key == "mse_translated") run->translation.mse_translated = text::parse_double(val);
                    else if (key == "mse_between") run->translation.mse_between = text::parse_double(val);
                    else if (key == "latent_match") run->translation.latent_match = text::parse_double(val);
                }
            }
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        const auto f = text::split(line, ',');
        if (f.size() != 4) throw FormatError("report row must have 4 columns");
        SeedRun& run = run_for(text::parse_int<std::uint64_t>(f[0]));
        const TrainingMode mode = parse_mode(f[1]);
        const auto c = static_cast<std::size_t>(std::find(kConditions.begin(), kConditions.end(), mode) - kConditions.begin());
        run.mae[c].push_back(text::parse_double(f[3]));
    }
    finalize_report(report);
    return report;
}

inline void write_report_text(std::ostream& out, const EvalReport& report) {
    out << "Shape reconstruction error on held-out pseudo-real images (MAE, mm)\n\n";
    out << std::left << std::setw(12) << "condition" << std::right << std::setw(10) << "mean" << std::setw(10) << "std"
        << std::setw(8) << "n" << '\n';
    for (std::size_t c = 0; c < 3; ++c) {
        const auto& s = report.conditions[c];
        out << std::left << std::setw(12) << mode_name(kConditions[c]) << std::right << std::fixed << std::setprecision(2)
            << std::setw(10) << s.mean << std::setw(10) << s.std << std::setw(8) << s.n << '\n';
    }
    out << "\nper seed means:\n";
    for (const auto& run : report.runs) {
        out << "  seed " << run.seed << ':';
        for (std::size_t c = 0; c < 3; ++c)
            out << ' ' << mode_name(kConditions[c]) << '=' << std::setprecision(2) << summarize(run.mae[c]).mean;
        out << "  | mse raw=" << std::setprecision(4) << run.translation.mse_raw
            << " translated=" << run.translation.mse_translated << " between=" << run.translation.mse_between << '\n';
    }
    out << std::setprecision(2) << "\nimprovement of proposed over virtual: " << report.improvement << " %\n";
    out << std::setprecision(4) << "one-way ANOVA: F = " << report.anova.f << ", p = " << std::scientific
        << report.anova.p << std::defaultfloat << '\n';
}

}  // namespace vlearn
