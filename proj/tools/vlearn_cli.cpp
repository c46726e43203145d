// Command-line front end: each subcommand reads and writes the on-disk formats
// of one pipeline stage.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vlearn/vlearn.hpp"

namespace fs = std::filesystem;
using namespace vlearn;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "Flat key = value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "Seed (overrides the config's seed)");
    cmd->add_option("--set", c.overrides, "Override a config key: --set key=value (repeatable)");
    cmd->add_flag("-q,--quiet", c.quiet, "Suppress progress messages");
}

RunConfig resolve(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
    text::KeyValues kv;
    for (const auto& o : c.overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
        kv[std::string(text::trim(o.substr(0, eq)))] = std::string(text::trim(o.substr(eq + 1)));
    }
    cfg = parse_run_config(kv, std::move(cfg));
    if (c.seed) cfg.seed = *c.seed;
    validate(cfg);
    return cfg;
}

/// Runs `fn`, re-labelling any failure with the stage name.
template <typename Fn>
auto stage(const std::string& name, Fn&& fn) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

class Logger {
public:
    explicit Logger(bool quiet) : quiet_(quiet), start_(std::chrono::steady_clock::now()) {}
    void operator()(const std::string& msg) const {
        if (quiet_) return;
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        std::fprintf(stderr, "[%8.1fs] %s\n", s, msg.c_str());
    }

private:
    bool quiet_;
    std::chrono::steady_clock::time_point start_;
};

ShapeModel model_for(const RunConfig& cfg, const std::string& model_path) {
    if (model_path.empty()) return make_phantom(cfg.pipeline.dataset.phantom);
    std::ifstream in(model_path);
    if (!in) throw FormatError("cannot open " + model_path);
    return read_shape_model(in);
}

Split dataset_split(const Dataset& ds, const RunConfig& cfg) {
    return split_paired(ds, cfg.pipeline.test_fraction, ds.config.seed);
}

std::vector<Image> load_images_for_eval(const Dataset& ds, const std::vector<std::size_t>& idx, bool simulated) {
    std::vector<Image> out;
    for (std::size_t i : idx) out.push_back(simulated ? ds.samples[i].simulated : *ds.samples[i].pseudo_real);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vlearn: shape-model virtual learning pipeline"};
    app.set_version_flag("--version", std::string("vlearn ") + VLEARN_VERSION);
    app.require_subcommand(1);

    // phantom ------------------------------------------------------------------
    Common ph_c;
    std::optional<int> ph_rings, ph_segments;
    std::string ph_out = "phantom.shm";
    auto* ph = app.add_subcommand("phantom", "Write the phantom shape model (base mesh + displacement fields)");
    add_common(ph, ph_c);
    ph->add_option("--rings", ph_rings, "Latitude rings")->check(CLI::PositiveNumber);
    ph->add_option("--segments", ph_segments, "Longitude segments")->check(CLI::PositiveNumber);
    ph->add_option("-o,--output", ph_out, "Output shape-model file");

    // gen-data -----------------------------------------------------------------
    Common gd_c;
    std::string gd_out;
    std::optional<std::size_t> gd_nsim, gd_nreal;
    auto* gd = app.add_subcommand("gen-data", "Generate a simulated + pseudo-real dataset directory");
    add_common(gd, gd_c);
    gd->add_option("-o,--output", gd_out, "Dataset directory (default <output_dir>/dataset)");
    gd->add_option("--n-sim", gd_nsim, "Simulated-only samples");
    gd->add_option("--n-real", gd_nreal, "Paired pseudo-real samples");

    // train-vae ----------------------------------------------------------------
    Common tv_c;
    std::string tv_data, tv_out, tv_hist;
    std::optional<std::size_t> tv_epochs;
    auto* tv = app.add_subcommand("train-vae", "Train the image translator on a dataset");
    add_common(tv, tv_c);
    tv->add_option("--data", tv_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    tv->add_option("-o,--output", tv_out, "Checkpoint path (default <output_dir>/translator.ckpt)");
    tv->add_option("--history", tv_hist, "Loss history CSV");
    tv->add_option("--epochs", tv_epochs, "Training epochs");

    // train-regressor ----------------------------------------------------------
    Common tr_c;
    std::string tr_data, tr_out, tr_hist, tr_translator, tr_mode_s;
    std::optional<std::size_t> tr_epochs;
    auto* tr = app.add_subcommand("train-regressor", "Train the parameter regressor");
    add_common(tr, tr_c);
    tr->add_option("--mode", tr_mode_s, "Training images")
        ->required()
        ->check(CLI::IsMember({"real-only", "virtual", "proposed"}));
    tr->add_option("--data", tr_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    tr->add_option("--translator", tr_translator, "Translator checkpoint (proposed mode)")->check(CLI::ExistingFile);
    tr->add_option("-o,--output", tr_out, "Checkpoint path (default <output_dir>/regressor_<mode>.ckpt)");
    tr->add_option("--history", tr_hist, "Loss history CSV");
    tr->add_option("--epochs", tr_epochs, "Training epochs");

    // translate ----------------------------------------------------------------
    Common tl_c;
    std::string tl_ckpt, tl_in, tl_out;
    auto* tl = app.add_subcommand("translate", "Pass one image through the translator");
    add_common(tl, tl_c);
    tl->add_option("--translator", tl_ckpt, "Translator checkpoint")->required()->check(CLI::ExistingFile);
    tl->add_option("-i,--input", tl_in, "Input PGM")->required()->check(CLI::ExistingFile);
    tl->add_option("-o,--output", tl_out, "Output PGM")->required();

    // evaluate -----------------------------------------------------------------
    Common ev_c;
    std::string ev_data, ev_reg, ev_translator, ev_out, ev_on = "real";
    auto* ev = app.add_subcommand("evaluate", "Score a regressor on the held-out split of a dataset");
    add_common(ev, ev_c);
    ev->add_option("--data", ev_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--regressor", ev_reg, "Regressor checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--translator", ev_translator, "Translator checkpoint (proposed mode)")->check(CLI::ExistingFile);
    ev->add_option("--on", ev_on, "Held-out images to score")->check(CLI::IsMember({"real", "sim"}));
    ev->add_option("-o,--output", ev_out, "Per-sample CSV (default <output_dir>/evaluation.csv)");

    // compare ------------------------------------------------------------------
    Common cp_c;
    std::string cp_out, cp_seeds, cp_phantoms;
    bool cp_artifacts = false;
    std::optional<std::size_t> cp_threads, cp_epochs_vae, cp_epochs_reg;
    auto* cp = app.add_subcommand("compare", "Real-only vs virtual vs proposed over several seeds");
    add_common(cp, cp_c);
    cp->add_option("-o,--output", cp_out, "Report directory (default <output_dir>)");
    cp->add_option("--seeds", cp_seeds, "Comma-separated seeds (overrides config 'seeds')");
    cp->add_option("--phantom-seeds", cp_phantoms, "Cross-validate over phantoms with these seeds");
    cp->add_option("--threads", cp_threads, "Seeds run concurrently")->check(CLI::PositiveNumber);
    cp->add_option("--vae-epochs", cp_epochs_vae, "Translator epochs");
    cp->add_option("--regressor-epochs", cp_epochs_reg, "Regressor epochs");
    cp->add_flag("--save-artifacts", cp_artifacts, "Keep datasets and checkpoints under the report directory");

    // render -------------------------------------------------------------------
    Common rd_c;
    std::string rd_params, rd_out, rd_kind = "contour", rd_model;
    auto* rd = app.add_subcommand("render", "Render one parameter vector to a PGM");
    add_common(rd, rd_c);
    rd->add_option("--params", rd_params, "x,y,z,focus_x,focus_y,weight")->required();
    rd->add_option("--kind", rd_kind, "Image kind")->check(CLI::IsMember({"mask", "contour", "real", "depth"}));
    rd->add_option("--model", rd_model, "Shape-model file (default: phantom from config)")->check(CLI::ExistingFile);
    rd->add_option("-o,--output", rd_out, "Output PGM")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const CLI::App* failed = &app;
        for (auto* sub : app.get_subcommands()) failed = sub;
        std::cerr << failed->help();
        return 2;
    }

    std::string current = app.get_subcommands().front()->get_name();
    try {
        if (ph->parsed()) {
            RunConfig cfg = stage("config", [&] { return resolve(ph_c); });
            auto& pc = cfg.pipeline.dataset.phantom;
            if (ph_rings) pc.rings = *ph_rings;
            if (ph_segments) pc.segments = *ph_segments;
            stage("phantom", [&] {
                const ShapeModel m = make_phantom(pc);
                ensure_parent(ph_out);
                std::ofstream out(ph_out);
                if (!out) throw FormatError("cannot open " + ph_out);
                write_shape_model(out, m);
                Logger(ph_c.quiet)("wrote " + ph_out + " (" + std::to_string(m.base.vertices.size()) + " vertices, " +
                                   std::to_string(m.base.triangles.size()) + " faces)");
            });
        } else if (gd->parsed()) {
            RunConfig cfg = stage("config", [&] { return resolve(gd_c); });
            Logger log(gd_c.quiet);
            DatasetConfig dc = cfg.pipeline.dataset;
            dc.seed = cfg.seed;
            if (gd_nsim) dc.n_sim = *gd_nsim;
            if (gd_nreal) dc.n_real = *gd_nreal;
            const fs::path dir = gd_out.empty() ? cfg.output_dir / "dataset" : fs::path(gd_out);
            const Dataset ds = stage("gen-data", [&] { return build_dataset(dc); });
            stage("gen-data/save", [&] { save_dataset(ds, dir); });
            log("wrote " + std::to_string(ds.samples.size()) + " samples to " + dir.string());
        } else if (tv->parsed()) {
            RunConfig cfg = stage("config", [&] { return resolve(tv_c); });
            Logger log(tv_c.quiet);
            TranslatorHyper th = cfg.pipeline.translator;
            if (tv_epochs) th.epochs = *tv_epochs;
            th.seed = cfg.seed;
            th.on_epoch = [&](std::size_t e, const VaeLossTerms& t) {
                log("epoch " + std::to_string(e + 1) + "/" + std::to_string(th.epochs) + " recon " +
                    text::format_double(t.recon) + " kld " + text::format_double(t.kld));
            };
            const Dataset ds = stage("load-data", [&] { return load_dataset(tv_data); });
            const Split split = dataset_split(ds, cfg);
            const auto result = stage("train-vae", [&] { return train_translator(ds, split.train_paired, th); });
            const fs::path out = tv_out.empty() ? cfg.output_dir / "translator.ckpt" : fs::path(tv_out);
            stage("train-vae/save", [&] {
                ensure_parent(out);
                nn::save_checkpoint(out, translator_checkpoint(result.model, th.mode));
                if (!tv_hist.empty()) {
                    ensure_parent(tv_hist);
                    std::ofstream h(tv_hist);
                    write_translator_history(h, result.history);
                }
            });
            log("wrote " + out.string());
        } else if (tr->parsed()) {
            RunConfig cfg = stage("config", [&] { return resolve(tr_c); });
            Logger log(tr_c.quiet);
            const TrainingMode mode = parse_mode(tr_mode_s);
            RegressorHyper rh = cfg.pipeline.regressor;
            if (tr_epochs) rh.epochs = *tr_epochs;
            rh.seed = cfg.seed;
            rh.on_epoch = [&](std::size_t e, const RegressionLoss& l) {
                log("epoch " + std::to_string(e + 1) + "/" + std::to_string(rh.epochs) + " L_R " +
                    text::format_double(l.recon) + " L_P " + text::format_double(l.param));
            };
            if (mode == TrainingMode::proposed && tr_translator.empty())
                throw StageError("config", "--mode proposed needs --translator");
            const Dataset ds = stage("load-data", [&] { return load_dataset(tr_data); });
            std::optional<VaeModel> translator;
            if (!tr_translator.empty())
                translator = stage("load-translator",
                                   [&] { return translator_from_checkpoint(nn::load_checkpoint(tr_translator)); });
            const ShapeModel model = make_phantom(ds.config.phantom);
            const auto result = stage("train-regressor", [&] {
                return train_regressor(ds, model, ds.config.ranges, mode, translator ? &*translator : nullptr, rh,
                                       dataset_split(ds, cfg));
            });
            const fs::path out = tr_out.empty() ? cfg.output_dir / ("regressor_" + tr_mode_s + ".ckpt") : fs::path(tr_out);
            stage("train-regressor/save", [&] {
                ensure_parent(out);
                nn::save_checkpoint(out, regressor_checkpoint(result.model, ds.config.ranges, mode));
                if (!tr_hist.empty()) {
                    ensure_parent(tr_hist);
                    std::ofstream h(tr_hist);
                    write_regressor_history(h, result.history);
                }
            });
            log("wrote " + out.string());
        } else if (tl->parsed()) {
            stage("config", [&] { return resolve(tl_c); });
            const VaeModel m = stage("load-translator", [&] { return translator_from_checkpoint(nn::load_checkpoint(tl_ckpt)); });
            const Image in = stage("load-image", [&] { return load_pgm(tl_in); });
            stage("translate", [&] {
                ensure_parent(tl_out);
                save_pgm(tl_out, quantize8(translate(m, in)));
            });
        } else if (ev->parsed()) {
            RunConfig cfg = stage("config", [&] { return resolve(ev_c); });
            Logger log(ev_c.quiet);
            const Dataset ds = stage("load-data", [&] { return load_dataset(ev_data); });
            const auto reg = stage("load-regressor", [&] { return regressor_from_checkpoint(nn::load_checkpoint(ev_reg)); });
            std::optional<VaeModel> translator;
            if (!ev_translator.empty())
                translator = stage("load-translator",
                                   [&] { return translator_from_checkpoint(nn::load_checkpoint(ev_translator)); });
            if (reg.mode == TrainingMode::proposed && !translator)
                throw StageError("config", "a proposed-mode regressor needs --translator");
            const ShapeModel model = make_phantom(ds.config.phantom);
            const Split split = dataset_split(ds, cfg);
            const std::vector<double> mae = stage("evaluate", [&] {
                std::vector<Image> imgs = load_images_for_eval(ds, split.test_paired, ev_on == "sim");
                std::vector<const Image*> ptrs;
                for (const auto& i : imgs) ptrs.push_back(&i);
                std::vector<Image> translated;
                if (reg.mode == TrainingMode::proposed) {
                    translated = translate_batch(*translator, ptrs);
                    ptrs.clear();
                    for (const auto& i : translated) ptrs.push_back(&i);
                }
                const auto preds = predict_normalized(reg.model, ptrs);
                std::vector<double> out;
                for (std::size_t j = 0; j < preds.size(); ++j)
                    out.push_back(mae_metric(denormalize_params(preds[j], reg.ranges),
                                             ds.samples[split.test_paired[j]].params, model));
                return out;
            });
            const fs::path out = ev_out.empty() ? cfg.output_dir / "evaluation.csv" : fs::path(ev_out);
            stage("evaluate/save", [&] {
                ensure_parent(out);
                std::ofstream f(out);
                f << "index,mae_mm\n";
                for (std::size_t j = 0; j < mae.size(); ++j)
                    f << split.test_paired[j] << ',' << text::format_double(mae[j]) << '\n';
            });
            const Summary s = summarize(mae);
            std::printf("%s regressor on %zu held-out %s images: MAE %.3f +- %.3f mm\n", mode_name(reg.mode), s.n,
                        ev_on == "sim" ? "simulated" : "pseudo-real", s.mean, s.std);
        } else if (cp->parsed()) {
            RunConfig cfg = stage("config", [&] { return resolve(cp_c); });
            Logger log(cp_c.quiet);
            PipelineConfig pc = cfg.pipeline;
            if (!cp_seeds.empty()) pc.seeds = stage("config", [&] { return detail::parse_sizes(cp_seeds); });
            if (cp_c.seed && cp_seeds.empty()) pc.seeds = {*cp_c.seed};
            if (cp_threads) pc.threads = *cp_threads;
            if (cp_epochs_vae) pc.translator.epochs = *cp_epochs_vae;
            if (cp_epochs_reg) pc.regressor.epochs = *cp_epochs_reg;
            const fs::path dir = cp_out.empty() ? cfg.output_dir : fs::path(cp_out);
            fs::create_directories(dir);
            if (cp_artifacts) pc.artifact_dir = dir / "artifacts";
            pc.log = [&](const std::string& m) { log(m); };
            auto write_report = [&](const EvalReport& r, const std::string& stem) {
                std::ofstream csv(dir / (stem + ".csv"));
                write_report_csv(csv, r);
                std::ofstream txt(dir / (stem + ".txt"));
                write_report_text(txt, r);
            };
            if (cp_phantoms.empty()) {
                const EvalReport report = compare_conditions(pc);
                stage("compare/save", [&] { write_report(report, "report"); });
                write_report_text(std::cout, report);
            } else {
                std::vector<PhantomConfig> phantoms;
                for (auto s : stage("config", [&] { return detail::parse_sizes(cp_phantoms); })) {
                    PhantomConfig p = pc.dataset.phantom;
                    p.seed = s;
                    phantoms.push_back(p);
                }
                const CrossValidation cv = cross_validate(phantoms, pc);
                stage("compare/save", [&] {
                    for (std::size_t i = 0; i < cv.reports.size(); ++i)
                        write_report(cv.reports[i], "report_phantom_" + std::to_string(phantoms[i].seed));
                    std::ofstream agg(dir / "aggregate.txt");
                    agg << "condition,mean_of_phantom_means,std_of_phantom_means\n";
                    for (std::size_t c = 0; c < 3; ++c)
                        agg << mode_name(kConditions[c]) << ',' << text::format_double(cv.aggregate_mean[c]) << ','
                            << text::format_double(cv.aggregate_std[c]) << '\n';
                    agg << "improvement_percent," << text::format_double(cv.improvement) << '\n';
                });
                for (std::size_t c = 0; c < 3; ++c)
                    std::printf("%-10s %.3f +- %.3f mm (over %zu phantoms)\n", mode_name(kConditions[c]),
                                cv.aggregate_mean[c], cv.aggregate_std[c], cv.reports.size());
                std::printf("improvement of proposed over virtual: %.2f %%\n", cv.improvement);
            }
            log("reports written to " + dir.string());
        } else if (rd->parsed()) {
            RunConfig cfg = stage("config", [&] { return resolve(rd_c); });
            const ParamVector p = stage("config", [&] { return parse_params(rd_params); });
            const ShapeModel model = stage("load-model", [&] { return model_for(cfg, rd_model); });
            const Intrinsics& k = cfg.pipeline.dataset.intrinsics;
            const Image img = stage("render", [&] {
                const SurfaceMesh mesh = deform(model, p.weight);
                if (rd_kind == "mask") return rasterize_mask(mesh, p.camera(), k);
                if (rd_kind == "contour") return render_simulated(mesh, p.camera(), k);
                if (rd_kind == "depth") {
                    const DepthRender d = rasterize_depth(mesh, p.camera(), k);
                    Image out(k.width, k.height);
                    double lo = 1e300, hi = -1e300;
                    for (std::size_t i = 0; i < d.mask.pixels.size(); ++i)
                        if (d.mask.pixels[i] > 0.0) {
                            lo = std::min(lo, d.depth[i]);
                            hi = std::max(hi, d.depth[i]);
                        }
                    for (std::size_t i = 0; i < d.mask.pixels.size(); ++i)
                        if (d.mask.pixels[i] > 0.0) out.pixels[i] = hi > lo ? 1.0 - 0.9 * (d.depth[i] - lo) / (hi - lo) : 1.0;
                    return out;
                }
                PerturbConfig pert = cfg.pipeline.dataset.perturb;
                pert.seed = cfg.seed;
                return render_pseudo_real(mesh, p.camera(), k, pert);
            });
            if (rasterize_mask(deform(model, p.weight), p.camera(), k).count_nonzero() == 0)
                std::cerr << "warning: the object is outside the view frustum; writing an empty image\n";
            stage("render/save", [&] {
                ensure_parent(rd_out);
                save_pgm(rd_out, quantize8(img));
            });
        }
    } catch (const StageError& e) {
        std::cerr << "error in stage '" << e.stage() << "': " << e.message() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error in stage '" << current << "': " << e.what() << '\n';
        return 1;
    }
    return 0;
}
