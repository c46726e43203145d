#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vlearn/error.hpp"
#include "vlearn/geometry.hpp"
#include "vlearn/image.hpp"
#include "vlearn/params.hpp"
#include "vlearn/raster.hpp"
#include "vlearn/rng.hpp"
#include "vlearn/text.hpp"

namespace vlearn {

inline constexpr int kDatasetFormatVersion = 1;

struct DatasetConfig {
    PhantomConfig phantom;
    ParamRanges ranges = ParamRanges::right_lung();
    std::size_t n_sim = 2000;
    std::size_t n_real = 128;
    PerturbConfig perturb;
    Intrinsics intrinsics;
    std::uint64_t seed = 1;

    bool operator==(const DatasetConfig&) const = default;
};

/// One generated view. `simulated` is always present; paired samples also
/// carry the pseudo-real rendering of the same (mesh, camera).
struct Sample {
    ParamVector params;
    Image simulated;
    std::optional<Image> pseudo_real;

    bool operator==(const Sample&) const = default;
};

/// Samples [0, n_sim) are simulated-only; [n_sim, n_sim + n_real) are paired.
struct Dataset {
    DatasetConfig config;
    std::vector<Sample> samples;

    std::vector<std::size_t> simulated_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (!samples[i].pseudo_real) out.push_back(i);
        return out;
    }

    std::vector<std::size_t> paired_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (samples[i].pseudo_real) out.push_back(i);
        return out;
    }

    bool operator==(const Dataset&) const = default;
};

/// Per-sample nuisance seed; depends on (dataset seed, index) only.
inline std::uint64_t perturb_seed(std::uint64_t seed, std::uint64_t index) {
    return derive_seed(seed, streams::perturb, index);
}

inline Sample render_sample(const ShapeModel& model, const ParamVector& params, bool paired, const DatasetConfig& cfg,
                            std::uint64_t index) {
    const SurfaceMesh mesh = deform(model, params.weight);
    const CameraParams cam = params.camera();
    Sample s;
    s.params = params;
    s.simulated = render_simulated(mesh, cam, cfg.intrinsics);
    if (paired) {
        PerturbConfig p = cfg.perturb;
        p.seed = perturb_seed(cfg.seed, index);
        s.pseudo_real = quantize8(render_pseudo_real(mesh, cam, cfg.intrinsics, p));
    }
    return s;
}

inline Dataset build_dataset(const ShapeModel& model, const DatasetConfig& cfg) {
    model.validate();
    cfg.ranges.validate();
    cfg.perturb.validate();
    cfg.intrinsics.validate();
    if (cfg.n_sim + cfg.n_real == 0) throw ConfigError("dataset must contain at least one sample");
    Dataset ds;
    ds.config = cfg;
    const std::size_t total = cfg.n_sim + cfg.n_real;
    const auto params = sample_parameters(cfg.ranges, total, cfg.seed);
    ds.samples.reserve(total);
    for (std::size_t i = 0; i < total; ++i) ds.samples.push_back(render_sample(model, params[i], i >= cfg.n_sim, cfg, i));
    return ds;
}

inline Dataset build_dataset(const DatasetConfig& cfg) { return build_dataset(make_phantom(cfg.phantom), cfg); }

/// Held-out evaluation split over the paired samples, fixed by seed.
struct Split {
    std::vector<std::size_t> train_paired;
    std::vector<std::size_t> test_paired;
};

inline Split split_paired(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must be in [0,1)");
    auto paired = ds.paired_indices();
    Rng rng = make_rng(seed, streams::split);
    // Fisher-Yates with our own uniform draw so the permutation is portable.
    for (std::size_t i = paired.size(); i > 1; --i) std::swap(paired[i - 1], paired[rng() % i]);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(paired.size())));
    Split split;
    split.test_paired.assign(paired.begin(), paired.begin() + static_cast<std::ptrdiff_t>(n_test));
    split.train_paired.assign(paired.begin() + static_cast<std::ptrdiff_t>(n_test), paired.end());
    std::sort(split.test_paired.begin(), split.test_paired.end());
    std::sort(split.train_paired.begin(), split.train_paired.end());
    return split;
}

/// Mean fraction of image pixels covered by the organ silhouette.
inline double mean_coverage(const ShapeModel& model, const std::vector<ParamVector>& params, const Intrinsics& k) {
    double acc = 0.0;
    for (const auto& p : params) {
        const Image mask = rasterize_mask(deform(model, p.weight), p.camera(), k);
        acc += static_cast<double>(mask.count_nonzero()) / static_cast<double>(mask.size());
    }
    return params.empty() ? 0.0 : acc / static_cast<double>(params.size());
}

// ---- manifest --------------------------------------------------------------

namespace detail {

template <typename T>
std::string join_array(const T& a) {
    return text::join_doubles(a.data(), static_cast<std::size_t>(a.size()));
}

inline Vec3 parse_vec3(const std::string& s) {
    const auto v = text::parse_doubles(s);
    if (v.size() != 3) throw FormatError("expected 3 comma-separated values: " + s);
    return {v[0], v[1], v[2]};
}

inline const std::string& require(const text::KeyValues& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("manifest is missing key '" + key + "'");
    return it->second;
}

}  // namespace detail

inline void write_phantom_keys(text::KeyValues& kv, const PhantomConfig& p, const std::string& prefix = "phantom.") {
    kv[prefix + "rings"] = std::to_string(p.rings);
    kv[prefix + "segments"] = std::to_string(p.segments);
    kv[prefix + "radii"] = detail::join_array(p.radii);
    kv[prefix + "collapse_scale"] = text::format_double(p.collapse_scale);
    kv[prefix + "irregularity"] = text::format_double(p.irregularity);
    kv[prefix + "collapse_axis"] = std::to_string(p.collapse_axis);
    kv[prefix + "mean_shift"] = text::format_double(p.mean_shift);
    kv[prefix + "seed"] = std::to_string(p.seed);
}

inline PhantomConfig read_phantom_keys(const text::KeyValues& kv, const std::string& prefix = "phantom.") {
    using detail::require;
    PhantomConfig p;
    p.rings = text::parse_int<int>(require(kv, prefix + "rings"));
    p.segments = text::parse_int<int>(require(kv, prefix + "segments"));
    p.radii = detail::parse_vec3(require(kv, prefix + "radii"));
    p.collapse_scale = text::parse_double(require(kv, prefix + "collapse_scale"));
    p.irregularity = text::parse_double(require(kv, prefix + "irregularity"));
    p.collapse_axis = text::parse_int<int>(require(kv, prefix + "collapse_axis"));
    p.mean_shift = text::parse_double(require(kv, prefix + "mean_shift"));
    p.seed = text::parse_int<std::uint64_t>(require(kv, prefix + "seed"));
    return p;
}

inline text::KeyValues manifest_keys(const DatasetConfig& cfg) {
    text::KeyValues kv;
    kv["format_version"] = std::to_string(kDatasetFormatVersion);
    kv["seed"] = std::to_string(cfg.seed);
    kv["n_sim"] = std::to_string(cfg.n_sim);
    kv["n_real"] = std::to_string(cfg.n_real);
    kv["ranges.center"] = format_params(cfg.ranges.center);
    kv["ranges.half_widths"] = detail::join_array(cfg.ranges.half_widths);
    write_phantom_keys(kv, cfg.phantom);
    kv["perturb.shading_strength"] = text::format_double(cfg.perturb.shading_strength);
    kv["perturb.noise_sigma"] = text::format_double(cfg.perturb.noise_sigma);
    kv["perturb.background_gradient"] = text::format_double(cfg.perturb.background_gradient);
    kv["perturb.blur_radius"] = std::to_string(cfg.perturb.blur_radius);
    kv["perturb.occluder_fraction"] = text::format_double(cfg.perturb.occluder_fraction);
    kv["intrinsics.vertical_fov"] = text::format_double(cfg.intrinsics.vertical_fov);
    kv["intrinsics.width"] = std::to_string(cfg.intrinsics.width);
    kv["intrinsics.height"] = std::to_string(cfg.intrinsics.height);
    kv["intrinsics.near"] = text::format_double(cfg.intrinsics.near);
    kv["intrinsics.far"] = text::format_double(cfg.intrinsics.far);
    return kv;
}

inline DatasetConfig parse_manifest(const text::KeyValues& kv) {
    using detail::require;
    const int version = text::parse_int<int>(require(kv, "format_version"));
    if (version != kDatasetFormatVersion) throw FormatError("unsupported dataset format version " + std::to_string(version));
    DatasetConfig cfg;
    cfg.seed = text::parse_int<std::uint64_t>(require(kv, "seed"));
    cfg.n_sim = text::parse_int<std::size_t>(require(kv, "n_sim"));
    cfg.n_real = text::parse_int<std::size_t>(require(kv, "n_real"));
    cfg.ranges.center = parse_params(require(kv, "ranges.center"));
    const auto hw = text::parse_doubles(require(kv, "ranges.half_widths"));
    if (hw.size() != kParamCount) throw FormatError("ranges.half_widths needs 6 values");
    std::copy(hw.begin(), hw.end(), cfg.ranges.half_widths.begin());
    cfg.phantom = read_phantom_keys(kv);
    cfg.perturb.shading_strength = text::parse_double(require(kv, "perturb.shading_strength"));
    cfg.perturb.noise_sigma = text::parse_double(require(kv, "perturb.noise_sigma"));
    cfg.perturb.background_gradient = text::parse_double(require(kv, "perturb.background_gradient"));
    cfg.perturb.blur_radius = text::parse_int<int>(require(kv, "perturb.blur_radius"));
    cfg.perturb.occluder_fraction = text::parse_double(require(kv, "perturb.occluder_fraction"));
    cfg.intrinsics.vertical_fov = text::parse_double(require(kv, "intrinsics.vertical_fov"));
    cfg.intrinsics.width = text::parse_int<int>(require(kv, "intrinsics.width"));
    cfg.intrinsics.height = text::parse_int<int>(require(kv, "intrinsics.height"));
    cfg.intrinsics.near = text::parse_double(require(kv, "intrinsics.near"));
    cfg.intrinsics.far = text::parse_double(require(kv, "intrinsics.far"));
    return cfg;
}

// ---- directory layout --------------------------------------------------------

inline std::string indexed_name(const char* prefix, std::size_t index, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%05zu.%s", prefix, index, ext);
    return buf;
}

/// Writes `manifest`, `params.csv`, `sim_%05d.pgm` and `real_%05d.pgm`.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "manifest");
        if (!out) throw FormatError("cannot write manifest in " + dir.string());
        out << "# vlearn dataset manifest\n";
        text::write_key_values(out, manifest_keys(ds.config));
    }
    std::ofstream csv(dir / "params.csv");
    if (!csv) throw FormatError("cannot write params.csv in " + dir.string());
    csv << "index,cam_x,cam_y,cam_z,focus_x,focus_y,weight,"
           "n_cam_x,n_cam_y,n_cam_z,n_focus_x,n_focus_y,n_weight,paired\n";
    const bool can_normalize =
        std::all_of(ds.config.ranges.half_widths.begin(), ds.config.ranges.half_widths.end(), [](double h) { return h > 0; });
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        const auto p = s.params.to_array();
        ParamArray n{};
        if (can_normalize) n = normalize_params(s.params, ds.config.ranges);
        csv << i << ',' << text::join_doubles(p.data(), p.size()) << ',' << text::join_doubles(n.data(), n.size()) << ','
            << (s.pseudo_real ? 1 : 0) << '\n';
        save_pgm(dir / indexed_name("sim", i, "pgm"), s.simulated);
        if (s.pseudo_real) save_pgm(dir / indexed_name("real", i, "pgm"), *s.pseudo_real);
    }
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset ds;
    {
        std::ifstream in(dir / "manifest");
        if (!in) throw FormatError("no manifest in " + dir.string());
        ds.config = parse_manifest(text::read_key_values(in));
    }
    std::ifstream csv(dir / "params.csv");
    if (!csv) throw FormatError("no params.csv in " + dir.string());
    std::string line;
    std::getline(csv, line);  // header
    while (std::getline(csv, line)) {
        if (text::trim(line).empty()) continue;
        const auto fields = text::split(line, ',');
        if (fields.size() != 14) throw FormatError("params.csv: expected 14 columns");
        const auto index = text::parse_int<std::size_t>(fields[0]);
        if (index != ds.samples.size()) throw FormatError("params.csv: indices must be consecutive");
        ParamArray p{};
        for (std::size_t d = 0; d < kParamCount; ++d) p[d] = text::parse_double(fields[1 + d]);
        Sample s;
        s.params = ParamVector::from_array(p);
        s.simulated = load_pgm(dir / indexed_name("sim", index, "pgm"));
        if (text::parse_int<int>(fields[13]) == 1) s.pseudo_real = load_pgm(dir / indexed_name("real", index, "pgm"));
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.size() != ds.config.n_sim + ds.config.n_real)
        throw FormatError("params.csv row count does not match the manifest");
    return ds;
}

}  // namespace vlearn
