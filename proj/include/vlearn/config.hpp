#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "vlearn/dataset.hpp"
#include "vlearn/error.hpp"
#include "vlearn/eval.hpp"
#include "vlearn/text.hpp"

namespace vlearn {

/// Everything a CLI run needs: the pipeline settings plus the single-run seed and
/// output directory. Stored as flat `key = value` text.
struct RunConfig {
    PipelineConfig pipeline;
    std::uint64_t seed = 1;
    std::string ranges_preset = "right";
    std::filesystem::path output_dir = "out";
};

namespace detail {

struct ConfigKey {
    const char* name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

inline std::string join_sizes(const std::vector<std::uint64_t>& v) {
    std::string s;
    for (auto x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
    return s;
}

inline std::vector<std::uint64_t> parse_sizes(const std::string& s) {
    std::vector<std::uint64_t> out;
    for (auto f : text::split(s, ',')) out.push_back(text::parse_int<std::uint64_t>(f));
    return out;
}

inline ParamRanges ranges_preset(const std::string& name) {
    if (name == "right") return ParamRanges::right_lung();
    if (name == "left") return ParamRanges::left_lung();
    throw ConfigError("unknown ranges preset '" + name + "' (expected right or left)");
}

// Every accepted key, in the order `config_values` reports them.
inline const std::vector<ConfigKey>& config_keys() {
    using text::format_double;
    using text::parse_double;
    auto sz = [](std::size_t v) { return std::to_string(v); };
    auto psz = [](const std::string& v) { return text::parse_int<std::size_t>(v); };
    static const std::vector<ConfigKey> keys = {
        {"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
         [](RunConfig& c, const std::string& v) { c.seed = text::parse_int<std::uint64_t>(v); }},
        {"seeds", [](const RunConfig& c) { return join_sizes(c.pipeline.seeds); },
         [](RunConfig& c, const std::string& v) { c.pipeline.seeds = parse_sizes(v); }},
        {"threads", [sz](const RunConfig& c) { return sz(c.pipeline.threads); },
         [psz](RunConfig& c, const std::string& v) { c.pipeline.threads = psz(v); }},
        {"output_dir", [](const RunConfig& c) { return c.output_dir.string(); },
         [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
        {"test_fraction", [](const RunConfig& c) { return format_double(c.pipeline.test_fraction); },
         [](RunConfig& c, const std::string& v) { c.pipeline.test_fraction = parse_double(v); }},
        // dataset
        {"n_sim", [sz](const RunConfig& c) { return sz(c.pipeline.dataset.n_sim); },
         [psz](RunConfig& c, const std::string& v) { c.pipeline.dataset.n_sim = psz(v); }},
        {"n_real", [sz](const RunConfig& c) { return sz(c.pipeline.dataset.n_real); },
         [psz](RunConfig& c, const std::string& v) { c.pipeline.dataset.n_real = psz(v); }},
        {"ranges.preset", [](const RunConfig& c) { return c.ranges_preset; },
         [](RunConfig& c, const std::string& v) {
             c.pipeline.dataset.ranges = ranges_preset(v);
             c.ranges_preset = v;
         }},
        {"ranges.center", [](const RunConfig& c) { return format_params(c.pipeline.dataset.ranges.center); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.ranges.center = parse_params(v); }},
        {"ranges.half_widths", [](const RunConfig& c) { return join_array(c.pipeline.dataset.ranges.half_widths); },
         [](RunConfig& c, const std::string& v) {
             const auto hw = text::parse_doubles(v);
             if (hw.size() != kParamCount) throw ConfigError("ranges.half_widths needs 6 values");
             std::copy(hw.begin(), hw.end(), c.pipeline.dataset.ranges.half_widths.begin());
         }},
        {"phantom.rings", [](const RunConfig& c) { return std::to_string(c.pipeline.dataset.phantom.rings); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.phantom.rings = text::parse_int<int>(v); }},
        {"phantom.segments", [](const RunConfig& c) { return std::to_string(c.pipeline.dataset.phantom.segments); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.phantom.segments = text::parse_int<int>(v); }},
        {"phantom.radii", [](const RunConfig& c) { return join_array(c.pipeline.dataset.phantom.radii); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.phantom.radii = parse_vec3(v); }},
        {"phantom.collapse_scale", [](const RunConfig& c) { return format_double(c.pipeline.dataset.phantom.collapse_scale); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.phantom.collapse_scale = parse_double(v); }},
        {"phantom.irregularity", [](const RunConfig& c) { return format_double(c.pipeline.dataset.phantom.irregularity); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.phantom.irregularity = parse_double(v); }},
        {"phantom.collapse_axis", [](const RunConfig& c) { return std::to_string(c.pipeline.dataset.phantom.collapse_axis); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.phantom.collapse_axis = text::parse_int<int>(v); }},
        {"phantom.mean_shift", [](const RunConfig& c) { return format_double(c.pipeline.dataset.phantom.mean_shift); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.phantom.mean_shift = parse_double(v); }},
        {"phantom.seed", [](const RunConfig& c) { return std::to_string(c.pipeline.dataset.phantom.seed); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.phantom.seed = text::parse_int<std::uint64_t>(v); }},
        {"perturb.shading_strength",
         [](const RunConfig& c) { return format_double(c.pipeline.dataset.perturb.shading_strength); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.perturb.shading_strength = parse_double(v); }},
        {"perturb.noise_sigma", [](const RunConfig& c) { return format_double(c.pipeline.dataset.perturb.noise_sigma); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.perturb.noise_sigma = parse_double(v); }},
        {"perturb.background_gradient",
         [](const RunConfig& c) { return format_double(c.pipeline.dataset.perturb.background_gradient); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.perturb.background_gradient = parse_double(v); }},
        {"perturb.blur_radius", [](const RunConfig& c) { return std::to_string(c.pipeline.dataset.perturb.blur_radius); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.perturb.blur_radius = text::parse_int<int>(v); }},
        {"perturb.occluder_fraction",
         [](const RunConfig& c) { return format_double(c.pipeline.dataset.perturb.occluder_fraction); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.perturb.occluder_fraction = parse_double(v); }},
        {"intrinsics.vertical_fov",
         [](const RunConfig& c) { return format_double(c.pipeline.dataset.intrinsics.vertical_fov); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.intrinsics.vertical_fov = parse_double(v); }},
        {"intrinsics.near", [](const RunConfig& c) { return format_double(c.pipeline.dataset.intrinsics.near); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.intrinsics.near = parse_double(v); }},
        {"intrinsics.far", [](const RunConfig& c) { return format_double(c.pipeline.dataset.intrinsics.far); },
         [](RunConfig& c, const std::string& v) { c.pipeline.dataset.intrinsics.far = parse_double(v); }},
        // translator
        {"translator.epochs", [sz](const RunConfig& c) { return sz(c.pipeline.translator.epochs); },
         [psz](RunConfig& c, const std::string& v) { c.pipeline.translator.epochs = psz(v); }},
        {"translator.batch", [sz](const RunConfig& c) { return sz(c.pipeline.translator.batch); },
         [psz](RunConfig& c, const std::string& v) { c.pipeline.translator.batch = psz(v); }},
        {"translator.lr", [](const RunConfig& c) { return format_double(c.pipeline.translator.lr); },
         [](RunConfig& c, const std::string& v) { c.pipeline.translator.lr = parse_double(v); }},
        {"translator.lambda_kl", [](const RunConfig& c) { return format_double(c.pipeline.translator.lambda_kl); },
         [](RunConfig& c, const std::string& v) { c.pipeline.translator.lambda_kl = parse_double(v); }},
        {"translator.reduction", [](const RunConfig& c) { return std::string(reduction_name(c.pipeline.translator.reduction)); },
         [](RunConfig& c, const std::string& v) { c.pipeline.translator.reduction = parse_reduction(v); }},
        {"translator.real_repeat", [sz](const RunConfig& c) { return sz(c.pipeline.translator.real_repeat); },
         [psz](RunConfig& c, const std::string& v) { c.pipeline.translator.real_repeat = psz(v); }},
        {"translator.hidden1", [sz](const RunConfig& c) { return sz(c.pipeline.translator.arch.hidden1); },
         [psz](RunConfig& c, const std::string& v) { c.pipeline.translator.arch.hidden1 = psz(v); }},
        {"translator.hidden2", [sz](const RunConfig& c) { return sz(c.pipeline.translator.arch.hidden2); },
         [psz](RunConfig& c, const std::string& v) { c.pipeline.translator.arch.hidden2 = psz(v); }},
        {"translator.latent", [sz](const RunConfig& c) { return sz(c.pipeline.translator.arch.latent); },
         [psz](RunConfig& c, const std::string& v) { c.pipeline.translator.arch.latent = psz(v); }},
        // regressor
        {"regressor.epochs", [sz](const RunConfig& c) { return sz(c.pipeline.regressor.epochs); },
         [psz](RunConfig& c, const std::string& v) { c.pipeline.regressor.epochs = psz(v); }},
        {"regressor.batch", [sz](const RunConfig& c) { return sz(c.pipeline.regressor.batch); },
         [psz](RunConfig& c, const std::string& v) { c.pipeline.regressor.batch = psz(v); }},
        {"regressor.lr", [](const RunConfig& c) { return format_double(c.pipeline.regressor.lr); },
         [](RunConfig& c, const std::string& v) { c.pipeline.regressor.lr = parse_double(v); }},
        {"regressor.lambda_p", [](const RunConfig& c) { return format_double(c.pipeline.regressor.lambda_p); },
         [](RunConfig& c, const std::string& v) { c.pipeline.regressor.lambda_p = parse_double(v); }},
        {"regressor.dropout", [](const RunConfig& c) { return format_double(c.pipeline.regressor.arch.dropout); },
         [](RunConfig& c, const std::string& v) { c.pipeline.regressor.arch.dropout = parse_double(v); }},
        {"regressor.hidden", [sz](const RunConfig& c) { return sz(c.pipeline.regressor.arch.hidden); },
         [psz](RunConfig& c, const std::string& v) { c.pipeline.regressor.arch.hidden = psz(v); }},
        {"regressor.channels",
         [](const RunConfig& c) {
             const auto& ch = c.pipeline.regressor.arch.channels;
             return join_sizes({ch.begin(), ch.end()});
         },
         [](RunConfig& c, const std::string& v) {
             const auto ch = parse_sizes(v);
             if (ch.size() != 4) throw ConfigError("regressor.channels needs 4 values");
             std::copy(ch.begin(), ch.end(), c.pipeline.regressor.arch.channels.begin());
         }},
        {"regressor.fd_jacobian",
         [](const RunConfig& c) { return std::string(c.pipeline.regressor.finite_difference_jacobian ? "1" : "0"); },
         [](RunConfig& c, const std::string& v) {
             if (v != "0" && v != "1") throw ConfigError("regressor.fd_jacobian must be 0 or 1");
             c.pipeline.regressor.finite_difference_jacobian = v == "1";
         }},
    };
    return keys;
}

}  // namespace detail

/// Applies one `key = value` pair; unknown keys and malformed values are errors.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& k : detail::config_keys())
        if (key == k.name) {
            try {
                k.set(cfg, value);
            } catch (const Error& e) {
                throw ConfigError("config key '" + key + "': " + e.what());
            }
            return;
        }
    throw ConfigError("unknown config key '" + key + "'");
}

inline text::KeyValues config_values(const RunConfig& cfg) {
    text::KeyValues kv;
    for (const auto& k : detail::config_keys()) kv[k.name] = k.get(cfg);
    return kv;
}

inline std::vector<std::string> config_key_names() {
    std::vector<std::string> names;
    for (const auto& k : detail::config_keys()) names.emplace_back(k.name);
    return names;
}

/// Checks the cross-field constraints the individual setters cannot see.
inline void validate(const RunConfig& cfg) {
    const auto& p = cfg.pipeline;
    p.dataset.phantom.validate();
    p.dataset.ranges.validate();
    p.dataset.perturb.validate();
    p.dataset.intrinsics.validate();
    if (p.dataset.intrinsics.width != 180 || p.dataset.intrinsics.height != 120)
        throw ConfigError("images are fixed at 180x120");
    if (p.seeds.empty()) throw ConfigError("seeds must list at least one seed");
    if (!(p.test_fraction > 0.0 && p.test_fraction < 1.0)) throw ConfigError("test_fraction must be in (0,1)");
    if (p.translator.batch == 0 || p.regressor.batch == 0) throw ConfigError("batch sizes must be positive");
    if (!(p.regressor.arch.dropout >= 0.0 && p.regressor.arch.dropout < 1.0))
        throw ConfigError("regressor.dropout must be in [0,1)");
    if (p.threads == 0) throw ConfigError("threads must be positive");
}

inline RunConfig parse_run_config(const text::KeyValues& kv, RunConfig base = {}) {
    // the preset must land before explicit center/half_widths overrides
    if (auto it = kv.find("ranges.preset"); it != kv.end()) set_config_value(base, it->first, it->second);
    for (const auto& [k, v] : kv)
        if (k != "ranges.preset") set_config_value(base, k, v);
    return base;
}

inline RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    try {
        return parse_run_config(text::read_key_values(in), std::move(base));
    } catch (const FormatError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline void write_run_config(std::ostream& out, const RunConfig& cfg) { text::write_key_values(out, config_values(cfg)); }

}  // namespace vlearn
