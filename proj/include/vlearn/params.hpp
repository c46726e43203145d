#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vlearn/camera.hpp"
#include "vlearn/error.hpp"
#include "vlearn/rng.hpp"
#include "vlearn/text.hpp"

namespace vlearn {

inline constexpr std::size_t kParamCount = 6;
using ParamArray = std::array<double, kParamCount>;

/// Regression target: camera position (3), focus point (2), collapse weight.
struct ParamVector {
    Vec3 cam_pos = Vec3(0.0, 0.0, 150.0);
    Vec2 focus = Vec2::Zero();
    double weight = 1.0;

    CameraParams camera() const { return {cam_pos, focus}; }

    ParamArray to_array() const { return {cam_pos.x(), cam_pos.y(), cam_pos.z(), focus.x(), focus.y(), weight}; }

    static ParamVector from_array(std::span<const double> a) {
        if (a.size() != kParamCount) throw ShapeError("parameter vector needs 6 values");
        ParamVector p;
        p.cam_pos = Vec3(a[0], a[1], a[2]);
        p.focus = Vec2(a[3], a[4]);
        p.weight = a[5];
        return p;
    }

    bool is_finite() const { return cam_pos.allFinite() && focus.allFinite() && std::isfinite(weight); }

    bool operator==(const ParamVector&) const = default;
};

/// Box [center - half_widths, center + half_widths] per dimension.
struct ParamRanges {
    ParamVector center;
    ParamArray half_widths{};

    void validate() const {
        if (!center.is_finite()) throw ConfigError("range centre must be finite");
        for (double h : half_widths)
            if (!(h >= 0.0) || !std::isfinite(h)) throw ConfigError("half widths must be finite and >= 0");
    }

    bool contains(const ParamVector& p, double slack = 1e-12) const {
        const auto c = center.to_array();
        const auto v = p.to_array();
        for (std::size_t d = 0; d < kParamCount; ++d)
            if (std::abs(v[d] - c[d]) > half_widths[d] + slack) return false;
        return true;
    }

    /// Right-lung preset: depth (z) +-15 mm, lateral +-25 mm, focus +-15 mm, weight 1 +- 0.3.
    static ParamRanges right_lung() {
        ParamRanges r;
        r.center = ParamVector{};
        r.half_widths = {25.0, 25.0, 15.0, 15.0, 15.0, 0.3};
        return r;
    }

    /// Left-lung preset: +-10 mm on every camera dimension.
    static ParamRanges left_lung() {
        ParamRanges r;
        r.center = ParamVector{};
        r.half_widths = {10.0, 10.0, 10.0, 10.0, 10.0, 0.3};
        return r;
    }

    bool operator==(const ParamRanges&) const = default;
};

inline ParamArray normalize_params(const ParamVector& p, const ParamRanges& r) {
    const auto c = r.center.to_array();
    const auto v = p.to_array();
    ParamArray out{};
    for (std::size_t d = 0; d < kParamCount; ++d) {
        if (!(r.half_widths[d] > 0.0)) throw ConfigError("cannot normalize with a zero half width");
        out[d] = (v[d] - c[d]) / r.half_widths[d];
    }
    return out;
}

inline ParamVector denormalize_params(std::span<const double> n, const ParamRanges& r) {
    if (n.size() != kParamCount) throw ShapeError("normalized parameter vector needs 6 values");
    const auto c = r.center.to_array();
    ParamArray v{};
    for (std::size_t d = 0; d < kParamCount; ++d) v[d] = c[d] + n[d] * r.half_widths[d];
    return ParamVector::from_array(v);
}

/// The i-th draw depends only on (seed, i).
inline ParamVector sample_parameter(const ParamRanges& r, std::uint64_t seed, std::uint64_t index) {
    Rng rng = make_rng(seed, streams::params, index);
    const auto c = r.center.to_array();
    ParamArray v{};
    for (std::size_t d = 0; d < kParamCount; ++d) v[d] = c[d] + r.half_widths[d] * uniform(rng, -1.0, 1.0);
    return ParamVector::from_array(v);
}

inline std::vector<ParamVector> sample_parameters(const ParamRanges& r, std::size_t n, std::uint64_t seed) {
    r.validate();
    if (n == 0) throw ConfigError("sample count must be positive");
    std::vector<ParamVector> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample_parameter(r, seed, i));
    return out;
}

inline std::string format_params(const ParamVector& p) {
    const auto a = p.to_array();
    return text::join_doubles(a.data(), a.size());
}

inline ParamVector parse_params(std::string_view s) {
    const auto values = text::parse_doubles(s);
    if (values.size() != kParamCount) throw FormatError("expected 6 comma-separated parameters");
    return ParamVector::from_array(values);
}

}  // namespace vlearn
