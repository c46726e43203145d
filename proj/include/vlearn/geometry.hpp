#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "vlearn/error.hpp"
#include "vlearn/rng.hpp"
#include "vlearn/text.hpp"

namespace vlearn {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Triangle = std::array<std::uint32_t, 3>;

/// Triangle mesh; vertices in millimetres.
struct SurfaceMesh {
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;

    void validate() const {
        if (vertices.empty()) throw ConfigError("mesh has no vertices");
        const auto n = vertices.size();
        for (std::size_t t = 0; t < triangles.size(); ++t) {
            const auto& tri = triangles[t];
            for (auto idx : tri)
                if (idx >= n) throw ConfigError("triangle " + std::to_string(t) + " references missing vertex");
            if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
                throw ConfigError("triangle " + std::to_string(t) + " repeats a vertex");
        }
    }

    Vec3 centroid() const {
        Vec3 c = Vec3::Zero();
        for (const auto& v : vertices) c += v;
        return c / static_cast<double>(vertices.size());
    }

    bool operator==(const SurfaceMesh&) const = default;
};

/// Every undirected edge is shared by exactly two triangles.
inline bool is_watertight(const SurfaceMesh& mesh) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> edges;
    for (const auto& tri : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            auto a = tri[e], b = tri[(e + 1) % 3];
            if (a > b) std::swap(a, b);
            ++edges[{a, b}];
        }
    for (const auto& [edge, count] : edges)
        if (count != 2) return false;
    return !edges.empty();
}

/// Base (aerated) mesh plus the collapse displacement model
/// v'_i = v_i + mean_disp + weight * disp_field[i].
struct ShapeModel {
    SurfaceMesh base;
    Vec3 mean_disp = Vec3::Zero();
    std::vector<Vec3> disp_field;

    void validate() const {
        base.validate();
        if (disp_field.size() != base.vertices.size())
            throw ConfigError("displacement field length differs from vertex count");
    }

    bool operator==(const ShapeModel&) const = default;
};

inline Vec3 deform_vertex(const ShapeModel& model, std::size_t i, double weight) {
    return model.base.vertices[i] + model.mean_disp + weight * model.disp_field[i];
}

inline SurfaceMesh deform(const ShapeModel& model, double weight) {
    SurfaceMesh out;
    out.triangles = model.base.triangles;
    out.vertices.reserve(model.base.vertices.size());
    for (std::size_t i = 0; i < model.base.vertices.size(); ++i) out.vertices.push_back(deform_vertex(model, i, weight));
    return out;
}

/// Procedural organ phantom: a UV-sphere ellipsoid with optional smooth bumps
/// and a directional shrink field standing in for a learned collapse mode.
struct PhantomConfig {
    int rings = 21;
    int segments = 20;
    Vec3 radii{55.0, 45.0, 38.0};
    double collapse_scale = 0.2;
    /// Relative amplitude of the seeded bumps; 0 gives an exact ellipsoid.
    double irregularity = 0.12;
    /// Axis (0=x, 1=y, 2=z) along which the shrink field is doubled and the mean displacement points.
    int collapse_axis = 1;
    double mean_shift = 5.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (rings < 3) throw ConfigError("phantom rings must be >= 3");
        if (segments < 3) throw ConfigError("phantom segments must be >= 3");
        if (!(radii.minCoeff() > 0.0)) throw ConfigError("phantom radii must be positive");
        if (!(collapse_scale > 0.0 && collapse_scale < 1.0)) throw ConfigError("collapse_scale must be in (0,1)");
        if (!(irregularity >= 0.0 && irregularity < 0.5)) throw ConfigError("irregularity must be in [0,0.5)");
        if (collapse_axis < 0 || collapse_axis > 2) throw ConfigError("collapse_axis must be 0, 1 or 2");
    }

    bool operator==(const PhantomConfig&) const = default;
};

inline ShapeModel make_phantom(const PhantomConfig& cfg) {
    cfg.validate();

    // Seeded bumps: a few Gaussian lobes on the unit sphere.
    struct Lobe {
        Vec3 centre;
        double amplitude;
        double width;
    };
    std::vector<Lobe> lobes;
    Rng rng = make_rng(cfg.seed, streams::phantom);
    for (int j = 0; j < 5; ++j) {
        Vec3 c(standard_normal(rng), standard_normal(rng), standard_normal(rng));
        c.normalize();
        lobes.push_back({c, uniform(rng, -1.0, 1.0), uniform(rng, 0.5, 0.9)});
    }
    auto bump = [&](const Vec3& dir) {
        double f = 0.0;
        for (const auto& l : lobes) f += l.amplitude * std::exp(-(1.0 - dir.dot(l.centre)) / (l.width * l.width));
        return f;
    };

    ShapeModel model;
    auto& verts = model.base.vertices;
    auto& tris = model.base.triangles;
    const int s = cfg.segments;
    const int r = cfg.rings;
    const double pi = std::acos(-1.0);

    auto add_vertex = [&](const Vec3& dir) {
        const double scale = 1.0 + cfg.irregularity * bump(dir);
        verts.push_back(cfg.radii.cwiseProduct(dir) * scale);
    };
    add_vertex(Vec3(0.0, 1.0, 0.0));
    for (int i = 1; i < r; ++i) {
        const double polar = pi * i / r;
        for (int j = 0; j < s; ++j) {
            const double azimuth = 2.0 * pi * j / s;
            add_vertex(Vec3(std::sin(polar) * std::cos(azimuth), std::cos(polar), std::sin(polar) * std::sin(azimuth)));
        }
    }
    add_vertex(Vec3(0.0, -1.0, 0.0));

    const auto north = 0u;
    const auto south = static_cast<std::uint32_t>(verts.size() - 1);
    auto ring_vertex = [&](int ring, int seg) { return static_cast<std::uint32_t>(1 + (ring - 1) * s + (seg % s)); };
    // Outward-facing winding (counter-clockwise seen from outside).
    for (int j = 0; j < s; ++j) tris.push_back({north, ring_vertex(1, j + 1), ring_vertex(1, j)});
    for (int i = 1; i < r - 1; ++i)
        for (int j = 0; j < s; ++j) {
            const auto a = ring_vertex(i, j), b = ring_vertex(i, j + 1);
            const auto c = ring_vertex(i + 1, j), d = ring_vertex(i + 1, j + 1);
            tris.push_back({a, b, d});
            tris.push_back({a, d, c});
        }
    for (int j = 0; j < s; ++j) tris.push_back({south, ring_vertex(r - 1, j), ring_vertex(r - 1, j + 1)});

    const Vec3 centre = model.base.centroid();
    Vec3 axis_scale = Vec3::Ones();
    axis_scale[cfg.collapse_axis] = 2.0;
    model.disp_field.reserve(verts.size());
    for (const auto& v : verts) model.disp_field.push_back(-cfg.collapse_scale * axis_scale.cwiseProduct(v - centre));
    model.mean_disp = Vec3::Zero();
    model.mean_disp[cfg.collapse_axis] = -cfg.mean_shift;
    return model;
}

// ---- text I/O ----------------------------------------------------------------

namespace detail {

inline void write_vec(std::ostream& out, const char* tag, const Vec3& v) {
    out << tag << ' ' << text::format_double(v.x()) << ' ' << text::format_double(v.y()) << ' '
        << text::format_double(v.z()) << '\n';
}

inline Vec3 read_vec(std::istringstream& in, int lineno) {
    std::string a, b, c;
    if (!(in >> a >> b >> c)) throw FormatError("line " + std::to_string(lineno) + ": expected three numbers");
    return {text::parse_double(a), text::parse_double(b), text::parse_double(c)};
}

}  // namespace detail

inline void write_mesh(std::ostream& out, const SurfaceMesh& mesh) {
    for (const auto& v : mesh.vertices) detail::write_vec(out, "v", v);
    for (const auto& t : mesh.triangles) out << "f " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

/// Mesh file plus `mu x y z` and one `u x y z` line per vertex.
inline void write_shape_model(std::ostream& out, const ShapeModel& model) {
    write_mesh(out, model.base);
    detail::write_vec(out, "mu", model.mean_disp);
    for (const auto& u : model.disp_field) detail::write_vec(out, "u", u);
}

inline ShapeModel read_shape_model(std::istream& in) {
    ShapeModel model;
    bool have_mu = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            model.base.vertices.push_back(detail::read_vec(ls, lineno));
        } else if (tag == "f") {
            std::string a, b, c;
            if (!(ls >> a >> b >> c)) throw FormatError("line " + std::to_string(lineno) + ": expected three indices");
            model.base.triangles.push_back(
                {text::parse_int<std::uint32_t>(a), text::parse_int<std::uint32_t>(b), text::parse_int<std::uint32_t>(c)});
        } else if (tag == "mu") {
            if (have_mu) throw FormatError("line " + std::to_string(lineno) + ": duplicate mu");
            model.mean_disp = detail::read_vec(ls, lineno);
            have_mu = true;
        } else if (tag == "u") {
            model.disp_field.push_back(detail::read_vec(ls, lineno));
        } else {
            throw FormatError("line " + std::to_string(lineno) + ": unknown record '" + tag + "'");
        }
    }
    if (!have_mu && model.disp_field.empty()) model.disp_field.assign(model.base.vertices.size(), Vec3::Zero());
    try {
        model.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid shape model: ") + e.what());
    }
    return model;
}

inline SurfaceMesh read_mesh(std::istream& in) { return read_shape_model(in).base; }

}  // namespace vlearn
