#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "vlearn/camera.hpp"
#include "vlearn/error.hpp"
#include "vlearn/geometry.hpp"
#include "vlearn/image.hpp"
#include "vlearn/rng.hpp"

namespace vlearn {

namespace detail {

inline double edge_function(double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

// With positive (clockwise on screen) orientation the interior lies right of
// every edge; top edges run in +x, left edges run in -y.
inline bool is_top_left(double ax, double ay, double bx, double by) {
    const double dx = bx - ax;
    const double dy = by - ay;
    return (dy == 0.0 && dx > 0.0) || dy < 0.0;
}

/// Calls fn(x, y, l0, l1, l2) for every pixel whose centre is covered under the
/// top-left fill rule; (l0, l1, l2) are screen-space barycentrics of a, b, c.
template <typename Fn>
void for_each_covered_pixel(PixelPoint a, PixelPoint b, PixelPoint c, int width, int height, Fn&& fn) {
    double area = edge_function(a.x, a.y, b.x, b.y, c.x, c.y);
    if (area == 0.0 || !std::isfinite(area)) return;
    bool swapped = false;
    if (area < 0.0) {
        std::swap(b, c);
        area = -area;
        swapped = true;
    }
    const double min_x = std::min({a.x, b.x, c.x}), max_x = std::max({a.x, b.x, c.x});
    const double min_y = std::min({a.y, b.y, c.y}), max_y = std::max({a.y, b.y, c.y});
    const int x0 = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(max_x - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(max_y - 0.5)));
    if (x0 > x1 || y0 > y1) return;

    const bool tl_bc = is_top_left(b.x, b.y, c.x, c.y);
    const bool tl_ca = is_top_left(c.x, c.y, a.x, a.y);
    const bool tl_ab = is_top_left(a.x, a.y, b.x, b.y);
    auto inside = [](double w, bool top_left) { return w > 0.0 || (w == 0.0 && top_left); };

    for (int y = y0; y <= y1; ++y) {
        const double py = y + 0.5;
        for (int x = x0; x <= x1; ++x) {
            const double px = x + 0.5;
            const double w0 = edge_function(b.x, b.y, c.x, c.y, px, py);
            const double w1 = edge_function(c.x, c.y, a.x, a.y, px, py);
            const double w2 = edge_function(a.x, a.y, b.x, b.y, px, py);
            if (inside(w0, tl_bc) && inside(w1, tl_ca) && inside(w2, tl_ab)) {
                const double l0 = w0 / area, l1 = w1 / area, l2 = w2 / area;
                if (swapped)
                    fn(x, y, l0, l2, l1);
                else
                    fn(x, y, l0, l1, l2);
            }
        }
    }
}

}  // namespace detail

/// Coverage mask plus nearest camera depth per covered pixel (+inf elsewhere).
struct DepthRender {
    Image mask;
    std::vector<double> depth;
};

inline DepthRender rasterize_depth(const SurfaceMesh& mesh, const CameraParams& cam, const Intrinsics& k) {
    k.validate();
    DepthRender out{Image(k.width, k.height), std::vector<double>(static_cast<std::size_t>(k.width) * k.height,
                                                                   std::numeric_limits<double>::infinity())};
    if (mesh.vertices.empty()) return out;
    const auto pts = project_to_pixels(mesh.vertices, projection_matrix(cam, k), k);
    for (const auto& tri : mesh.triangles) {
        const auto& a = pts[tri[0]];
        const auto& b = pts[tri[1]];
        const auto& c = pts[tri[2]];
        // simple near-plane rejection
        if (!a.valid || !b.valid || !c.valid) continue;
        if (a.depth < k.near || b.depth < k.near || c.depth < k.near) continue;
        detail::for_each_covered_pixel(a, b, c, k.width, k.height, [&](int x, int y, double l0, double l1, double l2) {
            const auto idx = static_cast<std::size_t>(y) * k.width + x;
            out.mask.pixels[idx] = 1.0;
            const double d = l0 * a.depth + l1 * b.depth + l2 * c.depth;
            if (d < out.depth[idx]) out.depth[idx] = d;
        });
    }
    return out;
}

/// Binary silhouette: 1 where a pixel centre is covered by any triangle in front of the near plane.
inline Image rasterize_mask(const SurfaceMesh& mesh, const CameraParams& cam, const Intrinsics& k) {
    return rasterize_depth(mesh, cam, k).mask;
}

// ---- binary morphology with the 3x3 cross; outside the image counts as background

namespace detail {

inline constexpr int kCross[5][2] = {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}};

inline void require_binary(const Image& img) {
    if (!img.is_binary()) throw ConfigError("morphology requires a binary image");
}

}  // namespace detail

inline Image dilate_cross(const Image& mask) {
    detail::require_binary(mask);
    Image out(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            bool any = false;
            for (const auto& o : detail::kCross) {
                const int xx = x + o[0], yy = y + o[1];
                if (mask.contains(xx, yy) && mask.at(xx, yy) != 0.0) any = true;
            }
            out.at(x, y) = any ? 1.0 : 0.0;
        }
    return out;
}

inline Image erode_cross(const Image& mask) {
    detail::require_binary(mask);
    Image out(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            bool all = true;
            for (const auto& o : detail::kCross) {
                const int xx = x + o[0], yy = y + o[1];
                if (!mask.contains(xx, yy) || mask.at(xx, yy) == 0.0) all = false;
            }
            out.at(x, y) = all ? 1.0 : 0.0;
        }
    return out;
}

/// Morphological gradient (dilation minus erosion): a two-pixel-thick outline.
inline Image contour_extract(const Image& mask) {
    const Image dil = dilate_cross(mask);
    const Image ero = erode_cross(mask);
    Image out(mask.width, mask.height);
    for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] = std::clamp(dil.pixels[i] - ero.pixels[i], 0.0, 1.0);
    return out;
}

/// Simulated-domain image: contour of the rendered silhouette.
inline Image render_simulated(const SurfaceMesh& mesh, const CameraParams& cam, const Intrinsics& k) {
    return contour_extract(rasterize_mask(mesh, cam, k));
}

// ---- pseudo-real rendering ---------------------------------------------------

/// Nuisance model for the pseudo-real domain.
struct PerturbConfig {
    double shading_strength = 0.6;     // [0,1]; depth falloff inside the organ
    double noise_sigma = 0.05;         // [0,0.3]
    double background_gradient = 0.5;  // [0,1]
    int blur_radius = 1;               // px
    double occluder_fraction = 0.15;   // [0,0.5]
    std::uint64_t seed = 0;

    void validate() const {
        if (!(shading_strength >= 0.0 && shading_strength <= 1.0)) throw ConfigError("shading_strength must be in [0,1]");
        if (!(noise_sigma >= 0.0 && noise_sigma <= 0.3)) throw ConfigError("noise_sigma must be in [0,0.3]");
        if (!(background_gradient >= 0.0 && background_gradient <= 1.0))
            throw ConfigError("background_gradient must be in [0,1]");
        if (blur_radius < 0) throw ConfigError("blur_radius must be >= 0");
        if (!(occluder_fraction >= 0.0 && occluder_fraction <= 0.5))
            throw ConfigError("occluder_fraction must be in [0,0.5]");
    }

    bool operator==(const PerturbConfig&) const = default;
};

namespace detail {

inline Image box_blur(const Image& img, int radius) {
    if (radius <= 0) return img;
    auto pass = [&](const Image& src, bool horizontal) {
        Image dst(src.width, src.height);
        for (int y = 0; y < src.height; ++y)
            for (int x = 0; x < src.width; ++x) {
                double acc = 0.0;
                int n = 0;
                for (int d = -radius; d <= radius; ++d) {
                    const int xx = horizontal ? x + d : x;
                    const int yy = horizontal ? y : y + d;
                    if (src.contains(xx, yy)) {
                        acc += src.at(xx, yy);
                        ++n;
                    }
                }
                dst.at(x, y) = acc / n;
            }
        return dst;
    };
    return pass(pass(img, true), false);
}

inline constexpr double kOrganLevel = 0.85;
inline constexpr double kBackgroundLevel = 0.2;
inline constexpr double kOccluderLevel = 0.05;

}  // namespace detail

/// Where the occluder strip lands; rows/cols overwritten along one border.
struct OccluderStrip {
    int side = 0;  // 0 left, 1 right, 2 top, 3 bottom
    int thickness = 0;
};

inline OccluderStrip draw_occluder(const PerturbConfig& p, const Intrinsics& k) {
    Rng rng = make_rng(p.seed, streams::perturb, 2);
    OccluderStrip strip;
    strip.side = static_cast<int>(rng() % 4);
    const int extent = strip.side < 2 ? k.width : k.height;
    strip.thickness = static_cast<int>(std::floor(uniform(rng, 0.5, 1.0) * p.occluder_fraction * extent));
    return strip;
}

/// Shaded silhouette on a graded background, blurred, noised and partly
/// covered by a border strip. Deterministic in `p.seed`.
inline Image render_pseudo_real(const SurfaceMesh& mesh, const CameraParams& cam, const Intrinsics& k,
                                const PerturbConfig& p) {
    p.validate();
    const DepthRender r = rasterize_depth(mesh, cam, k);

    double dmin = std::numeric_limits<double>::infinity(), dmax = -dmin;
    for (std::size_t i = 0; i < r.depth.size(); ++i)
        if (r.mask.pixels[i] != 0.0) {
            dmin = std::min(dmin, r.depth[i]);
            dmax = std::max(dmax, r.depth[i]);
        }
    const double dspan = dmax > dmin ? dmax - dmin : 1.0;

    Rng layout = make_rng(p.seed, streams::perturb, 1);
    const double angle = uniform(layout, 0.0, 2.0 * std::acos(-1.0));
    const double gx = std::cos(angle), gy = std::sin(angle);
    const double half_diag = 0.5 * std::hypot(k.width, k.height);

    Image img(k.width, k.height);
    for (int y = 0; y < k.height; ++y)
        for (int x = 0; x < k.width; ++x) {
            const auto idx = static_cast<std::size_t>(y) * k.width + x;
            if (r.mask.pixels[idx] != 0.0) {
                const double nd = (r.depth[idx] - dmin) / dspan;
                img.pixels[idx] = detail::kOrganLevel * (1.0 - p.shading_strength * nd);
            } else {
                const double t = ((x + 0.5 - 0.5 * k.width) * gx + (y + 0.5 - 0.5 * k.height) * gy) / half_diag;
                img.pixels[idx] = detail::kBackgroundLevel * (1.0 + p.background_gradient * t);
            }
        }

    img = detail::box_blur(img, p.blur_radius);

    if (p.noise_sigma > 0.0) {
        Rng noise = make_rng(p.seed, streams::perturb, 3);
        for (auto& v : img.pixels) v += p.noise_sigma * standard_normal(noise);
    }
    for (auto& v : img.pixels) v = std::clamp(v, 0.0, 1.0);

    const OccluderStrip strip = draw_occluder(p, k);
    for (int y = 0; y < k.height; ++y)
        for (int x = 0; x < k.width; ++x) {
            const bool hit = (strip.side == 0 && x < strip.thickness) ||
                             (strip.side == 1 && x >= k.width - strip.thickness) ||
                             (strip.side == 2 && y < strip.thickness) ||
                             (strip.side == 3 && y >= k.height - strip.thickness);
            if (hit) img.at(x, y) = detail::kOccluderLevel;
        }
    return img;
}

}  // namespace vlearn
