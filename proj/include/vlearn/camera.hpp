#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "vlearn/error.hpp"
#include "vlearn/geometry.hpp"

namespace vlearn {

using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix<double, 4, 4, Eigen::RowMajor>;

/// 5-DOF camera: a position and a focus point on the world plane z = 0.
struct CameraParams {
    Vec3 position = Vec3(0.0, 0.0, 150.0);
    Vec2 focus = Vec2::Zero();

    Vec3 target() const { return {focus.x(), focus.y(), 0.0}; }

    bool operator==(const CameraParams&) const = default;
};

struct Intrinsics {
    double vertical_fov = 60.0;  // degrees
    int width = 180;
    int height = 120;
    double near = 1.0;
    double far = 1000.0;

    void validate() const {
        if (!(vertical_fov > 0.0 && vertical_fov < 180.0)) throw ConfigError("vertical_fov must be in (0,180)");
        if (width <= 0 || height <= 0) throw ConfigError("image size must be positive");
        if (!(near > 0.0 && near < far)) throw ConfigError("need 0 < near < far");
    }

    bool operator==(const Intrinsics&) const = default;
};

/// Rigid world-to-camera transform p_cam = rotation * (p - origin).
/// Rows of `rotation` are the camera right, up and backward axes.
struct ViewFrame {
    Mat3 rotation;
    Vec3 origin;

    Vec3 apply(const Vec3& p) const { return rotation * (p - origin); }
};

namespace detail {

inline constexpr double kParallelTolerance = 1e-9;

inline Vec3 up_hint(const Vec3& forward) {
    const Vec3 up(0.0, 1.0, 0.0);
    if (forward.cross(up).norm() > kParallelTolerance) return up;
    return {1.0, 0.0, 0.0};
}

}  // namespace detail

/// Right-handed look-at frame: camera looks down -z at the focus point, world +y is up.
inline ViewFrame look_at(const CameraParams& cam) {
    const Vec3 g = cam.target() - cam.position;
    const double len = g.norm();
    if (!(len > detail::kParallelTolerance) || !std::isfinite(len))
        throw ConfigError("degenerate view direction: camera sits on its focus point");
    const Vec3 f = g / len;
    const Vec3 r = f.cross(detail::up_hint(f)).normalized();
    const Vec3 u = r.cross(f);
    ViewFrame frame;
    frame.rotation.row(0) = r.transpose();
    frame.rotation.row(1) = u.transpose();
    frame.rotation.row(2) = -f.transpose();
    frame.origin = cam.position;
    return frame;
}

/// d(rotation)/d(position.x, position.y, position.z, focus.x, focus.y).
inline std::array<Mat3, 5> look_at_rotation_derivatives(const CameraParams& cam) {
    const Vec3 g = cam.target() - cam.position;
    const double glen = g.norm();
    if (!(glen > detail::kParallelTolerance)) throw ConfigError("degenerate view direction");
    const Vec3 f = g / glen;
    const Vec3 up = detail::up_hint(f);
    const Vec3 s = f.cross(up);
    const double slen = s.norm();
    const Vec3 r = s / slen;
    const Mat3 proj_f = (Mat3::Identity() - f * f.transpose()) / glen;
    const Mat3 proj_r = (Mat3::Identity() - r * r.transpose()) / slen;

    const std::array<Vec3, 5> dg = {Vec3(-1, 0, 0), Vec3(0, -1, 0), Vec3(0, 0, -1), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    std::array<Mat3, 5> out;
    for (std::size_t k = 0; k < 5; ++k) {
        const Vec3 df = proj_f * dg[k];
        const Vec3 dr = proj_r * df.cross(up);
        const Vec3 du = dr.cross(f) + r.cross(df);
        out[k].row(0) = dr.transpose();
        out[k].row(1) = du.transpose();
        out[k].row(2) = -df.transpose();
    }
    return out;
}

inline std::vector<Vec3> view_transform(const CameraParams& cam, std::span<const Vec3> points) {
    const ViewFrame frame = look_at(cam);
    std::vector<Vec3> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(frame.apply(p));
    return out;
}

inline Mat4 view_matrix(const CameraParams& cam) {
    const ViewFrame frame = look_at(cam);
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = frame.rotation;
    m.topRightCorner<3, 1>() = -frame.rotation * frame.origin;
    return m;
}

/// OpenGL-style frustum: camera-space depth -near maps to NDC z = -1, -far to +1.
inline Mat4 perspective_matrix(const Intrinsics& k) {
    k.validate();
    const double pi = std::acos(-1.0);
    const double focal = 1.0 / std::tan(k.vertical_fov * pi / 360.0);
    const double aspect = static_cast<double>(k.width) / k.height;
    Mat4 m = Mat4::Zero();
    m(0, 0) = focal / aspect;
    m(1, 1) = focal;
    m(2, 2) = (k.far + k.near) / (k.near - k.far);
    m(2, 3) = 2.0 * k.far * k.near / (k.near - k.far);
    m(3, 2) = -1.0;
    return m;
}

inline Mat4 projection_matrix(const CameraParams& cam, const Intrinsics& k) {
    return perspective_matrix(k) * view_matrix(cam);
}

struct PixelPoint {
    double x = 0.0;
    double y = 0.0;
    double depth = 0.0;  // homogeneous w: distance along the viewing axis
    bool valid = false;
};

/// Homogeneous transform, perspective divide and viewport mapping. Points on
/// or behind the camera plane come back with `valid == false`.
inline std::vector<PixelPoint> project_to_pixels(std::span<const Vec3> points, const Mat4& m, const Intrinsics& k) {
    std::vector<PixelPoint> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        const Eigen::Vector4d clip = m * p.homogeneous();
        PixelPoint px;
        px.depth = clip.w();
        if (clip.w() > 1e-12 && clip.allFinite()) {
            const double nx = clip.x() / clip.w();
            const double ny = clip.y() / clip.w();
            px.x = (nx + 1.0) * 0.5 * k.width;
            px.y = (1.0 - ny) * 0.5 * k.height;
            px.valid = true;
        }
        out.push_back(px);
    }
    return out;
}

}  // namespace vlearn
