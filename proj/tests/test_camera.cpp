#include <gtest/gtest.h>

#include "vlearn/camera.hpp"
#include "vlearn/rng.hpp"

using namespace vlearn;

namespace {

CameraParams random_camera(Rng& r) {
    CameraParams c;
    c.position = Vec3(uniform(r, -60, 60), uniform(r, -60, 60), uniform(r, 60, 200));
    c.focus = Vec2(uniform(r, -20, 20), uniform(r, -20, 20));
    return c;
}

Vec3 random_point(Rng& r, double s = 80.0) { return {uniform(r, -s, s), uniform(r, -s, s), uniform(r, -s, s)}; }

}  // namespace

TEST(ViewTransform, OpticalAxisPoint) {
    CameraParams c;
    c.position = Vec3(0, 0, 100);
    const Vec3 pts[] = {Vec3(0, 0, 0), Vec3(0, 0, 100)};
    const auto out = view_transform(c, pts);
    EXPECT_LE((out[0] - Vec3(0, 0, -100)).norm(), 1e-12);
    EXPECT_LE(out[1].norm(), 1e-12);
}

TEST(ViewTransform, IsRigid) {
    Rng r = make_rng(11, 1);
    for (int t = 0; t < 50; ++t) {
        const CameraParams c = random_camera(r);
        const Vec3 pts[] = {random_point(r), random_point(r)};
        const auto out = view_transform(c, pts);
        EXPECT_NEAR((out[0] - out[1]).norm(), (pts[0] - pts[1]).norm(), 1e-9);
        const Mat3 R = look_at(c).rotation;
        EXPECT_LE((R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_NEAR(R.determinant(), 1.0, 1e-12);
    }
}

TEST(ViewTransform, UpVectorFallsBackWhenLookingAlongY) {
    CameraParams c;
    c.position = Vec3(0, 100, 0);
    const ViewFrame f = look_at(c);
    EXPECT_TRUE(f.rotation.allFinite());
    const Vec3 pts[] = {Vec3(0, 0, 0)};
    EXPECT_LE((view_transform(c, pts)[0] - Vec3(0, 0, -100)).norm(), 1e-9);
}

TEST(ViewTransform, DegenerateViewThrows) {
    CameraParams c;
    c.position = Vec3(3, 4, 0);
    c.focus = Vec2(3, 4);
    EXPECT_THROW(look_at(c), ConfigError);
    EXPECT_THROW(projection_matrix(c, {}), ConfigError);
}

TEST(Projection, AxisPointsAndFrustumBounds) {
    CameraParams c;
    c.position = Vec3(0, 0, 500);
    const Intrinsics k;
    const Mat4 m = projection_matrix(c, k);
    auto ndc = [&](double depth) {
        const Eigen::Vector4d h = m * Vec3(0, 0, 500 - depth).homogeneous();
        return Vec3(h.head<3>() / h.w());
    };
    EXPECT_NEAR(ndc(k.near).z(), -1.0, 1e-12);
    EXPECT_NEAR(ndc(k.far).z(), 1.0, 1e-9);
    for (double d : {2.0, 50.0, 499.0}) {
        const Vec3 n = ndc(d);
        EXPECT_NEAR(n.x(), 0.0, 1e-12);
        EXPECT_NEAR(n.y(), 0.0, 1e-12);
        EXPECT_LE(std::abs(n.z()), 1.0);
    }
}

TEST(Projection, IdentityViewGivesBarePerspective) {
    // camera at the origin looking down -z: focus on z=0 is impossible, so build
    // the identity view from (0,0,d) and shift the points instead
    CameraParams c;
    c.position = Vec3(0, 0, 10);
    Mat4 shift = Mat4::Identity();
    shift(2, 3) = -10;
    const Mat4 expect = perspective_matrix({}) * shift;
    EXPECT_LE((projection_matrix(c, {}) - expect).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((view_matrix(c) - shift).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Projection, PixelMappingCentreAndCorners) {
    const Intrinsics k;
    CameraParams c;
    c.position = Vec3(0, 0, 100);
    const Vec3 axis[] = {Vec3(0, 0, 0)};
    const auto px = project_to_pixels(axis, projection_matrix(c, k), k);
    ASSERT_TRUE(px[0].valid);
    EXPECT_NEAR(px[0].x, 90.0, 1e-9);
    EXPECT_NEAR(px[0].y, 60.0, 1e-9);
    EXPECT_NEAR(px[0].depth, 100.0, 1e-9);
    // an identity "projection" passes NDC straight through to the viewport
    const Vec3 corners[] = {Vec3(-1, 1, 0), Vec3(1, -1, 0)};
    const auto pc = project_to_pixels(corners, Mat4::Identity(), k);
    EXPECT_NEAR(pc[0].x, 0.0, 1e-12);
    EXPECT_NEAR(pc[0].y, 0.0, 1e-12);
    EXPECT_NEAR(pc[1].x, 180.0, 1e-12);
    EXPECT_NEAR(pc[1].y, 120.0, 1e-12);
}

TEST(Projection, MatchesStepByStepArithmetic) {
    Rng r = make_rng(12, 1);
    const Intrinsics k;
    const double pi = std::acos(-1.0);
    for (int t = 0; t < 100; ++t) {
        const CameraParams c = random_camera(r);
        const Vec3 p = random_point(r, 40);
        // independent: camera basis, then pinhole with focal length from the fov
        const Vec3 f = (c.target() - c.position).normalized();
        const Vec3 rr = f.cross(Vec3(0, 1, 0)).normalized();
        const Vec3 u = rr.cross(f);
        const Vec3 d = p - c.position;
        const double zc = f.dot(d);
        if (zc < k.near) continue;
        const double focal = 1.0 / std::tan(k.vertical_fov * pi / 360.0);
        const double nx = focal * (static_cast<double>(k.height) / k.width) * rr.dot(d) / zc;
        const double ny = focal * u.dot(d) / zc;
        const Vec3 pts[] = {p};
        const auto px = project_to_pixels(pts, projection_matrix(c, k), k);
        ASSERT_TRUE(px[0].valid);
        EXPECT_NEAR(px[0].x, (nx + 1) / 2 * k.width, 1e-9);
        EXPECT_NEAR(px[0].y, (1 - ny) / 2 * k.height, 1e-9);
    }
}

TEST(Projection, PinholeScaling) {
    const Intrinsics k;
    CameraParams c;
    c.position = Vec3(0, 0, 0.5);
    c.focus = Vec2(0, 0);
    // camera looks down -z; offset point at depth d and 2d
    const Vec3 pts[] = {Vec3(5, 3, 0.5 - 40), Vec3(10, 6, 0.5 - 80), Vec3(5, 3, 0.5 - 80)};
    const auto px = project_to_pixels(pts, projection_matrix(c, k), k);
    EXPECT_NEAR(px[0].x, px[1].x, 1e-6);
    EXPECT_NEAR(px[0].y, px[1].y, 1e-6);
    EXPECT_NEAR(px[2].x - 90.0, (px[0].x - 90.0) / 2.0, 1e-6);
    EXPECT_NEAR(px[2].y - 60.0, (px[0].y - 60.0) / 2.0, 1e-6);
}

TEST(Projection, BehindCameraIsInvalidNotAnError) {
    CameraParams c;
    c.position = Vec3(0, 0, 100);
    const Vec3 pts[] = {Vec3(0, 0, 200), Vec3(0, 0, 100)};
    const auto px = project_to_pixels(pts, projection_matrix(c, {}), {});
    EXPECT_FALSE(px[0].valid);
    EXPECT_FALSE(px[1].valid);
}

TEST(Intrinsics, Validation) {
    Intrinsics k;
    k.vertical_fov = 180;
    EXPECT_THROW(k.validate(), ConfigError);
    k = {};
    k.near = 10;
    k.far = 5;
    EXPECT_THROW(k.validate(), ConfigError);
    k = {};
    k.width = 0;
    EXPECT_THROW(perspective_matrix(k), ConfigError);
}

TEST(LookAtDerivatives, MatchFiniteDifferences) {
    Rng r = make_rng(13, 1);
    for (int t = 0; t < 20; ++t) {
        const CameraParams c = random_camera(r);
        const auto d = look_at_rotation_derivatives(c);
        for (int k = 0; k < 5; ++k) {
            const double h = 1e-5;
            CameraParams up = c, dn = c;
            if (k < 3) {
                up.position[k] += h;
                dn.position[k] -= h;
            } else {
                up.focus[k - 3] += h;
                dn.focus[k - 3] -= h;
            }
            const Mat3 fd = (look_at(up).rotation - look_at(dn).rotation) / (2 * h);
            EXPECT_LE((fd - d[static_cast<std::size_t>(k)]).cwiseAbs().maxCoeff(), 1e-8);
        }
    }
}
