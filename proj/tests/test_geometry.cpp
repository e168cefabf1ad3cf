#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fluoro/geometry.hpp"
#include "fluoro/rng.hpp"

using namespace fluoro;

namespace {

CameraModel make_camera(double fx, double fy, double cx, double cy, const Mat3& r, const Vec3& t,
                        int w = 80, int h = 80) {
  CameraModel cam;
  cam.intrinsics = {fx, fy, 0.0, cx, cy};
  cam.extrinsics.rotation = r;
  cam.extrinsics.translation = t;
  cam.image_width = w;
  cam.image_height = h;
  return cam;
}

CameraModel random_camera(Rng& rng) {
  const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
  const double angle = rng.uniform(-3.0, 3.0);
  const Mat3 r = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  const Vec3 t(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(0.2, 0.5));
  return make_camera(rng.uniform(50.0, 400.0), rng.uniform(50.0, 400.0), rng.uniform(10.0, 70.0),
                     rng.uniform(10.0, 70.0), r, t);
}

// Independent elementwise 3x3 * 3x4 product.
Mat34 brute_force_krt(const Mat3& k, const Mat3& r, const Vec3& t) {
  double rt[3][4];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) rt[i][j] = r(i, j);
    rt[i][3] = t(i);
  }
  Mat34 p;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (int m = 0; m < 3; ++m) acc += k(i, m) * rt[m][j];
      p(i, j) = acc;
    }
  }
  return p;
}

}  // namespace

TEST_CASE("projection matrix: identity camera") {
  const CameraModel cam = make_camera(1, 1, 0, 0, Mat3::Identity(), Vec3::Zero());
  Mat34 expected;
  expected << 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0;
  CHECK((cam.projection_matrix() - expected).norm() == 0.0);
}

TEST_CASE("projection matrix: direct composition") {
  const CameraModel cam = make_camera(100, 100, 40, 40, Mat3::Identity(), Vec3::Zero());
  Mat34 expected;
  expected << 100, 0, 40, 0, 0, 100, 40, 0, 0, 0, 1, 0;
  CHECK((cam.projection_matrix() - expected).norm() == 0.0);
}

TEST_CASE("projection matrix: third row equals third row of [R|t]") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const CameraModel cam = random_camera(rng);
    const Mat34 p = cam.projection_matrix();
    for (int j = 0; j < 3; ++j)
      CHECK(p(2, j) == doctest::Approx(cam.extrinsics.rotation(2, j)).epsilon(1e-12));
    CHECK(p(2, 3) == doctest::Approx(cam.extrinsics.translation.z()).epsilon(1e-12));
  }
}

TEST_CASE("projection matrix matches elementwise product oracle") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const CameraModel cam = random_camera(rng);
    const Mat34 expected = brute_force_krt(cam.intrinsics.matrix(), cam.extrinsics.rotation,
                                           cam.extrinsics.translation);
    CHECK((cam.projection_matrix() - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("project: optical axis maps to principal point") {
  const CameraModel cam = make_camera(1, 1, 0, 0, Mat3::Identity(), Vec3::Zero());
  const Vec2 px = project_pixel(cam, Vec3(0, 0, 1));
  CHECK(px.x() == doctest::Approx(0.0));
  CHECK(px.y() == doctest::Approx(0.0));
}

TEST_CASE("project: u = fx X / Z + cx") {
  const CameraModel cam = make_camera(100, 100, 40, 40, Mat3::Identity(), Vec3::Zero());
  const Vec2 px = project_pixel(cam, Vec3(0.1, 0, 1));
  CHECK(px.x() == doctest::Approx(50.0));
  CHECK(px.y() == doctest::Approx(40.0));
}

TEST_CASE("project matches matrix-vector oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const CameraModel cam = random_camera(rng);
    const Vec4 X(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), 1.0);
    const Mat34 p = cam.projection_matrix();
    Vec3 expected = Vec3::Zero();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) expected(i) += p(i, j) * X(j);
    CHECK((project(cam, X) - expected).norm() < 1e-12);
  }
}

TEST_CASE("project: degenerate projection throws") {
  const CameraModel cam = make_camera(1, 1, 0, 0, Mat3::Identity(), Vec3::Zero());
  CHECK_THROWS_AS(project_pixel(cam, Vec3(0.1, 0.0, 0.0)), DegenerateProjection);
}

TEST_CASE("triangulate: symmetric orthogonal rig recovers the origin") {
  const CameraRig rig = default_rig();
  const Vec2 c1 = project_pixel(rig.top, Vec3::Zero());
  const Vec2 c2 = project_pixel(rig.side, Vec3::Zero());
  const Vec3 rec = triangulate_point(rig.top.projection_matrix(), rig.side.projection_matrix(),
                                     c1.homogeneous(), c2.homogeneous());
  CHECK(rec.norm() < 1e-9);
}

TEST_CASE("triangulate round-trip: project then recover within 1e-9 m") {
  const CameraRig rig = default_rig();
  const Mat34 p1 = rig.top.projection_matrix();
  const Mat34 p2 = rig.side.projection_matrix();
  Rng rng(123);
  double worst = 0.0;
  for (int trial = 0; trial < 2000; ++trial) {
    const Vec3 x(rng.uniform(-0.06, 0.06), rng.uniform(-0.06, 0.06), rng.uniform(-0.06, 0.06));
    const Vec2 u1 = project_pixel(rig.top, x);
    const Vec2 u2 = project_pixel(rig.side, x);
    const Vec3 rec = triangulate_point(p1, p2, u1.homogeneous(), u2.homogeneous());
    worst = std::max(worst, (rec - x).norm());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("triangulate: reprojection within 1e-6 px") {
  const CameraRig rig = default_rig();
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 x(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05));
    const Vec2 u1 = project_pixel(rig.top, x);
    const Vec2 u2 = project_pixel(rig.side, x);
    const Vec3 rec = triangulate_point(rig.top.projection_matrix(), rig.side.projection_matrix(),
                                       u1.homogeneous(), u2.homogeneous());
    CHECK((project_pixel(rig.top, rec) - u1).norm() < 1e-6);
    CHECK((project_pixel(rig.side, rec) - u2).norm() < 1e-6);
  }
}

TEST_CASE("triangulate: scale invariance of homogeneous inputs") {
  const CameraRig rig = default_rig();
  const Mat34 p1 = rig.top.projection_matrix();
  const Mat34 p2 = rig.side.projection_matrix();
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 x(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05));
    const Vec3 u1 = project_pixel(rig.top, x).homogeneous();
    const Vec3 u2 = project_pixel(rig.side, x).homogeneous();
    const double s1 = rng.uniform(0.5, 0.51) * (rng.uniform01() < 0.5 ? -7.0 : 13.0);
    const double s2 = rng.uniform(1.0, 2.0);
    const Vec3 a = triangulate_point(p1, p2, u1, u2);
    const Vec3 b = triangulate_point(p1, p2, s1 * u1, s2 * u2);
    CHECK((a - b).norm() < 1e-9);
  }
}

TEST_CASE("triangulate: solution is the SVD minimizer (random spot check)") {
  const CameraRig rig = default_rig();
  const Mat34 p1 = rig.top.projection_matrix();
  const Mat34 p2 = rig.side.projection_matrix();
  Rng rng(31);
  const Vec3 x(0.01, -0.02, 0.03);
  // Perturbed correspondences so the minimum is strictly positive.
  const Vec2 u1 = project_pixel(rig.top, x) + Vec2(0.3, -0.2);
  const Vec2 u2 = project_pixel(rig.side, x) + Vec2(-0.25, 0.15);

  Eigen::Matrix4d a;
  a.row(0) = u1.x() * p1.row(2) - p1.row(0);
  a.row(1) = u1.y() * p1.row(2) - p1.row(1);
  a.row(2) = u2.x() * p2.row(2) - p2.row(0);
  a.row(3) = u2.y() * p2.row(2) - p2.row(1);

  const Vec3 sol = triangulate_point(p1, p2, u1.homogeneous(), u2.homogeneous());
  Vec4 sol_h = sol.homogeneous();
  sol_h.normalize();
  const double best = (a * sol_h).norm();
  for (int trial = 0; trial < 10000; ++trial) {
    Vec4 y(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    y.normalize();
    CHECK(best <= (a * y).norm() + 1e-12);
  }
}

TEST_CASE("triangulate: identical cameras are degenerate") {
  const CameraRig rig = default_rig();
  const Mat34 p1 = rig.top.projection_matrix();
  const Vec2 u = project_pixel(rig.top, Vec3(0.01, 0.01, 0.0));
  CHECK_THROWS_AS(triangulate_point(p1, p1, u.homogeneous(), u.homogeneous()),
                  DegenerateGeometry);
}

TEST_CASE("triangulate: +-0.5 px noise stays under 2x the pixel footprint") {
  const CameraRig rig = default_rig();
  const Mat34 p1 = rig.top.projection_matrix();
  const Mat34 p2 = rig.side.projection_matrix();
  Rng rng(77);
  // Worst-case world footprint of one pixel over the sampled depth range.
  const double footprint = (0.3 + 0.06) / 175.0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec3 x(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05));
    const Vec2 u1 = project_pixel(rig.top, x) + Vec2(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    const Vec2 u2 = project_pixel(rig.side, x) + Vec2(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    const Vec3 rec = triangulate_point(p1, p2, u1.homogeneous(), u2.homogeneous());
    worst = std::max(worst, (rec - x).norm());
  }
  CHECK(worst < 2.0 * footprint);
}

TEST_CASE("triangulate_polyline: noiseless straight segment") {
  const CameraRig rig = default_rig();
  const Vec3 a(-0.02, -0.01, 0.005);
  const Vec3 b(0.03, 0.02, -0.01);
  std::vector<Vec2> top, side;
  for (int i = 0; i < 5; ++i) {
    const Vec3 p = a + (b - a) * (i / 4.0);
    top.push_back(project_pixel(rig.top, p));
    side.push_back(project_pixel(rig.side, p));
  }
  const Curve3D curve = triangulate_polyline(rig.top, rig.side, top, side);
  REQUIRE(curve.size() == 5);
  CHECK((curve.front() - a).norm() < 1e-9);
  CHECK((curve.back() - b).norm() < 1e-9);
}

TEST_CASE("triangulate_polyline: minimal n=2 input and length mismatch") {
  const CameraRig rig = default_rig();
  const std::vector<Vec2> two{Vec2(40, 40), Vec2(42, 41)};
  const std::vector<Vec2> three{Vec2(40, 40), Vec2(42, 41), Vec2(44, 42)};
  CHECK(triangulate_polyline(rig.top, rig.side, two, two).size() == 2);
  CHECK_THROWS_AS(triangulate_polyline(rig.top, rig.side, two, three), LengthMismatch);
}

TEST_CASE("camera validation rejects broken inputs") {
  CameraModel cam = default_rig().top;
  CHECK_NOTHROW(validate(cam));
  cam.intrinsics.fx = -1.0;
  CHECK_THROWS_AS(validate(cam), std::invalid_argument);
  cam = default_rig().top;
  cam.extrinsics.rotation(0, 0) = 2.0;
  CHECK_THROWS_AS(validate(cam), std::invalid_argument);
}

TEST_CASE("cameras.json round trip") {
  const auto path = std::filesystem::temp_directory_path() / "fluoro_test_cameras.json";
  const CameraRig rig = default_rig();
  write_cameras_json(rig, path);
  const CameraRig loaded = read_cameras_json(path);
  CHECK((loaded.top.projection_matrix() - rig.top.projection_matrix()).norm() == 0.0);
  CHECK((loaded.side.projection_matrix() - rig.side.projection_matrix()).norm() == 0.0);
  CHECK(loaded.top.image_width == 80);
  std::filesystem::remove(path);
}
