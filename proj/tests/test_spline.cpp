#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fluoro/rng.hpp"
#include "fluoro/spline.hpp"

using namespace fluoro;

namespace {

constexpr double kPi = 3.14159265358979323846;

Curve3D collinear(int n) {
  Curve3D c;
  const Vec3 a(-0.02, 0.01, 0.0), d(0.003, 0.001, 0.002);
  for (int i = 0; i < n; ++i) c.points.push_back(a + i * d);
  return c;
}

Curve3D circle_arc(int n, double radius, double arc_fraction) {
  Curve3D c;
  for (int i = 0; i < n; ++i) {
    const double theta = 2.0 * kPi * arc_fraction * i / (n - 1);
    c.points.emplace_back(radius * std::cos(theta), radius * std::sin(theta), 0.0);
  }
  return c;
}

}  // namespace

TEST_CASE("fit_spline: collinear points reproduce the line") {
  const Curve3D line = collinear(10);
  const SplineModel s = fit_spline(line, 0.0);
  const Vec3 dir = (line.back() - line.front()).normalized();
  for (int i = 0; i <= 50; ++i) {
    const Vec3 p = s.evaluate(i / 50.0);
    const Vec3 rel = p - line.front();
    CHECK((rel - rel.dot(dir) * dir).norm() < 1e-9);
  }
}

TEST_CASE("fit_spline: interpolates inputs at smoothing 0") {
  const Curve3D arc = circle_arc(12, 0.05, 0.4);
  const SplineModel s = fit_spline(arc, 0.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < arc.points.size(); ++i) {
    const double t = s.knots[i];
    worst = std::max(worst, (s.evaluate(t) - arc.points[i]).norm());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("fit_spline: chord parameters strictly increase") {
  const Curve3D arc = circle_arc(17, 0.04, 0.3);
  const SplineModel s = fit_spline(arc, 0.0);
  for (std::size_t i = 1; i < s.knots.size(); ++i) CHECK(s.knots[i] > s.knots[i - 1]);
  CHECK(s.knots.front() == 0.0);
  CHECK(s.knots.back() == 1.0);
}

TEST_CASE("fit_spline: smoothing keeps the residual inside the budget") {
  Rng rng(314);
  const int n = 40;
  const double sigma = 0.002;
  Curve3D helix;
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / (n - 1);
    helix.points.emplace_back(0.03 * std::cos(4.0 * t) + sigma * rng.normal(),
                              0.03 * std::sin(4.0 * t) + sigma * rng.normal(),
                              0.05 * t + sigma * rng.normal());
  }
  const double budget = sigma * sigma * n;
  const SplineModel s = fit_spline(helix, budget);
  for (int d = 0; d < 3; ++d) {
    double rss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double r = s.values[d][i] - helix.points[i](d);
      rss += r * r;
    }
    CHECK(rss <= budget * (1.0 + 1e-9));
    CHECK(rss > 0.0);  // it does smooth, not interpolate
  }
}

TEST_CASE("fit_spline: degenerate inputs") {
  Curve3D same;
  same.points.assign(5, Vec3(0.01, 0.02, 0.03));
  CHECK_THROWS_AS(fit_spline(same, 0.0), DegenerateInput);

  Curve3D two;
  two.points = {Vec3(0, 0, 0), Vec3(0.01, 0, 0)};
  const SplineModel s2 = fit_spline(two, 0.0);
  CHECK(s2.degree == 1);
  CHECK((s2.evaluate(0.5) - Vec3(0.005, 0, 0)).norm() < 1e-12);

  Curve3D three;
  three.points = {Vec3(0, 0, 0), Vec3(0.01, 0.01, 0), Vec3(0.02, 0, 0)};
  const SplineModel s3 = fit_spline(three, 0.0);
  CHECK(s3.degree == 2);
  for (int i = 0; i < 3; ++i)
    CHECK((s3.evaluate(s3.knots[i]) - three.points[i]).norm() < 1e-12);
}

TEST_CASE("resample: straight segment of 0.038 m at n=20 gives 0.002 m gaps") {
  Curve3D seg;
  for (int i = 0; i < 5; ++i) seg.points.emplace_back(0.038 * i / 4.0, 0.0, 0.0);
  const Curve3D out = resample_equal_arclength(fit_spline(seg, 0.0), 20);
  REQUIRE(out.size() == 20);
  for (std::size_t i = 1; i < out.points.size(); ++i)
    CHECK((out.points[i] - out.points[i - 1]).norm() == doctest::Approx(0.002).epsilon(1e-6));
}

TEST_CASE("resample: circle arc gaps equal within 0.1% (dense oracle)") {
  const Curve3D arc = circle_arc(25, 0.05, 0.45);
  const SplineModel s = fit_spline(arc, 0.0);
  const Curve3D out = resample_equal_arclength(s, 5);

  // Dense numerical arc-length oracle at 10,000 samples: arc positions of the
  // resampled points measured on the dense spline.
  const int dense = 10000;
  std::vector<Vec3> pts(dense + 1);
  std::vector<double> cum(dense + 1, 0.0);
  for (int i = 0; i <= dense; ++i) {
    pts[i] = s.evaluate(static_cast<double>(i) / dense);
    if (i > 0) cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  }
  auto arc_of = [&](const Vec3& p) {
    double best = 1e9, best_arc = 0.0;
    for (int i = 0; i <= dense; ++i) {
      const double d = (pts[i] - p).norm();
      if (d < best) {
        best = d;
        best_arc = cum[i];
      }
    }
    return best_arc;
  };
  std::vector<double> gaps;
  for (std::size_t i = 1; i < out.points.size(); ++i)
    gaps.push_back(arc_of(out.points[i]) - arc_of(out.points[i - 1]));
  const double mean = cum.back() / static_cast<double>(gaps.size());
  for (double g : gaps) CHECK(std::abs(g - mean) / mean < 1e-3);
}

TEST_CASE("resample: n=2 returns the endpoints") {
  const Curve3D arc = circle_arc(9, 0.03, 0.25);
  const SplineModel s = fit_spline(arc, 0.0);
  const Curve3D out = resample_equal_arclength(s, 2);
  REQUIRE(out.size() == 2);
  CHECK((out.front() - arc.front()).norm() < 1e-12);
  CHECK((out.back() - arc.back()).norm() < 1e-12);
}

TEST_CASE("resample: refining the dense inversion moves points by < 1e-6 m") {
  const Curve3D arc = circle_arc(20, 0.05, 0.4);
  const SplineModel s = fit_spline(arc, 0.0);
  const int n = 10;
  const Curve3D out = resample_equal_arclength(s, n);

  // Independent inversion at twice the library's dense resolution.
  const int dense = 2 * std::max(1000, 50 * n);
  std::vector<Vec3> pts(dense + 1);
  std::vector<double> cum(dense + 1, 0.0);
  for (int i = 0; i <= dense; ++i) {
    pts[i] = s.evaluate(static_cast<double>(i) / dense);
    if (i > 0) cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  }
  for (int i = 0; i < n; ++i) {
    const double target = cum.back() * i / (n - 1);
    std::size_t seg = 0;
    while (seg + 2 < cum.size() && cum[seg + 1] < target) ++seg;
    const double denom = cum[seg + 1] - cum[seg];
    const double frac = denom > 0.0 ? (target - cum[seg]) / denom : 0.0;
    const Vec3 refined = s.evaluate((static_cast<double>(seg) + frac) / dense);
    CHECK((refined - out.points[i]).norm() < 1e-6);
  }
}

TEST_CASE("arc_length: analytic line and quarter circle within 0.01%") {
  Curve3D seg;
  for (int i = 0; i < 100; ++i) seg.points.emplace_back(0.07 * i / 99.0, 0.0, 0.0);
  CHECK(arc_length(fit_spline(seg, 0.0)) == doctest::Approx(0.07).epsilon(1e-4));

  const double radius = 0.05;
  const Curve3D quarter = circle_arc(1000, radius, 0.25);
  const double analytic = 0.5 * kPi * radius;
  CHECK(arc_length(fit_spline(quarter, 0.0)) == doctest::Approx(analytic).epsilon(1e-4));
}

TEST_CASE("spline JSON round trip") {
  const Curve3D arc = circle_arc(15, 0.04, 0.35);
  const SplineModel s = fit_spline(arc, 0.0);
  const auto path = std::filesystem::temp_directory_path() / "fluoro_test_spline.json";
  write_spline_json(s, path);
  const SplineModel loaded = read_spline_json(path);
  for (int i = 0; i <= 20; ++i) {
    const double t = i / 20.0;
    CHECK((loaded.evaluate(t) - s.evaluate(t)).norm() < 1e-12);
  }
  std::filesystem::remove(path);
}
