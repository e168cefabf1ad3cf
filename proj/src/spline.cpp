#include "fluoro/spline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace fluoro {

Vec3 SplineModel::evaluate(double t) const {
  t = std::clamp(t, 0.0, 1.0);
  const std::size_t n = knots.size();
  // Interval index: largest i with knots[i] <= t, capped to the last interval.
  std::size_t i =
      std::upper_bound(knots.begin(), knots.end(), t) - knots.begin();
  i = i == 0 ? 0 : i - 1;
  if (i >= n - 1) i = n - 2;

  const double h = knots[i + 1] - knots[i];
  const double a = (knots[i + 1] - t) / h;
  const double b = (t - knots[i]) / h;
  const double ca = (a * a * a - a) * h * h / 6.0;
  const double cb = (b * b * b - b) * h * h / 6.0;

  Vec3 p;
  for (int d = 0; d < 3; ++d) {
    p(d) = a * values[d][i] + b * values[d][i + 1] + ca * second_derivs[d][i] +
           cb * second_derivs[d][i + 1];
  }
  return p;
}

namespace {

// Chord-length parameterization of the distinct points, normalized to [0, 1].
std::vector<double> chord_parameters(const std::vector<Vec3>& pts) {
  std::vector<double> t(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i)
    t[i] = t[i - 1] + (pts[i] - pts[i - 1]).norm();
  const double total = t.back();
  for (double& v : t) v /= total;
  t.back() = 1.0;
  return t;
}

// Second-difference operator Q (n x (n-2)) and penalty tridiagonal R
// ((n-2) x (n-2)) for natural cubic smoothing splines.
void build_qr(const std::vector<double>& t, Eigen::MatrixXd& q, Eigen::MatrixXd& r) {
  const int n = static_cast<int>(t.size());
  q = Eigen::MatrixXd::Zero(n, n - 2);
  r = Eigen::MatrixXd::Zero(n - 2, n - 2);
  for (int j = 1; j <= n - 2; ++j) {
    const double h0 = t[j] - t[j - 1];
    const double h1 = t[j + 1] - t[j];
    q(j - 1, j - 1) = 1.0 / h0;
    q(j, j - 1) = -(1.0 / h0 + 1.0 / h1);
    q(j + 1, j - 1) = 1.0 / h1;
    r(j - 1, j - 1) = (h0 + h1) / 3.0;
    if (j <= n - 3) {
      r(j - 1, j) = h1 / 6.0;
      r(j, j - 1) = h1 / 6.0;
    }
  }
}

// Natural-spline second derivatives consistent with fitted values g.
std::vector<double> inner_second_derivs(const Eigen::MatrixXd& q, const Eigen::MatrixXd& r,
                                        const Eigen::VectorXd& g) {
  const Eigen::VectorXd gamma = r.ldlt().solve(q.transpose() * g);
  std::vector<double> out(g.size(), 0.0);
  for (int j = 0; j < gamma.size(); ++j) out[j + 1] = gamma(j);
  return out;
}

struct CoordinateFit {
  Eigen::VectorXd fitted;
  std::vector<double> second_derivs;
};

CoordinateFit fit_coordinate(const std::vector<double>& t, const Eigen::VectorXd& y,
                             double smoothing, const Eigen::MatrixXd& q,
                             const Eigen::MatrixXd& r, const Eigen::MatrixXd& k) {
  const int n = static_cast<int>(t.size());
  if (smoothing <= 0.0) {
    return {y, inner_second_derivs(q, r, y)};
  }

  // Least-squares line: the infinite-smoothing limit. If it fits within the
  // budget there is nothing left to bend.
  Eigen::MatrixXd design(n, 2);
  for (int i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = t[i];
  }
  const Eigen::Vector2d ab = (design.transpose() * design).ldlt().solve(design.transpose() * y);
  const Eigen::VectorXd line = design * ab;
  if ((y - line).squaredNorm() <= smoothing) {
    return {line, std::vector<double>(n, 0.0)};
  }

  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
  auto rss_at = [&](double lambda, Eigen::VectorXd& g) {
    g = (identity + lambda * k).ldlt().solve(y);
    return (y - g).squaredNorm();
  };

  Eigen::VectorXd g;
  double lo = 0.0, hi = 1.0;
  while (rss_at(hi, g) < smoothing && hi < 1e18) hi *= 16.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (rss_at(mid, g) <= smoothing)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-12 * hi) break;
  }
  // Final solve at the admissible end of the bracket: RSS(lo) <= smoothing.
  rss_at(lo, g);
  return {g, inner_second_derivs(q, r, g)};
}

}  // namespace

SplineModel fit_spline(const Curve3D& curve, double smoothing) {
  std::vector<Vec3> pts;
  pts.reserve(curve.points.size());
  for (const Vec3& p : curve.points) {
    if (pts.empty() || (p - pts.back()).norm() > 1e-12) pts.push_back(p);
  }
  if (pts.size() < 2) throw DegenerateInput("all points coincide");

  SplineModel spline;
  spline.smoothing = smoothing;
  spline.knots = chord_parameters(pts);
  const int n = static_cast<int>(pts.size());

  if (n == 2) {
    spline.degree = 1;
    for (int d = 0; d < 3; ++d) {
      spline.values[d] = {pts[0](d), pts[1](d)};
      spline.second_derivs[d] = {0.0, 0.0};
    }
    return spline;
  }

  if (n == 3) {
    // Unique interpolating parabola per coordinate (degree n-1 fallback).
    spline.degree = 2;
    const double t0 = spline.knots[0], t1 = spline.knots[1], t2 = spline.knots[2];
    for (int d = 0; d < 3; ++d) {
      const double y0 = pts[0](d), y1 = pts[1](d), y2 = pts[2](d);
      const double quad_coeff = (y0 / ((t0 - t1) * (t0 - t2)) + y1 / ((t1 - t0) * (t1 - t2)) +
                                 y2 / ((t2 - t0) * (t2 - t1)));
      spline.values[d] = {y0, y1, y2};
      spline.second_derivs[d] = std::vector<double>(3, 2.0 * quad_coeff);
    }
    return spline;
  }

  spline.degree = 3;
  Eigen::MatrixXd q, r;
  build_qr(spline.knots, q, r);
  const Eigen::MatrixXd k = q * r.ldlt().solve(q.transpose());
  for (int d = 0; d < 3; ++d) {
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = pts[i](d);
    CoordinateFit fit = fit_coordinate(spline.knots, y, smoothing, q, r, k);
    spline.values[d].assign(fit.fitted.data(), fit.fitted.data() + n);
    spline.second_derivs[d] = std::move(fit.second_derivs);
  }
  return spline;
}

namespace {

double polyline_length_at(const SplineModel& spline, int segments) {
  double len = 0.0;
  Vec3 prev = spline.evaluate(0.0);
  for (int i = 1; i <= segments; ++i) {
    const Vec3 p = spline.evaluate(static_cast<double>(i) / segments);
    len += (p - prev).norm();
    prev = p;
  }
  return len;
}

}  // namespace

Curve3D resample_equal_arclength(const SplineModel& spline, int n) {
  const int dense = std::max(1000, 50 * n);
  std::vector<Vec3> pts(dense + 1);
  std::vector<double> cum(dense + 1, 0.0);
  for (int i = 0; i <= dense; ++i) {
    pts[i] = spline.evaluate(static_cast<double>(i) / dense);
    if (i > 0) cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  }
  const double total = cum.back();

  Curve3D out;
  out.points.resize(n);
  out.points.front() = pts.front();
  out.points.back() = pts.back();
  std::size_t seg = 0;
  for (int i = 1; i + 1 < n; ++i) {
    const double target = total * i / (n - 1);
    while (seg + 2 < cum.size() && cum[seg + 1] < target) ++seg;
    const double seg_len = cum[seg + 1] - cum[seg];
    const double frac = seg_len > 0.0 ? (target - cum[seg]) / seg_len : 0.0;
    const double t = (static_cast<double>(seg) + frac) / dense;
    out.points[i] = spline.evaluate(t);
  }
  return out;
}

double arc_length(const SplineModel& spline) {
  int segments = 2048;
  double prev = polyline_length_at(spline, segments);
  for (int iter = 0; iter < 10; ++iter) {
    segments *= 2;
    const double cur = polyline_length_at(spline, segments);
    if (std::abs(cur - prev) < 1e-7) return cur;
    prev = cur;
  }
  return prev;
}

void write_spline_json(const SplineModel& spline, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["degree"] = spline.degree;
  j["smoothing"] = spline.smoothing;
  j["knots"] = spline.knots;
  const char* axes[3] = {"x", "y", "z"};
  for (int d = 0; d < 3; ++d) {
    j["values"][axes[d]] = spline.values[d];
    j["second_derivs"][axes[d]] = spline.second_derivs[d];
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
}

SplineModel read_spline_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    SplineModel spline;
    spline.degree = j.at("degree").get<int>();
    spline.smoothing = j.at("smoothing").get<double>();
    spline.knots = j.at("knots").get<std::vector<double>>();
    const char* axes[3] = {"x", "y", "z"};
    for (int d = 0; d < 3; ++d) {
      spline.values[d] = j.at("values").at(axes[d]).get<std::vector<double>>();
      spline.second_derivs[d] = j.at("second_derivs").at(axes[d]).get<std::vector<double>>();
    }
    return spline;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad spline file " + path.string() + ": " + e.what());
  }
}

}  // namespace fluoro
