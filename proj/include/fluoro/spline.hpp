#pragma once

#include <array>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "fluoro/common.hpp"
#include "fluoro/curve.hpp"

namespace fluoro {

struct DegenerateInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Smooth parametric space curve: three independent splines over a shared
// chord-length parameterization normalized to [0, 1]. Stored as knot values
// plus second derivatives, which covers the cubic, quadratic and linear cases
// in one evaluation rule (f'' is linear between knots).
struct SplineModel {
  std::vector<double> knots;                       // strictly increasing, [0, 1]
  std::array<std::vector<double>, 3> values;       // fitted values per coordinate
  std::array<std::vector<double>, 3> second_derivs;
  int degree = 3;
  double smoothing = 0.0;

  Vec3 evaluate(double t) const;  // t clamped to [0, 1]
};

// Fits per-coordinate natural cubic smoothing splines. With smoothing == 0 the
// spline interpolates every input point; with smoothing S > 0 each
// coordinate's residual sum of squares is at most S (the roughness penalty is
// raised as far as that budget allows). Inputs of 2 or 3 distinct points fall
// back to degree n-1 polynomials. Exactly coincident consecutive points are
// collapsed; throws DegenerateInput when fewer than 2 distinct points remain.
SplineModel fit_spline(const Curve3D& curve, double smoothing);

// n points at equal arc length along the spline (dense-polyline inversion at
// max(1000, 50 n) parameters); first and last coincide with the spline ends.
Curve3D resample_equal_arclength(const SplineModel& spline, int n);

// Total arc length, by doubling the dense polyline until successive estimates
// agree within 1e-7 m.
double arc_length(const SplineModel& spline);

void write_spline_json(const SplineModel& spline, const std::filesystem::path& path);
SplineModel read_spline_json(const std::filesystem::path& path);

}  // namespace fluoro
