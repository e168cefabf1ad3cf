#pragma once

#include <filesystem>
#include <vector>

#include "fluoro/common.hpp"

namespace fluoro {

// Ordered 3D point sequence, distal tip first, in meters.
struct Curve3D {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  const Vec3& front() const { return points.front(); }
  const Vec3& back() const { return points.back(); }

  // Polyline length in meters.
  double polyline_length() const;
};

// CSV with header `x_m,y_m,z_m`, one point per row, distal-first.
void write_curve_csv(const Curve3D& curve, const std::filesystem::path& path);
Curve3D read_curve_csv(const std::filesystem::path& path);

}  // namespace fluoro
