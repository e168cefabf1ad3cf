#pragma once

#include <optional>

#include "fluoro/curve.hpp"
#include "fluoro/geometry.hpp"
#include "fluoro/skeleton.hpp"
#include "fluoro/synth.hpp"

namespace fluoro {

struct ReconstructOptions {
  int bodies = 20;
  double smoothing = 0.0;
  std::optional<Vec2> tip_top;   // distal tip hint per view, pixel (u, v)
  std::optional<Vec2> tip_side;
};

// Full biplane reconstruction: thin both masks, trace the longest skeleton
// path, orient it distal-first, sample both views at equal image arc length,
// triangulate index pairs, then spline-fit and resample to equal 3D arc
// length.
Curve3D reconstruct_from_masks(const BinaryMask& top, const BinaryMask& side,
                               const CameraRig& rig, const ReconstructOptions& options);

// Convenience wrapper using the sample's recorded tip projections.
Curve3D reconstruct_sample(const GuidewireSample& sample, int bodies, double smoothing = 0.0);

}  // namespace fluoro
