#include "fluoro/pipeline.hpp"

#include "fluoro/spline.hpp"

namespace fluoro {

Curve3D reconstruct_from_masks(const BinaryMask& top, const BinaryMask& side,
                               const CameraRig& rig, const ReconstructOptions& options) {
  auto view_points = [&](const BinaryMask& mask, const CameraModel& cam,
                         const std::optional<Vec2>& tip) {
    const BinaryMask skel = thin(mask);
    PixelPath path = longest_path(skel);
    path = orient_distal_first(path, tip, cam.image_width, cam.image_height);
    return sample_backbone(path, options.bodies);
  };

  const std::vector<Vec2> pts_top = view_points(top, rig.top, options.tip_top);
  const std::vector<Vec2> pts_side = view_points(side, rig.side, options.tip_side);

  const Curve3D triangulated = triangulate_polyline(rig.top, rig.side, pts_top, pts_side);
  const SplineModel spline = fit_spline(triangulated, options.smoothing);
  return resample_equal_arclength(spline, options.bodies);
}

Curve3D reconstruct_sample(const GuidewireSample& sample, int bodies, double smoothing) {
  ReconstructOptions options;
  options.bodies = bodies;
  options.smoothing = smoothing;
  options.tip_top = sample.tip_top;
  options.tip_side = sample.tip_side;
  return reconstruct_from_masks(sample.top_mask, sample.side_mask, sample.cameras, options);
}

}  // namespace fluoro
