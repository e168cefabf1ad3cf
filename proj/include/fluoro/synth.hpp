#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fluoro/curve.hpp"
#include "fluoro/geometry.hpp"
#include "fluoro/skeleton.hpp"

namespace fluoro {

struct RejectionExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OutOfFrustum : std::runtime_error {
  OutOfFrustum(const std::string& msg, int index) : std::runtime_error(msg), body_index(index) {}
  int body_index;
};

// Generator configuration. Curves are random cubic Beziers whose control
// points live inside the workspace box; the wire itself is the trailing
// (bodies-1)*spacing of arc length, resampled to equally spaced bodies.
// Body 0 (the distal tip) is the interior cut point and the last body ends
// at the Bezier endpoint near one workspace face, so the wire reads as
// entering the frame at the insertion edge. Rejection keeps curvature
// bounded, the wire visible in both views with the tip clear of the image
// border and the proximal end inside the border band, and the projections
// free of self-overlap so the skeleton stays a simple path.
struct SynthConfig {
  int bodies = 20;
  double spacing_m = 0.002;
  double workspace_half_m = 0.06;   // containment box half-extent, all axes
  double depth_half_m = 0.012;      // control-point extent along the top view axis (Z)
  double length_min_m = 0.04;       // full Bezier arc length window
  double length_max_m = 0.10;
  double max_curvature = 45.0;      // 1/m
  double stroke_radius_px = 1.5;
  int max_attempts = 10000;

  // View-quality margins, pixels.
  double border_margin_px = 3.0;        // wire body at least this far inside the image
  double tip_interior_px = 14.0;        // tip at least this far from every border
  double proximal_border_min_px = 0.4;  // proximal end window: close enough to the
  double proximal_border_max_px = 2.2;  // border that the stroke cap clips there
  double min_clearance_px = 5.0;        // separation between non-adjacent projected segments

  CameraRig rig = default_rig();
};

// One dataset record.
struct GuidewireSample {
  int id = 0;
  BinaryMask top_mask;
  BinaryMask side_mask;
  CameraRig cameras;
  Curve3D ground_truth;   // bodies, distal-first
  Vec2 tip_top = Vec2::Zero();   // continuous (u, v) of the distal tip per view
  Vec2 tip_side = Vec2::Zero();
  std::uint64_t sample_seed = 0;
};

struct DatasetManifest {
  int layout_version = 1;
  std::uint64_t seed = 0;
  int count = 0;
  int bodies = 0;
  double spacing_m = 0.0;
  std::string cameras_file;
  std::vector<std::string> samples;  // sample directory names, index order
};

// Deterministic per seed; throws RejectionExhausted when max_attempts
// candidates all fail the constraints.
Curve3D generate_curve(std::uint64_t seed, const SynthConfig& config);

// Projects a dense (10x bodies) resampling of the curve and strokes each
// segment with the given radius. Throws OutOfFrustum (with the first
// offending body index) when a body projects outside the image or behind the
// camera. Records the continuous tip projection when requested.
BinaryMask render_mask(const Curve3D& curve, const CameraModel& cam, double radius_px,
                       Vec2* tip_projection = nullptr);

// Writes `count` samples plus cameras.json; manifest.json is written last.
// Sample generation parallelizes across indices (set FLUORO_RECON_THREADS to
// cap workers); outputs are byte-identical for a given (seed, config, count).
DatasetManifest generate_dataset(std::uint64_t seed, int count, const SynthConfig& config,
                                 const std::filesystem::path& out_dir);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

GuidewireSample load_sample(const std::filesystem::path& dataset_dir,
                            const DatasetManifest& manifest, int index);
std::vector<GuidewireSample> load_dataset(const std::filesystem::path& dataset_dir);

}  // namespace fluoro
