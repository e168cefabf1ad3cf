#pragma once

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "fluoro/common.hpp"
#include "fluoro/curve.hpp"

namespace fluoro {

struct DegenerateProjection : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rays parallel or camera pair degenerate: the DLT nullspace is not unique.
struct DegenerateGeometry : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DehomogenizationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LengthMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Homogeneous points; equality is up to nonzero scale.
using HomogeneousPoint2 = Vec3;  // [u, v, w]
using HomogeneousPoint3 = Vec4;  // [X, Y, Z, W]

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double skew = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  Mat3 matrix() const {
    Mat3 k;
    k << fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }
};

struct CameraExtrinsics {
  Mat3 rotation = Mat3::Identity();     // world -> camera
  Vec3 translation = Vec3::Zero();      // meters
};

struct CameraModel {
  CameraIntrinsics intrinsics;
  CameraExtrinsics extrinsics;
  int image_width = 0;   // pixels
  int image_height = 0;

  // P = K [R | t].
  Mat34 projection_matrix() const;
};

// Throws std::invalid_argument when an invariant is violated (fx, fy > 0,
// principal point inside the image, rotation orthonormal with det +1 to 1e-9).
void validate(const CameraModel& cam);

// x = P X.
HomogeneousPoint2 project(const CameraModel& cam, const HomogeneousPoint3& X);

// Dehomogenized pixel coordinates (u, v). Throws DegenerateProjection when the
// point lies on the camera plane (|w| < 1e-12).
Vec2 project_pixel(const CameraModel& cam, const Vec3& world_point);

// Two-view DLT: assembles the 4x4 system from rows u*P[2]-P[0] and
// v*P[2]-P[1] per view (points normalized to w = 1 first) and returns the
// dehomogenized right singular vector of the smallest singular value.
Vec3 triangulate_point(const Mat34& P1, const Mat34& P2, const HomogeneousPoint2& x1,
                       const HomogeneousPoint2& x2);

// Index-corresponded, distal-first point lists; order is preserved.
Curve3D triangulate_polyline(const CameraModel& cam1, const CameraModel& cam2,
                             const std::vector<Vec2>& pts1, const std::vector<Vec2>& pts2);

struct CameraRig {
  CameraModel top;
  CameraModel side;
};

// Two orthogonal 80x80 views, fx = fy = 175 px, principal point (40, 40),
// both cameras 0.3 m from the workspace center: top looks along -Z, side
// along -X.
CameraRig default_rig();

// cameras.json schema (documented field-by-field in the README): per camera
// intrinsics {fx, fy, skew, cx, cy}, rotation (9 values, row-major),
// translation (3 values, meters), image_size [width, height].
void write_cameras_json(const CameraRig& rig, const std::filesystem::path& path);
CameraRig read_cameras_json(const std::filesystem::path& path);

}  // namespace fluoro
