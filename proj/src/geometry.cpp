#include "fluoro/geometry.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/SVD>
#include <json.hpp>

namespace fluoro {

Mat34 CameraModel::projection_matrix() const {
  Mat34 rt;
  rt.block<3, 3>(0, 0) = extrinsics.rotation;
  rt.col(3) = extrinsics.translation;
  return intrinsics.matrix() * rt;
}

void validate(const CameraModel& cam) {
  const CameraIntrinsics& k = cam.intrinsics;
  if (!(k.fx > 0.0) || !(k.fy > 0.0)) throw std::invalid_argument("focal lengths must be positive");
  if (cam.image_width < 1 || cam.image_height < 1)
    throw std::invalid_argument("image size must be at least 1x1");
  if (k.cx < 0.0 || k.cx > cam.image_width || k.cy < 0.0 || k.cy > cam.image_height)
    throw std::invalid_argument("principal point outside the image");
  const Mat3& r = cam.extrinsics.rotation;
  if ((r * r.transpose() - Mat3::Identity()).norm() > 1e-9)
    throw std::invalid_argument("rotation is not orthonormal");
  if (std::abs(r.determinant() - 1.0) > 1e-9)
    throw std::invalid_argument("rotation determinant is not +1");
}

HomogeneousPoint2 project(const CameraModel& cam, const HomogeneousPoint3& X) {
  return cam.projection_matrix() * X;
}

Vec2 project_pixel(const CameraModel& cam, const Vec3& world_point) {
  const HomogeneousPoint2 x = project(cam, world_point.homogeneous());
  if (std::abs(x.z()) < 1e-12)
    throw DegenerateProjection("point projects to infinity (w ~ 0)");
  return x.hnormalized();
}

Vec3 triangulate_point(const Mat34& P1, const Mat34& P2, const HomogeneousPoint2& x1,
                       const HomogeneousPoint2& x2) {
  auto normalized = [](const HomogeneousPoint2& x) -> Vec2 {
    if (std::abs(x.z()) < 1e-12)
      throw DegenerateProjection("image point at infinity cannot be triangulated");
    return x.hnormalized();
  };
  const Vec2 u1 = normalized(x1);
  const Vec2 u2 = normalized(x2);

  Eigen::Matrix4d a;
  a.row(0) = u1.x() * P1.row(2) - P1.row(0);
  a.row(1) = u1.y() * P1.row(2) - P1.row(1);
  a.row(2) = u2.x() * P2.row(2) - P2.row(0);
  a.row(3) = u2.y() * P2.row(2) - P2.row(1);

  Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
  const Vec4 sigma = svd.singularValues();
  if (sigma(2) - sigma(3) <= 1e-9 * sigma(0))
    throw DegenerateGeometry("DLT nullspace not unique (parallel rays or identical cameras)");

  const Vec4 X = svd.matrixV().col(3);
  if (std::abs(X(3)) < 1e-12) throw DehomogenizationFailure("triangulated point at infinity");
  return X.hnormalized();
}

Curve3D triangulate_polyline(const CameraModel& cam1, const CameraModel& cam2,
                             const std::vector<Vec2>& pts1, const std::vector<Vec2>& pts2) {
  if (pts1.size() != pts2.size())
    throw LengthMismatch("point counts differ: " + std::to_string(pts1.size()) + " vs " +
                         std::to_string(pts2.size()));
  const Mat34 P1 = cam1.projection_matrix();
  const Mat34 P2 = cam2.projection_matrix();
  Curve3D out;
  out.points.reserve(pts1.size());
  for (std::size_t i = 0; i < pts1.size(); ++i) {
    try {
      out.points.push_back(triangulate_point(P1, P2, pts1[i].homogeneous(), pts2[i].homogeneous()));
    } catch (const std::runtime_error& e) {
      throw DegenerateGeometry("triangulation failed at index " + std::to_string(i) + ": " +
                               e.what());
    }
  }
  return out;
}

CameraRig default_rig() {
  constexpr double kStandoff = 0.3;  // meters from workspace center
  CameraIntrinsics k;
  k.fx = 175.0;
  k.fy = 175.0;
  k.skew = 0.0;
  k.cx = 40.0;
  k.cy = 40.0;

  CameraRig rig;

  // Top view: optical axis along -Z, camera at (0, 0, +0.3).
  rig.top.intrinsics = k;
  rig.top.extrinsics.rotation << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  rig.top.extrinsics.translation = Vec3(0.0, 0.0, kStandoff);
  rig.top.image_width = 80;
  rig.top.image_height = 80;

  // Side view: optical axis along -X, camera at (+0.3, 0, 0).
  rig.side.intrinsics = k;
  rig.side.extrinsics.rotation << 0, 1, 0, 0, 0, -1, -1, 0, 0;
  rig.side.extrinsics.translation = Vec3(0.0, 0.0, kStandoff);
  rig.side.image_width = 80;
  rig.side.image_height = 80;

  return rig;
}

namespace {

nlohmann::ordered_json camera_to_json(const CameraModel& cam) {
  nlohmann::ordered_json j;
  j["intrinsics"] = {{"fx", cam.intrinsics.fx},
                     {"fy", cam.intrinsics.fy},
                     {"skew", cam.intrinsics.skew},
                     {"cx", cam.intrinsics.cx},
                     {"cy", cam.intrinsics.cy}};
  std::vector<double> r(9);
  for (int i = 0; i < 3; ++i)
    for (int k2 = 0; k2 < 3; ++k2) r[3 * i + k2] = cam.extrinsics.rotation(i, k2);
  j["rotation"] = r;
  j["translation"] = {cam.extrinsics.translation.x(), cam.extrinsics.translation.y(),
                      cam.extrinsics.translation.z()};
  j["image_size"] = {cam.image_width, cam.image_height};
  return j;
}

CameraModel camera_from_json(const nlohmann::json& j) {
  CameraModel cam;
  const auto& k = j.at("intrinsics");
  cam.intrinsics.fx = k.at("fx").get<double>();
  cam.intrinsics.fy = k.at("fy").get<double>();
  cam.intrinsics.skew = k.at("skew").get<double>();
  cam.intrinsics.cx = k.at("cx").get<double>();
  cam.intrinsics.cy = k.at("cy").get<double>();
  const auto r = j.at("rotation").get<std::vector<double>>();
  if (r.size() != 9) throw ParseError("rotation must have 9 row-major entries");
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 3; ++c) cam.extrinsics.rotation(i, c) = r[3 * i + c];
  const auto t = j.at("translation").get<std::vector<double>>();
  if (t.size() != 3) throw ParseError("translation must have 3 entries");
  cam.extrinsics.translation = Vec3(t[0], t[1], t[2]);
  const auto sz = j.at("image_size").get<std::vector<int>>();
  if (sz.size() != 2) throw ParseError("image_size must be [width, height]");
  cam.image_width = sz[0];
  cam.image_height = sz[1];
  validate(cam);
  return cam;
}

}  // namespace

void write_cameras_json(const CameraRig& rig, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["cameras"]["top"] = camera_to_json(rig.top);
  j["cameras"]["side"] = camera_to_json(rig.side);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

CameraRig read_cameras_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    CameraRig rig;
    rig.top = camera_from_json(j.at("cameras").at("top"));
    rig.side = camera_from_json(j.at("cameras").at("side"));
    return rig;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad cameras file " + path.string() + ": " + e.what());
  }
}

}  // namespace fluoro
