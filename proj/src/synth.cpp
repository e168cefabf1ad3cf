#include "fluoro/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "fluoro/parallel.hpp"
#include "fluoro/rng.hpp"
#include "fluoro/spline.hpp"

namespace fluoro {

namespace {

struct Bezier {
  Vec3 p0, p1, p2, p3;

  Vec3 at(double t) const {
    const double u = 1.0 - t;
    return u * u * u * p0 + 3.0 * u * u * t * p1 + 3.0 * u * t * t * p2 + t * t * t * p3;
  }
  Vec3 d1(double t) const {
    const double u = 1.0 - t;
    return 3.0 * u * u * (p1 - p0) + 6.0 * u * t * (p2 - p1) + 3.0 * t * t * (p3 - p2);
  }
  Vec3 d2(double t) const {
    const double u = 1.0 - t;
    return 6.0 * u * (p2 - 2.0 * p1 + p0) + 6.0 * t * (p3 - 2.0 * p2 + p1);
  }
  double curvature(double t) const {
    const Vec3 v = d1(t);
    const double speed = v.norm();
    if (speed < 1e-12) return 0.0;
    return v.cross(d2(t)).norm() / (speed * speed * speed);
  }
};

Bezier sample_candidate(Rng& rng, const SynthConfig& cfg) {
  const double hw = cfg.workspace_half_m;
  const double hz = std::min(cfg.depth_half_m, hw);
  const double side = rng.uniform01() < 0.5 ? -1.0 : 1.0;

  // The wire is cut from the t = 1 end, so p3 is the proximal insertion point
  // near one Y face; the earlier control points pull the curve inward.
  Bezier bz;
  bz.p0 = Vec3(rng.uniform(-0.80 * hw, 0.80 * hw), side * rng.uniform(-0.50 * hw, 0.30 * hw),
               rng.uniform(-0.80 * hz, 0.80 * hz));
  bz.p1 = Vec3(rng.uniform(-0.80 * hw, 0.80 * hw), side * rng.uniform(-0.30 * hw, 0.40 * hw),
               rng.uniform(-hz, hz));
  bz.p2 = Vec3(rng.uniform(-0.80 * hw, 0.80 * hw), side * rng.uniform(0.20 * hw, 0.70 * hw),
               rng.uniform(-hz, hz));
  bz.p3 = Vec3(rng.uniform(-0.95 * hw, 0.95 * hw), side * rng.uniform(0.90 * hw, 1.0 * hw),
               rng.uniform(-hz, hz));
  return bz;
}

double bezier_length(const Bezier& bz, int segments) {
  double len = 0.0;
  Vec3 prev = bz.at(0.0);
  for (int i = 1; i <= segments; ++i) {
    const Vec3 p = bz.at(static_cast<double>(i) / segments);
    len += (p - prev).norm();
    prev = p;
  }
  return len;
}

// Parameters at the given arc-length positions (measured from t = 0),
// ascending. Empty result when a target exceeds the curve length.
std::vector<double> params_at_arcs(const Bezier& bz, const std::vector<double>& targets) {
  constexpr int kDense = 4096;
  std::vector<double> cum(kDense + 1, 0.0);
  Vec3 prev = bz.at(0.0);
  for (int i = 1; i <= kDense; ++i) {
    const Vec3 p = bz.at(static_cast<double>(i) / kDense);
    cum[i] = cum[i - 1] + (p - prev).norm();
    prev = p;
  }
  std::vector<double> params;
  params.reserve(targets.size());
  std::size_t seg = 0;
  for (double target : targets) {
    if (target < 0.0 || target > cum.back()) return {};
    while (seg + 1 < cum.size() && cum[seg + 1] < target) ++seg;
    const double seg_len = cum[seg + 1] - cum[seg];
    const double frac = seg_len > 0.0 ? (target - cum[seg]) / seg_len : 0.0;
    params.push_back((static_cast<double>(seg) + frac) / kDense);
  }
  return params;
}

double border_distance_px(const Vec2& p, const CameraModel& cam) {
  return std::min(std::min(p.x(), cam.image_width - 1.0 - p.x()),
                  std::min(p.y(), cam.image_height - 1.0 - p.y()));
}

// Projection of the wire into one view, with the generator's view-quality
// checks. Returns false on any violation. The proximal tail is allowed into
// the border band (the wire reads as entering the frame there, and its
// clipped stroke cap is what degrades the proximal reconstruction); the rest
// of the wire keeps a clear margin.
bool view_acceptable(const std::vector<Vec3>& dense, const CameraModel& cam,
                     const SynthConfig& cfg) {
  std::vector<Vec2> proj(dense.size());
  const std::size_t tail_start = dense.size() - std::max<std::size_t>(2, dense.size() / 7);
  for (std::size_t i = 0; i < dense.size(); ++i) {
    const HomogeneousPoint2 x = project(cam, dense[i].homogeneous());
    if (x.z() < 1e-9) return false;
    proj[i] = x.hnormalized();
    const double margin = i < tail_start ? cfg.border_margin_px : cfg.proximal_border_min_px;
    if (border_distance_px(proj[i], cam) < margin) return false;
  }
  if (border_distance_px(proj.front(), cam) < cfg.tip_interior_px) return false;
  if (border_distance_px(proj.back(), cam) > cfg.proximal_border_max_px) return false;

  // Self-overlap would merge strokes and break the skeleton into branches:
  // points far apart along the stroke must stay apart in the image.
  std::vector<double> arc(proj.size(), 0.0);
  for (std::size_t i = 1; i < proj.size(); ++i)
    arc[i] = arc[i - 1] + (proj[i] - proj[i - 1]).norm();
  const double window = 2.5 * cfg.min_clearance_px;
  const double min_clear2 = cfg.min_clearance_px * cfg.min_clearance_px;
  for (std::size_t i = 0; i < proj.size(); ++i) {
    for (std::size_t j = i + 1; j < proj.size(); ++j) {
      if (arc[j] - arc[i] <= window) continue;
      if ((proj[i] - proj[j]).squaredNorm() < min_clear2) return false;
    }
  }
  return true;
}

}  // namespace

Curve3D generate_curve(std::uint64_t seed, const SynthConfig& config) {
  Rng rng(seed);
  const double hw = config.workspace_half_m;
  const double wire_length = config.spacing_m * (config.bodies - 1);

  for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
    const Bezier bz = sample_candidate(rng, config);

    const double length = bezier_length(bz, 512);
    if (length < std::max(config.length_min_m, wire_length * 1.02) ||
        length > config.length_max_m)
      continue;

    // Bodies occupy the last wire_length of arc, distal-first: body 0 (tip)
    // sits wire_length before the curve end, the proximal body at the end.
    std::vector<double> body_arcs(config.bodies);
    for (int k = 0; k < config.bodies; ++k)
      body_arcs[k] = length - wire_length + config.spacing_m * k;
    const std::vector<double> body_params = params_at_arcs(bz, body_arcs);
    if (body_params.empty()) continue;

    bool curved_ok = true;
    const double t_wire = body_params.front();
    for (int i = 0; i <= 128 && curved_ok; ++i) {
      const double t = t_wire + (1.0 - t_wire) * i / 128.0;
      curved_ok = bz.curvature(t) <= config.max_curvature;
    }
    if (!curved_ok) continue;

    Curve3D curve;
    curve.points.reserve(config.bodies);
    bool contained = true;
    for (double t : body_params) {
      const Vec3 p = bz.at(t);
      contained = contained && std::abs(p.x()) <= hw && std::abs(p.y()) <= hw &&
                  std::abs(p.z()) <= hw;
      curve.points.push_back(p);
    }
    if (!contained) continue;

    // Dense samples spanning exactly the wire (for the view checks).
    const int dense_count = 200;
    std::vector<double> dense_arcs(dense_count);
    for (int i = 0; i < dense_count; ++i)
      dense_arcs[i] = length - wire_length + wire_length * i / (dense_count - 1);
    const std::vector<double> dense_params = params_at_arcs(bz, dense_arcs);
    if (dense_params.empty()) continue;
    std::vector<Vec3> dense;
    dense.reserve(dense_count);
    for (double t : dense_params) dense.push_back(bz.at(t));

    if (!view_acceptable(dense, config.rig.top, config)) continue;
    if (!view_acceptable(dense, config.rig.side, config)) continue;

    return curve;
  }
  throw RejectionExhausted("no acceptable curve after " + std::to_string(config.max_attempts) +
                           " attempts; generator configuration is infeasible");
}

BinaryMask render_mask(const Curve3D& curve, const CameraModel& cam, double radius_px,
                       Vec2* tip_projection) {
  // Body projections first: bounds failures report the offending body.
  std::vector<Vec2> body_proj(curve.points.size());
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const HomogeneousPoint2 x = project(cam, curve.points[i].homogeneous());
    if (x.z() < 1e-12)
      throw OutOfFrustum("body behind camera at index " + std::to_string(i),
                         static_cast<int>(i));
    body_proj[i] = x.hnormalized();
    if (body_proj[i].x() < 0.0 || body_proj[i].x() > cam.image_width - 1.0 ||
        body_proj[i].y() < 0.0 || body_proj[i].y() > cam.image_height - 1.0)
      throw OutOfFrustum("body projects outside the image at index " + std::to_string(i),
                         static_cast<int>(i));
  }
  if (tip_projection) *tip_projection = body_proj.front();

  const int n = static_cast<int>(curve.points.size());
  std::vector<Vec2> stroke;
  if (n >= 2) {
    const SplineModel spline = fit_spline(curve, 0.0);
    const Curve3D dense = resample_equal_arclength(spline, 10 * n);
    stroke.reserve(dense.points.size());
    for (const Vec3& p : dense.points) stroke.push_back(project_pixel(cam, p));
  } else {
    stroke = body_proj;
  }

  BinaryMask mask = BinaryMask::zeros(cam.image_width, cam.image_height);
  const double r2 = radius_px * radius_px;
  auto stamp_segment = [&](const Vec2& a, const Vec2& b) {
    const int c0 = std::max(0, static_cast<int>(std::floor(std::min(a.x(), b.x()) - radius_px)));
    const int c1 = std::min(mask.width - 1,
                            static_cast<int>(std::ceil(std::max(a.x(), b.x()) + radius_px)));
    const int r0 = std::max(0, static_cast<int>(std::floor(std::min(a.y(), b.y()) - radius_px)));
    const int r1 = std::min(mask.height - 1,
                            static_cast<int>(std::ceil(std::max(a.y(), b.y()) + radius_px)));
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const Vec2 p(c, r);
        double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        if ((p - (a + t * ab)).squaredNorm() <= r2) mask.set(r, c, true);
      }
    }
  };
  if (stroke.size() == 1) {
    stamp_segment(stroke[0], stroke[0]);
  } else {
    for (std::size_t i = 1; i < stroke.size(); ++i) stamp_segment(stroke[i - 1], stroke[i]);
  }
  return mask;
}

namespace {

nlohmann::ordered_json manifest_to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["layout_version"] = m.layout_version;
  j["seed"] = m.seed;
  j["count"] = m.count;
  j["bodies"] = m.bodies;
  j["spacing_m"] = m.spacing_m;
  j["cameras_file"] = m.cameras_file;
  j["samples"] = m.samples;
  return j;
}

std::string sample_dir_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%05d", index);
  return buf;
}

}  // namespace

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << manifest_to_json(manifest).dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    DatasetManifest m;
    m.layout_version = j.at("layout_version").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.count = j.at("count").get<int>();
    m.bodies = j.at("bodies").get<int>();
    m.spacing_m = j.at("spacing_m").get<double>();
    m.cameras_file = j.at("cameras_file").get<std::string>();
    m.samples = j.at("samples").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad manifest " + path.string() + ": " + e.what());
  }
}

DatasetManifest generate_dataset(std::uint64_t seed, int count, const SynthConfig& config,
                                 const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  write_cameras_json(config.rig, out_dir / "cameras.json");

  std::vector<std::string> failures(count);
  parallel_for(count, [&](int i) {
    const std::uint64_t sample_seed = Rng::for_sample(seed, i).next_u64();
    try {
      const Curve3D curve = generate_curve(sample_seed, config);
      Vec2 tip_top, tip_side;
      const BinaryMask top = render_mask(curve, config.rig.top, config.stroke_radius_px, &tip_top);
      const BinaryMask side =
          render_mask(curve, config.rig.side, config.stroke_radius_px, &tip_side);

      const std::filesystem::path dir = out_dir / sample_dir_name(i);
      std::filesystem::create_directories(dir);
      write_pgm(top, dir / "top.pgm");
      write_pgm(side, dir / "side.pgm");
      write_curve_csv(curve, dir / "gt.csv");

      nlohmann::ordered_json meta;
      meta["id"] = i;
      meta["sample_seed"] = sample_seed;
      meta["tip_projections"]["top"] = {tip_top.x(), tip_top.y()};
      meta["tip_projections"]["side"] = {tip_side.x(), tip_side.y()};
      std::ofstream out(dir / "meta.json", std::ios::binary);
      if (!out) throw IoError("cannot write meta.json for sample " + std::to_string(i));
      out << meta.dump(2) << '\n';
    } catch (const std::exception& e) {
      failures[i] = "sample " + std::to_string(i) + ": " + e.what();
    }
  });
  for (const std::string& f : failures)
    if (!f.empty()) throw IoError("dataset generation failed: " + f);

  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.count = count;
  manifest.bodies = config.bodies;
  manifest.spacing_m = config.spacing_m;
  manifest.cameras_file = "cameras.json";
  manifest.samples.reserve(count);
  for (int i = 0; i < count; ++i) manifest.samples.push_back(sample_dir_name(i));
  write_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

GuidewireSample load_sample(const std::filesystem::path& dataset_dir,
                            const DatasetManifest& manifest, int index) {
  if (index < 0 || index >= manifest.count)
    throw std::out_of_range("sample index " + std::to_string(index));
  const std::filesystem::path dir = dataset_dir / manifest.samples[index];

  GuidewireSample s;
  s.id = index;
  s.top_mask = read_pgm(dir / "top.pgm");
  s.side_mask = read_pgm(dir / "side.pgm");
  s.cameras = read_cameras_json(dataset_dir / manifest.cameras_file);
  s.ground_truth = read_curve_csv(dir / "gt.csv");

  std::ifstream in(dir / "meta.json", std::ios::binary);
  if (!in) throw IoError("cannot open: " + (dir / "meta.json").string());
  try {
    nlohmann::json meta;
    in >> meta;
    s.sample_seed = meta.at("sample_seed").get<std::uint64_t>();
    const auto top = meta.at("tip_projections").at("top").get<std::vector<double>>();
    const auto side = meta.at("tip_projections").at("side").get<std::vector<double>>();
    if (top.size() != 2 || side.size() != 2) throw ParseError("tip projections must be [u, v]");
    s.tip_top = Vec2(top[0], top[1]);
    s.tip_side = Vec2(side[0], side[1]);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad meta.json in " + dir.string() + ": " + e.what());
  }
  return s;
}

std::vector<GuidewireSample> load_dataset(const std::filesystem::path& dataset_dir) {
  const DatasetManifest manifest = read_manifest(dataset_dir / "manifest.json");
  const CameraRig rig = read_cameras_json(dataset_dir / manifest.cameras_file);
  std::vector<GuidewireSample> samples(manifest.count);
  parallel_for(manifest.count, [&](int i) {
    samples[i] = load_sample(dataset_dir, manifest, i);
    samples[i].cameras = rig;
  });
  return samples;
}

}  // namespace fluoro
