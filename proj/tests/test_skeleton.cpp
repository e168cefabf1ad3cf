#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <set>

#include "fluoro/rng.hpp"
#include "fluoro/skeleton.hpp"

using namespace fluoro;

namespace {

BinaryMask from_rows(const std::vector<std::string>& rows) {
  BinaryMask m = BinaryMask::zeros(static_cast<int>(rows[0].size()), static_cast<int>(rows.size()));
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c) m.set(r, c, rows[r][c] != '.');
  return m;
}

bool subset_of(const BinaryMask& a, const BinaryMask& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] && !b.data[i]) return false;
  return true;
}

// Random blob: union of a few discs plus a couple of random strokes.
BinaryMask random_blob(Rng& rng, int size) {
  BinaryMask m = BinaryMask::zeros(size, size);
  const int discs = rng.uniform_int(1, 4);
  for (int d = 0; d < discs; ++d) {
    const int cr = rng.uniform_int(2, size - 3);
    const int cc = rng.uniform_int(2, size - 3);
    const int radius = rng.uniform_int(1, std::max(2, size / 6));
    for (int r = std::max(0, cr - radius); r <= std::min(size - 1, cr + radius); ++r)
      for (int c = std::max(0, cc - radius); c <= std::min(size - 1, cc + radius); ++c)
        if ((r - cr) * (r - cr) + (c - cc) * (c - cc) <= radius * radius) m.set(r, c, true);
  }
  const int strokes = rng.uniform_int(0, 2);
  for (int s = 0; s < strokes; ++s) {
    int r = rng.uniform_int(1, size - 2);
    int c = rng.uniform_int(1, size - 2);
    const int steps = rng.uniform_int(3, 2 * size);
    for (int i = 0; i < steps; ++i) {
      m.set(r, c, true);
      r = std::clamp(r + rng.uniform_int(-1, 1), 0, size - 1);
      c = std::clamp(c + rng.uniform_int(-1, 1), 0, size - 1);
    }
  }
  return m;
}

// Exhaustive simple-path enumeration oracle. The backbone between a pair of
// endpoints is its cheapest connection (cycles offer detours we must not
// take), and the canonical path maximizes that over endpoint pairs.
double longest_path_bruteforce(const BinaryMask& skel) {
  const auto endpoints = find_endpoints(skel);
  std::map<std::pair<std::pair<int, int>, std::pair<int, int>>, double> pair_best;
  std::set<std::pair<int, int>> visited;
  const double kSqrt2 = std::sqrt(2.0);
  std::pair<int, int> origin;

  std::function<void(int, int, double)> dfs = [&](int r, int c, double len) {
    if (len > 0.0 &&
        std::find(endpoints.begin(), endpoints.end(), std::make_pair(r, c)) != endpoints.end()) {
      const auto key = std::make_pair(origin, std::make_pair(r, c));
      auto it = pair_best.find(key);
      if (it == pair_best.end() || len < it->second) pair_best[key] = len;
    }
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        const int rr = r + dr, cc = c + dc;
        if (!skel.in_bounds(rr, cc) || !skel.at(rr, cc) || visited.count({rr, cc})) continue;
        visited.insert({rr, cc});
        dfs(rr, cc, len + ((dr != 0 && dc != 0) ? kSqrt2 : 1.0));
        visited.erase({rr, cc});
      }
    }
  };

  for (const auto& ep : endpoints) {
    origin = ep;
    visited.clear();
    visited.insert(ep);
    dfs(ep.first, ep.second, 0.0);
  }
  double best = -1.0;
  for (const auto& [key, len] : pair_best) best = std::max(best, len);
  return best;
}

double path_arc_length(const PixelPath& p) {
  double len = 0.0;
  for (std::size_t i = 1; i < p.points.size(); ++i) {
    const int dr = std::abs(p.points[i].first - p.points[i - 1].first);
    const int dc = std::abs(p.points[i].second - p.points[i - 1].second);
    len += (dr && dc) ? std::sqrt(2.0) : 1.0;
  }
  return len;
}

}  // namespace

TEST_CASE("thin: empty mask is a fixed point") {
  const BinaryMask empty = BinaryMask::zeros(16, 16);
  CHECK(thin(empty) == empty);
}

TEST_CASE("thin: 1-px diagonal is unchanged") {
  BinaryMask m = BinaryMask::zeros(16, 16);
  for (int i = 2; i < 12; ++i) m.set(i, i, true);
  CHECK(thin(m) == m);
}

TEST_CASE("thin: 3-px thick bar becomes a single-pixel-wide path of similar length") {
  BinaryMask m = BinaryMask::zeros(30, 10);
  for (int r = 4; r < 7; ++r)
    for (int c = 3; c < 23; ++c) m.set(r, c, true);
  const BinaryMask skel = thin(m);
  // Width oracle: at most one pixel per column, length within endpoint erosion.
  int occupied_cols = 0;
  for (int c = 0; c < skel.width; ++c) {
    int per_col = 0;
    for (int r = 0; r < skel.height; ++r) per_col += skel.at(r, c) ? 1 : 0;
    CHECK(per_col <= 1);
    occupied_cols += per_col > 0 ? 1 : 0;
  }
  CHECK(occupied_cols >= 18);
  CHECK(occupied_cols <= 20);
  CHECK(subset_of(skel, m));
}

TEST_CASE("thin: idempotent, subset, and component preserving on random blobs") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const BinaryMask m = random_blob(rng, 24);
    const BinaryMask s = thin(m);
    CHECK(thin(s) == s);
    CHECK(subset_of(s, m));
    CHECK(count_components8(s) == count_components8(m));
  }
}

TEST_CASE("find_endpoints: straight segment has exactly its two ends") {
  BinaryMask m = BinaryMask::zeros(10, 10);
  for (int c = 2; c <= 7; ++c) m.set(4, c, true);
  const auto eps = find_endpoints(m);
  REQUIRE(eps.size() == 2);
  CHECK(eps[0] == std::make_pair(4, 2));
  CHECK(eps[1] == std::make_pair(4, 7));
}

TEST_CASE("find_endpoints: ring has none") {
  const BinaryMask ring = from_rows({
      "........",
      ".XXXXX..",
      ".X...X..",
      ".X...X..",
      ".XXXXX..",
      "........",
  });
  CHECK(find_endpoints(ring).empty());
  CHECK(find_endpoints(BinaryMask::zeros(4, 4)).empty());
}

TEST_CASE("find_endpoints: spur adds a third endpoint, matching a neighbor-count oracle") {
  const BinaryMask m = from_rows({
      "..........",
      ".XXXXXXXX.",
      ".....X....",
      ".....X....",
      "..........",
  });
  const auto eps = find_endpoints(m);
  CHECK(eps.size() == 3);
  // Oracle: recount neighbors for every foreground pixel.
  int expected = 0;
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      if (!m.at(r, c)) continue;
      int n = 0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc)
          if ((dr || dc) && m.in_bounds(r + dr, c + dc) && m.at(r + dr, c + dc)) ++n;
      expected += n == 1 ? 1 : 0;
    }
  }
  CHECK(static_cast<int>(eps.size()) == expected);
}

TEST_CASE("longest_path: full path on a simple chain") {
  BinaryMask m = BinaryMask::zeros(10, 10);
  for (int c = 1; c <= 8; ++c) m.set(5, c, true);
  const PixelPath p = longest_path(m);
  REQUIRE(p.points.size() == 8);
  CHECK(p.points.front() == std::make_pair(5, 1));
  CHECK(p.points.back() == std::make_pair(5, 8));
}

TEST_CASE("longest_path: T-shape picks the arm-to-arm route") {
  // Horizontal arms of 10+10 pixels, stem of 3.
  BinaryMask m = BinaryMask::zeros(25, 12);
  for (int c = 1; c <= 21; ++c) m.set(2, c, true);
  for (int r = 3; r <= 5; ++r) m.set(r, 11, true);
  const PixelPath p = longest_path(m);
  CHECK(p.points.front() == std::make_pair(2, 1));
  CHECK(p.points.back() == std::make_pair(2, 21));
  CHECK(path_arc_length(p) == doctest::Approx(20.0));
}

TEST_CASE("longest_path: single pixel degenerates to a one-point path") {
  BinaryMask m = BinaryMask::zeros(5, 5);
  m.set(2, 3, true);
  const PixelPath p = longest_path(m);
  REQUIRE(p.points.size() == 1);
  CHECK(p.points[0] == std::make_pair(2, 3));
}

TEST_CASE("longest_path: cycle and multi-component errors") {
  const BinaryMask ring = from_rows({
      "......",
      ".XXXX.",
      ".X..X.",
      ".XXXX.",
      "......",
  });
  CHECK_THROWS_AS(longest_path(ring), NoEndpoints);

  BinaryMask two = BinaryMask::zeros(8, 8);
  two.set(1, 1, true);
  two.set(1, 2, true);
  two.set(6, 6, true);
  two.set(6, 7, true);
  CHECK_THROWS_AS(longest_path(two), MultipleComponents);
}

TEST_CASE("longest_path: matches brute-force enumeration on small thinned blobs") {
  Rng rng(99);
  int tested = 0;
  for (int trial = 0; trial < 400 && tested < 150; ++trial) {
    const BinaryMask skel = thin(random_blob(rng, 12));
    if (skel.foreground_count() < 2 || count_components8(skel) != 1) continue;
    if (find_endpoints(skel).size() < 2) continue;  // cycles have no backbone
    ++tested;
    const double expected = longest_path_bruteforce(skel);
    const PixelPath p = longest_path(skel);
    CHECK(path_arc_length(p) == doctest::Approx(expected).epsilon(1e-9));
  }
  CHECK(tested >= 50);
}

TEST_CASE("sample_backbone: straight path endpoints at n=2") {
  PixelPath p;
  for (int c = 0; c <= 10; ++c) p.points.emplace_back(3, c);
  const auto samples = sample_backbone(p, 2);
  REQUIRE(samples.size() == 2);
  CHECK((samples[0] - Vec2(0, 3)).norm() == 0.0);
  CHECK((samples[1] - Vec2(10, 3)).norm() == 0.0);
}

TEST_CASE("sample_backbone: uniform arc positions on a straight path") {
  PixelPath p;
  for (int c = 0; c <= 9; ++c) p.points.emplace_back(0, c);
  const auto samples = sample_backbone(p, 10);
  REQUIRE(samples.size() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(samples[i].x() == doctest::Approx(static_cast<double>(i)).epsilon(1e-12));
    CHECK(samples[i].y() == doctest::Approx(0.0));
  }
}

TEST_CASE("sample_backbone: equal arc gaps on an L-shaped path") {
  PixelPath p;
  for (int c = 0; c <= 7; ++c) p.points.emplace_back(0, c);
  for (int r = 1; r <= 5; ++r) p.points.emplace_back(r, 7);
  const auto samples = sample_backbone(p, 9);

  // Cumulative-arc-length oracle: locate each sample on the path and read
  // off its arc position, then require equal gaps.
  auto arc_position = [&](const Vec2& s) {
    double cum = 0.0;
    for (std::size_t i = 1; i < p.points.size(); ++i) {
      const Vec2 a(p.points[i - 1].second, p.points[i - 1].first);
      const Vec2 b(p.points[i].second, p.points[i].first);
      const double seg = (b - a).norm();
      const double t = (s - a).dot(b - a) / (seg * seg);
      if (t >= -1e-12 && t <= 1.0 + 1e-12 && (s - (a + t * (b - a))).norm() < 1e-9)
        return cum + t * seg;
      cum += seg;
    }
    return -1.0;
  };
  std::vector<double> arcs;
  for (const Vec2& s : samples) {
    const double a = arc_position(s);
    REQUIRE(a >= 0.0);
    arcs.push_back(a);
  }
  const double gap0 = arcs[1] - arcs[0];
  for (std::size_t i = 1; i < arcs.size(); ++i)
    CHECK(arcs[i] - arcs[i - 1] == doctest::Approx(gap0).epsilon(1e-9));
}

TEST_CASE("sample_backbone: rejects degenerate requests") {
  PixelPath p;
  p.points.emplace_back(0, 0);
  CHECK_THROWS_AS(sample_backbone(p, 2), PathTooShort);
  p.points.emplace_back(0, 1);
  CHECK_THROWS_AS(sample_backbone(p, 1), PathTooShort);
}

TEST_CASE("orient_distal_first: tip hint wins") {
  PixelPath p;
  for (int c = 0; c <= 10; ++c) p.points.emplace_back(5, c);
  const PixelPath oriented = orient_distal_first(p, Vec2(10, 5), 80, 80);
  CHECK(oriented.points.front() == std::make_pair(5, 10));
  const PixelPath kept = orient_distal_first(p, Vec2(0, 5), 80, 80);
  CHECK(kept.points.front() == std::make_pair(5, 0));
}

TEST_CASE("orient_distal_first: border rule picks the interior end") {
  PixelPath p;
  for (int c = 1; c <= 40; ++c) p.points.emplace_back(40, c);  // from border toward center
  const PixelPath oriented = orient_distal_first(p, std::nullopt, 80, 80);
  CHECK(oriented.points.front() == std::make_pair(40, 40));
}

TEST_CASE("pgm round trip preserves the mask") {
  Rng rng(4);
  const BinaryMask m = random_blob(rng, 33);
  const auto path = std::filesystem::temp_directory_path() / "fluoro_test_mask.pgm";
  write_pgm(m, path);
  CHECK(read_pgm(path) == m);
  std::filesystem::remove(path);
}
