#include "fluoro/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>

namespace fluoro {

int BinaryMask::foreground_count() const {
  int n = 0;
  for (std::uint8_t v : data) n += (v != 0);
  return n;
}

void write_pgm(const BinaryMask& mask, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  std::vector<char> row(mask.width);
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) row[c] = mask.at(r, c) ? '\xff' : '\0';
    out.write(row.data(), row.size());
  }
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

int next_pgm_token(std::istream& in) {
  // Skips whitespace and '#' comment lines between header tokens.
  for (;;) {
    const int ch = in.peek();
    if (ch == std::char_traits<char>::eof()) break;
    if (ch == '#') {
      std::string junk;
      std::getline(in, junk);
    } else if (std::isspace(static_cast<unsigned char>(ch))) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  return value;
}

}  // namespace

BinaryMask read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '5') throw ParseError("not a P5 PGM: " + path.string());
  const int width = next_pgm_token(in);
  const int height = next_pgm_token(in);
  const int maxval = next_pgm_token(in);
  if (width < 1 || height < 1 || maxval < 1 || maxval > 255)
    throw ParseError("bad PGM header in " + path.string());
  in.get();  // single whitespace after maxval
  std::vector<char> raw(static_cast<std::size_t>(width) * height);
  in.read(raw.data(), raw.size());
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw ParseError("truncated PGM data in " + path.string());
  BinaryMask mask = BinaryMask::zeros(width, height);
  for (std::size_t i = 0; i < raw.size(); ++i) mask.data[i] = raw[i] != 0 ? 1 : 0;
  return mask;
}

namespace {

// Neighborhood for thinning, clockwise from north:
//   p9 p2 p3
//   p8  . p4
//   p7 p6 p5
struct Neighborhood {
  int p2, p3, p4, p5, p6, p7, p8, p9;
};

inline Neighborhood neighbors_of(const BinaryMask& m, int r, int c) {
  auto get = [&](int rr, int cc) -> int { return m.in_bounds(rr, cc) && m.at(rr, cc) ? 1 : 0; };
  return {get(r - 1, c),     get(r - 1, c + 1), get(r, c + 1), get(r + 1, c + 1),
          get(r + 1, c),     get(r + 1, c - 1), get(r, c - 1), get(r - 1, c - 1)};
}

bool guo_hall_deletable(const Neighborhood& n, int subiter) {
  const int c = ((1 - n.p2) & (n.p3 | n.p4)) + ((1 - n.p4) & (n.p5 | n.p6)) +
                ((1 - n.p6) & (n.p7 | n.p8)) + ((1 - n.p8) & (n.p9 | n.p2));
  const int n1 = (n.p9 | n.p2) + (n.p3 | n.p4) + (n.p5 | n.p6) + (n.p7 | n.p8);
  const int n2 = (n.p2 | n.p3) + (n.p4 | n.p5) + (n.p6 | n.p7) + (n.p8 | n.p9);
  const int nmin = std::min(n1, n2);
  const int m = subiter == 0 ? ((n.p6 | n.p7 | (1 - n.p9)) & n.p8)
                             : ((n.p2 | n.p3 | (1 - n.p5)) & n.p4);
  return c == 1 && nmin >= 2 && nmin <= 3 && m == 0;
}

}  // namespace

BinaryMask thin(const BinaryMask& mask) {
  BinaryMask skel = mask;
  std::vector<std::pair<int, int>> to_delete;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int subiter = 0; subiter < 2; ++subiter) {
      to_delete.clear();
      for (int r = 0; r < skel.height; ++r) {
        for (int c = 0; c < skel.width; ++c) {
          if (!skel.at(r, c)) continue;
          if (guo_hall_deletable(neighbors_of(skel, r, c), subiter)) to_delete.emplace_back(r, c);
        }
      }
      for (const auto& [r, c] : to_delete) skel.set(r, c, false);
      changed = changed || !to_delete.empty();
    }
  }
  return skel;
}

namespace {

constexpr int kDr[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
constexpr int kDc[8] = {-1, 0, 1, -1, 1, -1, 0, 1};

int neighbor_count(const BinaryMask& m, int r, int c) {
  int n = 0;
  for (int k = 0; k < 8; ++k) {
    const int rr = r + kDr[k], cc = c + kDc[k];
    if (m.in_bounds(rr, cc) && m.at(rr, cc)) ++n;
  }
  return n;
}

}  // namespace

std::vector<std::pair<int, int>> find_endpoints(const BinaryMask& skel) {
  std::vector<std::pair<int, int>> endpoints;
  for (int r = 0; r < skel.height; ++r)
    for (int c = 0; c < skel.width; ++c)
      if (skel.at(r, c) && neighbor_count(skel, r, c) == 1) endpoints.emplace_back(r, c);
  return endpoints;
}

int count_components8(const BinaryMask& mask) {
  std::vector<std::uint8_t> seen(mask.data.size(), 0);
  int components = 0;
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      const std::size_t idx = static_cast<std::size_t>(r) * mask.width + c;
      if (!mask.at(r, c) || seen[idx]) continue;
      ++components;
      seen[idx] = 1;
      stack.assign(1, {r, c});
      while (!stack.empty()) {
        const auto [pr, pc] = stack.back();
        stack.pop_back();
        for (int k = 0; k < 8; ++k) {
          const int rr = pr + kDr[k], cc = pc + kDc[k];
          if (!mask.in_bounds(rr, cc) || !mask.at(rr, cc)) continue;
          const std::size_t nidx = static_cast<std::size_t>(rr) * mask.width + cc;
          if (!seen[nidx]) {
            seen[nidx] = 1;
            stack.emplace_back(rr, cc);
          }
        }
      }
    }
  }
  return components;
}

namespace {

struct DijkstraResult {
  std::vector<double> dist;
  std::vector<int> parent;
};

DijkstraResult shortest_paths_from(const BinaryMask& skel, int start_r, int start_c) {
  const std::size_t n = skel.data.size();
  DijkstraResult res;
  res.dist.assign(n, std::numeric_limits<double>::infinity());
  res.parent.assign(n, -1);
  using Item = std::tuple<double, int, int>;  // (dist, row, col); full tuple order keeps pops deterministic
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
  const int w = skel.width;
  res.dist[static_cast<std::size_t>(start_r) * w + start_c] = 0.0;
  pq.emplace(0.0, start_r, start_c);
  const double kSqrt2 = std::sqrt(2.0);
  while (!pq.empty()) {
    const auto [d, r, c] = pq.top();
    pq.pop();
    const int idx = r * w + c;
    if (d > res.dist[idx]) continue;
    for (int k = 0; k < 8; ++k) {
      const int rr = r + kDr[k], cc = c + kDc[k];
      if (!skel.in_bounds(rr, cc) || !skel.at(rr, cc)) continue;
      const double step = (kDr[k] != 0 && kDc[k] != 0) ? kSqrt2 : 1.0;
      const int nidx = rr * w + cc;
      if (d + step < res.dist[nidx] - 1e-12) {
        res.dist[nidx] = d + step;
        res.parent[nidx] = idx;
        pq.emplace(res.dist[nidx], rr, cc);
      }
    }
  }
  return res;
}

}  // namespace

PixelPath longest_path(const BinaryMask& skel) {
  const int fg = skel.foreground_count();
  if (fg == 0) throw NoEndpoints("empty skeleton");
  if (count_components8(skel) > 1) throw MultipleComponents("skeleton has multiple components");
  if (fg == 1) {
    for (int r = 0; r < skel.height; ++r)
      for (int c = 0; c < skel.width; ++c)
        if (skel.at(r, c)) return PixelPath{{{r, c}}};
  }

  const auto endpoints = find_endpoints(skel);
  if (endpoints.empty()) throw NoEndpoints("skeleton is a cycle");
  if (endpoints.size() == 1)
    throw NoEndpoints("only one endpoint (cyclic component with a spur)");

  double best_dist = -1.0;
  std::pair<int, int> best_start{-1, -1}, best_end{-1, -1};
  std::vector<int> best_parent;
  const int w = skel.width;
  for (const auto& [sr, sc] : endpoints) {
    const DijkstraResult res = shortest_paths_from(skel, sr, sc);
    for (const auto& [er, ec] : endpoints) {
      if (er == sr && ec == sc) continue;
      const double d = res.dist[static_cast<std::size_t>(er) * w + ec];
      if (!std::isfinite(d)) continue;
      const bool better =
          d > best_dist + 1e-9 ||
          (std::abs(d - best_dist) <= 1e-9 &&
           std::make_pair(std::make_pair(sr, sc), std::make_pair(er, ec)) <
               std::make_pair(best_start, best_end));
      if (better) {
        best_dist = d;
        best_start = {sr, sc};
        best_end = {er, ec};
        best_parent = res.parent;
      }
    }
  }
  if (best_dist < 0.0) throw NoEndpoints("no endpoint-to-endpoint path found");

  PixelPath path;
  int idx = best_end.first * w + best_end.second;
  while (idx >= 0) {
    path.points.emplace_back(idx / w, idx % w);
    idx = best_parent[idx];
  }
  std::reverse(path.points.begin(), path.points.end());
  return path;
}

std::vector<Vec2> sample_backbone(const PixelPath& path, int n) {
  if (n < 2) throw PathTooShort("need at least 2 samples");
  if (path.points.size() < 2) throw PathTooShort("path must contain at least 2 pixels");

  std::vector<double> cum(path.points.size(), 0.0);
  for (std::size_t i = 1; i < path.points.size(); ++i) {
    const double dr = path.points[i].first - path.points[i - 1].first;
    const double dc = path.points[i].second - path.points[i - 1].second;
    cum[i] = cum[i - 1] + std::sqrt(dr * dr + dc * dc);
  }
  const double total = cum.back();

  std::vector<Vec2> samples(n);
  std::size_t seg = 0;
  for (int i = 0; i < n; ++i) {
    const double target = total * i / (n - 1);
    while (seg + 2 < cum.size() && cum[seg + 1] < target) ++seg;
    const double seg_len = cum[seg + 1] - cum[seg];
    const double t = seg_len > 0.0 ? (target - cum[seg]) / seg_len : 0.0;
    const auto& a = path.points[seg];
    const auto& b = path.points[seg + 1];
    const double row = a.first + t * (b.first - a.first);
    const double col = a.second + t * (b.second - a.second);
    samples[i] = Vec2(col, row);  // (u, v)
  }
  samples.front() = Vec2(path.points.front().second, path.points.front().first);
  samples.back() = Vec2(path.points.back().second, path.points.back().first);
  return samples;
}

PixelPath orient_distal_first(const PixelPath& path, const std::optional<Vec2>& tip_hint,
                              int image_width, int image_height) {
  if (path.points.size() < 2) return path;
  const auto& head = path.points.front();
  const auto& tail = path.points.back();

  bool reverse = false;
  if (tip_hint) {
    auto dist2 = [&](const std::pair<int, int>& p) {
      const double du = p.second - tip_hint->x();
      const double dv = p.first - tip_hint->y();
      return du * du + dv * dv;
    };
    reverse = dist2(tail) < dist2(head);
  } else {
    auto border_distance = [&](const std::pair<int, int>& p) {
      return std::min(std::min(p.first, image_height - 1 - p.first),
                      std::min(p.second, image_width - 1 - p.second));
    };
    // Farther from the border means distal.
    reverse = border_distance(tail) > border_distance(head);
  }

  if (!reverse) return path;
  PixelPath flipped = path;
  std::reverse(flipped.points.begin(), flipped.points.end());
  return flipped;
}

}  // namespace fluoro
