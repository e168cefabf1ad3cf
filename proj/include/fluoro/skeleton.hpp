#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fluoro/common.hpp"

namespace fluoro {

struct NoEndpoints : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MultipleComponents : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PathTooShort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// 2D binary occupancy grid, row-major, foreground = guidewire.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // 0 or 1

  static BinaryMask zeros(int width, int height) {
    BinaryMask m;
    m.width = width;
    m.height = height;
    m.data.assign(static_cast<std::size_t>(width) * height, 0);
    return m;
  }

  bool in_bounds(int r, int c) const { return r >= 0 && r < height && c >= 0 && c < width; }
  bool at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c] != 0; }
  void set(int r, int c, bool v) { data[static_cast<std::size_t>(r) * width + c] = v ? 1 : 0; }

  int foreground_count() const;
  bool operator==(const BinaryMask&) const = default;
};

// Ordered pixel chain; consecutive points are 8-neighbors, no repeats.
struct PixelPath {
  std::vector<std::pair<int, int>> points;  // (row, col)
};

// Binary PGM (P5), 8-bit: background 0, foreground 255. On read any nonzero
// pixel counts as foreground.
void write_pgm(const BinaryMask& mask, const std::filesystem::path& path);
BinaryMask read_pgm(const std::filesystem::path& path);

// Guo-Hall two-subiteration parallel thinning, 8-connectivity, iterated to a
// fixed point. Output foreground is a subset of the input's.
BinaryMask thin(const BinaryMask& mask);

// Foreground pixels with exactly one foreground 8-neighbor, row-major order.
std::vector<std::pair<int, int>> find_endpoints(const BinaryMask& skel);

// Number of 8-connected foreground components.
int count_components8(const BinaryMask& mask);

// Maximum-arc-length simple path between skeleton endpoints, found by
// shortest-path search (axial step 1, diagonal sqrt(2)) from every endpoint.
// Length ties pick the path whose start pixel is lexicographically smallest
// (row, then col). A single-pixel skeleton yields a one-point path.
PixelPath longest_path(const BinaryMask& skel);

// n points equally spaced in pixel arc length along the path, as subpixel
// (u, v) = (col, row) coordinates; index 0 sits on the path start.
std::vector<Vec2> sample_backbone(const PixelPath& path, int n);

// Orders the path tip-first. With a tip hint, the end nearer the hint (in
// pixels) becomes index 0; otherwise the end farther from the image border is
// taken as distal, since the wire enters the frame at the insertion edge.
PixelPath orient_distal_first(const PixelPath& path, const std::optional<Vec2>& tip_hint,
                              int image_width, int image_height);

}  // namespace fluoro
