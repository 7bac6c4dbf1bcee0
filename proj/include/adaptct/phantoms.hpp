#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "adaptct/core.hpp"
#include "adaptct/rng.hpp"

namespace adaptct {

enum class ShapeKind : std::uint8_t { circle = 0, ellipse = 1, triangle = 2, pentagon = 3, hexagon = 4 };

inline constexpr std::array<std::string_view, 5> kShapeNames{"circle", "ellipse", "triangle", "pentagon", "hexagon"};

inline std::string_view to_string(ShapeKind kind) { return kShapeNames.at(static_cast<std::size_t>(kind)); }

inline ShapeKind parse_shape_kind(std::string_view name) {
  for (std::size_t i = 0; i < kShapeNames.size(); ++i)
    if (kShapeNames[i] == name) return static_cast<ShapeKind>(i);
  throw ConfigError("unknown shape kind '" + std::string(name) + "'");
}

/// Geometry of one phantom. Coordinates are continuous pixel units in which
/// the center of pixel (row i, column j) sits at (x = j, y = i).
struct ShapeSpec {
  ShapeKind kind = ShapeKind::circle;
  double rotation_deg = 0.0;
  double scale = 0.3;  // circumradius as a fraction of the image half-width
  double center_x = 0.0;
  double center_y = 0.0;
  double aspect = 0.5;  // ellipse minor/major ratio

  friend bool operator==(const ShapeSpec&, const ShapeSpec&) = default;
};

inline double circumradius_px(const ShapeSpec& spec, int image_size) { return spec.scale * image_size / 2.0; }

/// Vertices of polygonal shapes in image coordinates, counter-clockwise in
/// the (x, y) frame. Empty for circles and ellipses.
inline std::vector<std::pair<double, double>> shape_vertices(const ShapeSpec& spec, int image_size) {
  const double r = circumradius_px(spec, image_size);
  std::vector<std::pair<double, double>> local;
  switch (spec.kind) {
    case ShapeKind::circle:
    case ShapeKind::ellipse:
      return {};
    case ShapeKind::triangle:
      // Right-isosceles: hypotenuse is a diameter of the circumcircle.
      local = {{-r, 0.0}, {r, 0.0}, {0.0, r}};
      break;
    case ShapeKind::pentagon:
    case ShapeKind::hexagon: {
      const int sides = spec.kind == ShapeKind::pentagon ? 5 : 6;
      for (int k = 0; k < sides; ++k) {
        const double phi = std::numbers::pi / 2 + 2 * std::numbers::pi * k / sides;
        local.emplace_back(r * std::cos(phi), r * std::sin(phi));
      }
      break;
    }
  }
  const double rot = spec.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(rot), s = std::sin(rot);
  std::vector<std::pair<double, double>> out;
  out.reserve(local.size());
  for (auto [x, y] : local) out.emplace_back(spec.center_x + c * x - s * y, spec.center_y + s * x + c * y);
  return out;
}

/// True iff point (x, y) lies inside the closed shape.
inline bool shape_contains(const ShapeSpec& spec, int image_size, double x, double y) {
  const double r = circumradius_px(spec, image_size);
  const double dx = x - spec.center_x, dy = y - spec.center_y;
  switch (spec.kind) {
    case ShapeKind::circle:
      return dx * dx + dy * dy <= r * r;
    case ShapeKind::ellipse: {
      const double rot = spec.rotation_deg * std::numbers::pi / 180.0;
      const double c = std::cos(rot), s = std::sin(rot);
      const double u = (dx * c + dy * s) / r;
      const double v = (-dx * s + dy * c) / (r * spec.aspect);
      return u * u + v * v <= 1.0;
    }
    default: {
      const auto verts = shape_vertices(spec, image_size);
      for (std::size_t k = 0; k < verts.size(); ++k) {
        const auto [x0, y0] = verts[k];
        const auto [x1, y1] = verts[(k + 1) % verts.size()];
        if ((x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) < 0.0) return false;
      }
      return true;
    }
  }
}

/// Axis-aligned extent {x_min, x_max, y_min, y_max} of the continuous shape.
inline std::array<double, 4> shape_extent(const ShapeSpec& spec, int image_size) {
  const double r = circumradius_px(spec, image_size);
  if (spec.kind == ShapeKind::circle)
    return {spec.center_x - r, spec.center_x + r, spec.center_y - r, spec.center_y + r};
  if (spec.kind == ShapeKind::ellipse) {
    const double rot = spec.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(rot), s = std::sin(rot), b = r * spec.aspect;
    const double hx = std::sqrt(r * r * c * c + b * b * s * s);
    const double hy = std::sqrt(r * r * s * s + b * b * c * c);
    return {spec.center_x - hx, spec.center_x + hx, spec.center_y - hy, spec.center_y + hy};
  }
  std::array<double, 4> ext{1e300, -1e300, 1e300, -1e300};
  for (auto [x, y] : shape_vertices(spec, image_size)) {
    ext[0] = std::min(ext[0], x);
    ext[1] = std::max(ext[1], x);
    ext[2] = std::min(ext[2], y);
    ext[3] = std::max(ext[3], y);
  }
  return ext;
}

inline void validate_shape(const ShapeSpec& spec, int image_size) {
  if (image_size <= 0) throw DomainError("image_size must be positive");
  if (!(spec.scale > 0.0 && spec.scale <= 1.0)) throw DomainError("shape scale must lie in (0,1]");
  if (!(spec.rotation_deg >= 0.0 && spec.rotation_deg < 180.0)) throw DomainError("rotation_deg must lie in [0,180)");
  if (spec.kind == ShapeKind::ellipse && !(spec.aspect > 0.0 && spec.aspect <= 1.0))
    throw DomainError("ellipse aspect must lie in (0,1]");
  static constexpr std::array<const char*, 4> names{"x_min", "x_max", "y_min", "y_max"};
  const auto ext = shape_extent(spec, image_size);
  const double lo = -0.5, hi = image_size - 0.5;
  for (std::size_t k = 0; k < 4; ++k) {
    const bool ok = (k % 2 == 0) ? ext[k] >= lo : ext[k] <= hi;
    if (!ok)
      throw DomainError(std::string("shape out of bounds: ") + names[k] + " = " + std::to_string(ext[k]) +
                        " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

/// Keeps the largest 4-connected foreground component (first in scan order
/// on ties) and clears the rest.
inline void keep_largest_component(Image& img) {
  const int n = img.side;
  std::vector<int> label(img.size(), 0);
  std::vector<int> sizes{0};
  std::vector<int> stack;
  for (int start = 0; start < n * n; ++start) {
    if (img.pixels[start] != 1.0 || label[start]) continue;
    const int id = static_cast<int>(sizes.size());
    sizes.push_back(0);
    stack.assign(1, start);
    label[start] = id;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++sizes[id];
      const int i = p / n, j = p % n;
      const int nb[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[1] < 0 || q[0] >= n || q[1] >= n) continue;
        const int k = q[0] * n + q[1];
        if (img.pixels[k] == 1.0 && !label[k]) {
          label[k] = id;
          stack.push_back(k);
        }
      }
    }
  }
  if (sizes.size() <= 2) return;
  const int keep = static_cast<int>(std::max_element(sizes.begin() + 1, sizes.end()) - sizes.begin());
  for (std::size_t k = 0; k < img.size(); ++k)
    if (label[k] != keep) img.pixels[k] = 0.0;
}

/// Binary rasterization by pixel-center inclusion. Sharp corners (the 45
/// degree tips of the triangle) can leave pixels that touch the body only
/// diagonally; such detached fragments are dropped so every phantom is a
/// single 4-connected region.
inline Image rasterize_shape(const ShapeSpec& spec, int image_size) {
  validate_shape(spec, image_size);
  Image img(image_size);
  for (int i = 0; i < image_size; ++i)
    for (int j = 0; j < image_size; ++j)
      if (shape_contains(spec, image_size, j, i)) img(i, j) = 1.0;
  keep_largest_component(img);
  return img;
}

inline double wrap180(double deg) {
  double w = std::fmod(deg, 180.0);
  if (w < 0.0) w += 180.0;
  return w;
}

/// Smallest distance between two directions, in degrees, modulo 180.
inline double circular_distance180(double a, double b) {
  const double d = wrap180(a - b);
  return std::min(d, 180.0 - d);
}

/// Directions (degrees mod 180) carrying the shape's preferential
/// information: the major axis of an ellipse, the edge directions of a
/// polygon. Circles have none.
inline std::optional<std::vector<double>> informative_angles(const ShapeSpec& spec, int image_size) {
  if (spec.kind == ShapeKind::circle) return std::nullopt;
  if (spec.kind == ShapeKind::ellipse) return std::vector<double>{wrap180(spec.rotation_deg)};
  std::vector<double> out;
  const auto verts = shape_vertices(spec, image_size);
  for (std::size_t k = 0; k < verts.size(); ++k) {
    const auto [x0, y0] = verts[k];
    const auto [x1, y1] = verts[(k + 1) % verts.size()];
    const double dir = wrap180(std::atan2(y1 - y0, x1 - x0) * 180.0 / std::numbers::pi);
    const bool seen = std::any_of(out.begin(), out.end(), [&](double a) { return circular_distance180(a, dir) < 1e-9; });
    if (!seen) out.push_back(dir);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<double> default_rotation_grid() {
  std::vector<double> grid;
  for (int k = 0; k < 36; ++k) grid.push_back(5.0 * k);
  return grid;
}

/// Rotations halfway between consecutive entries of a sorted grid, with the
/// last gap wrapping around through 180 degrees.
inline std::vector<double> ood_rotation_split(const std::vector<double>& train_grid) {
  if (train_grid.empty()) throw DomainError("rotation grid is empty");
  std::vector<double> out;
  out.reserve(train_grid.size());
  for (std::size_t k = 0; k < train_grid.size(); ++k) {
    const double a = train_grid[k];
    const double b = k + 1 < train_grid.size() ? train_grid[k + 1] : train_grid.front() + 180.0;
    out.push_back(wrap180(0.5 * (a + b)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct DatasetSpec {
  std::vector<ShapeKind> shape_kinds{ShapeKind::ellipse};
  int count = 3000;
  std::vector<double> rotation_grid = default_rotation_grid();
  std::pair<double, double> scale_range{0.25, 0.40};
  std::pair<double, double> shift_range{-0.10, 0.10};  // fraction of image size, per axis
  double ellipse_aspect = 0.5;
  int image_size = 128;
  std::uint64_t seed = 1;
};

struct Phantom {
  Image image;
  ShapeSpec spec;
};

/// Draws the ShapeSpec of record `index`; a pure function of (spec.seed, index).
inline ShapeSpec sample_shape(const DatasetSpec& spec, std::uint64_t index) {
  Rng rng = stream_rng(spec.seed, index);
  ShapeSpec s;
  s.kind = spec.shape_kinds[uniform_index(rng, spec.shape_kinds.size())];
  s.rotation_deg = spec.rotation_grid[uniform_index(rng, spec.rotation_grid.size())];
  s.scale = uniform(rng, spec.scale_range.first, spec.scale_range.second);
  const double mid = (spec.image_size - 1) / 2.0;
  s.center_x = mid + spec.image_size * uniform(rng, spec.shift_range.first, spec.shift_range.second);
  s.center_y = mid + spec.image_size * uniform(rng, spec.shift_range.first, spec.shift_range.second);
  s.aspect = spec.ellipse_aspect;
  return s;
}

inline void validate_dataset_spec(const DatasetSpec& spec) {
  if (spec.shape_kinds.empty()) throw ConfigError("dataset shape_kinds is empty");
  if (spec.count < 1) throw ConfigError("dataset count must be >= 1");
  if (spec.rotation_grid.empty()) throw ConfigError("dataset rotation_grid is empty");
  if (spec.image_size < 8) throw ConfigError("dataset image_size must be >= 8");
  if (!(spec.scale_range.first > 0.0 && spec.scale_range.first <= spec.scale_range.second && spec.scale_range.second <= 1.0))
    throw ConfigError("dataset scale_range must satisfy 0 < lo <= hi <= 1");
  if (spec.shift_range.first > spec.shift_range.second) throw ConfigError("dataset shift_range is inverted");
  for (double r : spec.rotation_grid)
    if (!(r >= 0.0 && r < 180.0)) throw ConfigError("rotation grid entries must lie in [0,180)");
}

inline std::vector<Phantom> generate_dataset(const DatasetSpec& spec) {
  validate_dataset_spec(spec);
  std::vector<Phantom> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (int k = 0; k < spec.count; ++k) {
    ShapeSpec s = sample_shape(spec, static_cast<std::uint64_t>(k));
    out.push_back({rasterize_shape(s, spec.image_size), s});
  }
  return out;
}

}  // namespace adaptct
