#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adaptct/core.hpp"
#include "adaptct/rng.hpp"

namespace adaptct {

/// 2D parallel-beam geometry. Rays at angle theta travel along
/// (cos theta, sin theta) in the image (x = column, y = row) frame; the
/// detector axis is (-sin theta, cos theta), centered on the image center.
struct Geometry {
  int image_size = 128;
  int detector_count = 192;
  double detector_spacing = 1.0;

  /// Detector of ceil(1.5 * n) unit bins.
  static Geometry for_image(int image_size) {
    Geometry g;
    g.image_size = image_size;
    g.detector_count = (3 * image_size + 1) / 2;
    g.detector_spacing = 1.0;
    g.validate();
    return g;
  }

  void validate() const {
    if (image_size <= 0) throw ConfigError("geometry image_size must be positive");
    if (!(detector_spacing > 0.0)) throw ConfigError("geometry detector_spacing must be positive");
    const double needed = std::ceil(std::numbers::sqrt2 * image_size);
    if (detector_count * detector_spacing < needed)
      throw ConfigError("detector of " + std::to_string(detector_count) + " bins does not cover the image diagonal (" +
                        std::to_string(static_cast<int>(needed)) + ")");
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(image_size) * image_size; }

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

/// Sparse system-matrix slice A(theta), stored pixel-major.
///
/// Each pixel is sliced along the dominant ray axis (Joseph's slicing). Its
/// slab footprint on the detector is an interval of width
/// L = max(|cos|, |sin|) around the projected pixel center, and the weight
/// to a bin is the overlap of that interval with the bin divided by L:
/// linear interpolation along the dominant axis, integrated over the bin.
/// The per-pixel weights therefore sum to exactly one whenever the
/// footprint lies on the detector.
struct AngleKernel {
  int angle_deg = 0;
  std::vector<std::uint32_t> offsets;  // pixel_count + 1
  std::vector<std::int32_t> bins;
  std::vector<double> weights;
};

inline std::pair<double, double> exact_cos_sin(int angle_deg) {
  switch (angle_deg) {
    case 0: return {1.0, 0.0};
    case 90: return {0.0, 1.0};
    default: {
      const double r = angle_deg * std::numbers::pi / 180.0;
      return {std::cos(r), std::sin(r)};
    }
  }
}

inline AngleKernel build_angle_kernel(const Geometry& geom, int angle_deg) {
  check_angle(angle_deg);
  AngleKernel k;
  k.angle_deg = angle_deg;
  const int n = geom.image_size;
  const auto [c, s] = exact_cos_sin(angle_deg);
  const double footprint = std::max(std::abs(c), std::abs(s));
  const double half_t = 0.5 * footprint / geom.detector_spacing;
  const double center = (n - 1) / 2.0;
  const double det_half = geom.detector_count / 2.0;
  k.offsets.reserve(geom.pixel_count() + 1);
  k.bins.reserve(2 * geom.pixel_count());
  k.weights.reserve(2 * geom.pixel_count());
  k.offsets.push_back(0);
  for (int i = 0; i < n; ++i) {
    const double y = i - center;
    for (int j = 0; j < n; ++j) {
      const double x = j - center;
      const double t_mid = (-x * s + y * c) / geom.detector_spacing + det_half;
      const double t_lo = t_mid - half_t, t_hi = t_mid + half_t;
      for (int b = static_cast<int>(std::floor(t_lo)); b < t_hi; ++b) {
        const double overlap = std::min(t_hi, b + 1.0) - std::max(t_lo, static_cast<double>(b));
        if (overlap <= 0.0 || b < 0 || b >= geom.detector_count) continue;
        k.bins.push_back(b);
        k.weights.push_back(overlap / footprint);
      }
      k.offsets.push_back(static_cast<std::uint32_t>(k.bins.size()));
    }
  }
  return k;
}

/// out += A(theta) x
inline void apply_forward(const AngleKernel& k, std::span<const double> image, std::span<double> out) {
  const std::size_t npix = k.offsets.size() - 1;
  for (std::size_t p = 0; p < npix; ++p) {
    const double v = image[p];
    for (std::uint32_t e = k.offsets[p]; e < k.offsets[p + 1]; ++e) out[k.bins[e]] += k.weights[e] * v;
  }
}

/// image += A(theta)^T values
inline void apply_adjoint(const AngleKernel& k, std::span<const double> values, std::span<double> image) {
  const std::size_t npix = k.offsets.size() - 1;
  for (std::size_t p = 0; p < npix; ++p) {
    double acc = 0.0;
    for (std::uint32_t e = k.offsets[p]; e < k.offsets[p + 1]; ++e) acc += k.weights[e] * values[k.bins[e]];
    image[p] += acc;
  }
}

/// Precomputed kernels for all 180 integer angles of one geometry, plus the
/// row sums (per detector bin) and column sums (per pixel) SIRT needs.
/// Immutable after construction; safe to share across threads.
class Projector {
 public:
  explicit Projector(Geometry geom) : geom_(geom) {
    geom_.validate();
    kernels_.reserve(kAngleCount);
    row_sums_.resize(kAngleCount);
    col_sums_.resize(kAngleCount);
    for (int a = 0; a < kAngleCount; ++a) {
      kernels_.push_back(build_angle_kernel(geom_, a));
      const auto& k = kernels_.back();
      auto& rows = row_sums_[a];
      auto& cols = col_sums_[a];
      rows.assign(geom_.detector_count, 0.0);
      cols.assign(geom_.pixel_count(), 0.0);
      for (std::size_t p = 0; p + 1 < k.offsets.size(); ++p)
        for (std::uint32_t e = k.offsets[p]; e < k.offsets[p + 1]; ++e) {
          rows[k.bins[e]] += k.weights[e];
          cols[p] += k.weights[e];
        }
    }
  }

  const Geometry& geometry() const { return geom_; }
  const AngleKernel& kernel(int angle_deg) const {
    check_angle(angle_deg);
    return kernels_[angle_deg];
  }
  std::span<const double> row_sums(int angle_deg) const {
    check_angle(angle_deg);
    return row_sums_[angle_deg];
  }
  std::span<const double> column_sums(int angle_deg) const {
    check_angle(angle_deg);
    return col_sums_[angle_deg];
  }

  std::vector<double> forward(const Image& image, int angle_deg) const {
    check_image(image);
    std::vector<double> out(geom_.detector_count, 0.0);
    apply_forward(kernel(angle_deg), image.values(), out);
    return out;
  }

  Image back(std::span<const double> values, int angle_deg) const {
    check_values(values);
    Image out(geom_.image_size);
    apply_adjoint(kernel(angle_deg), values, out.values());
    return out;
  }

  void check_image(const Image& image) const {
    if (image.side != geom_.image_size)
      throw DomainError("image side " + std::to_string(image.side) + " does not match geometry " +
                        std::to_string(geom_.image_size));
  }
  void check_values(std::span<const double> values) const {
    if (values.size() != static_cast<std::size_t>(geom_.detector_count))
      throw DomainError("projection length " + std::to_string(values.size()) + " does not match detector_count " +
                        std::to_string(geom_.detector_count));
  }

 private:
  Geometry geom_;
  std::vector<AngleKernel> kernels_;
  std::vector<std::vector<double>> row_sums_;
  std::vector<std::vector<double>> col_sums_;
};

/// Single-angle projection without a precomputed Projector.
inline std::vector<double> forward_project(const Image& image, int angle_deg, const Geometry& geom) {
  geom.validate();
  if (image.side != geom.image_size) throw DomainError("image does not match geometry");
  std::vector<double> out(geom.detector_count, 0.0);
  apply_forward(build_angle_kernel(geom, angle_deg), image.values(), out);
  return out;
}

inline Image back_project(std::span<const double> values, int angle_deg, const Geometry& geom) {
  geom.validate();
  if (values.size() != static_cast<std::size_t>(geom.detector_count)) throw DomainError("projection length mismatch");
  Image out(geom.image_size);
  apply_adjoint(build_angle_kernel(geom, angle_deg), values, out.values());
  return out;
}

struct Measurement {
  int angle_deg = 0;
  std::vector<double> values;
  double noise_sigma = 0.0;

  friend bool operator==(const Measurement&, const Measurement&) = default;
};

/// y = A(theta) x + eps, eps ~ N(0, sigma^2 I). Draws nothing when sigma == 0.
inline Measurement simulate_measurement(const Image& truth, int angle_deg, double sigma, Rng& rng,
                                        const Projector& projector) {
  if (!(sigma >= 0.0)) throw DomainError("noise sigma must be >= 0");
  Measurement m{angle_deg, projector.forward(truth, angle_deg), sigma};
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& v : m.values) v += noise(rng);
  }
  return m;
}

/// Mean absolute value of the clean 180-angle sinogram.
inline double mean_abs_sinogram(const Image& truth, const Projector& projector) {
  double total = 0.0;
  std::vector<double> row(projector.geometry().detector_count);
  for (int a = 0; a < kAngleCount; ++a) {
    std::fill(row.begin(), row.end(), 0.0);
    apply_forward(projector.kernel(a), truth.values(), row);
    for (double v : row) total += std::abs(v);
  }
  return total / (static_cast<double>(kAngleCount) * projector.geometry().detector_count);
}

/// Noise standard deviation for a relative noise level (0.05 = "5% noise"):
/// level times the mean absolute clean sinogram value of this phantom.
inline double noise_sigma_for_level(const Image& truth, double level, const Projector& projector) {
  if (!(level >= 0.0)) throw DomainError("noise level must be >= 0");
  projector.check_image(truth);
  if (level == 0.0) return 0.0;
  return level * mean_abs_sinogram(truth, projector);
}

}  // namespace adaptct
