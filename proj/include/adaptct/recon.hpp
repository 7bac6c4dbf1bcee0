#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "adaptct/projector.hpp"

namespace adaptct {

struct ReconConfig {
  int iterations = 150;
  double box_lo = 0.0;
  double box_hi = 1.0;
  bool warm_start = false;

  void validate() const {
    if (iterations < 1) throw ConfigError("recon iterations must be >= 1");
    if (!(box_lo < box_hi)) throw ConfigError("recon box_lo must be < box_hi");
  }
};

namespace detail {
inline double safe_inverse(double v) { return v > 0.0 ? 1.0 / v : 0.0; }
}  // namespace detail

/// SIRT with box constraints:
///   x <- clip(x + C A^T R (y - A x)),  R = diag(1/row sums), C = diag(1/column sums)
/// where A stacks A(theta_k) over the measurements (duplicates included).
inline Image sirt_reconstruct(std::span<const Measurement> measurements, const Projector& projector,
                              const ReconConfig& cfg, const Image& init) {
  cfg.validate();
  if (measurements.empty()) throw DomainError("sirt_reconstruct needs at least one measurement");
  projector.check_image(init);
  for (double v : init.pixels)
    if (!(v >= cfg.box_lo && v <= cfg.box_hi)) throw DomainError("SIRT initial image lies outside the box");
  for (const auto& m : measurements) projector.check_values(m.values);

  const std::size_t npix = projector.geometry().pixel_count();
  const std::size_t nbins = static_cast<std::size_t>(projector.geometry().detector_count);

  std::vector<double> col_inv(npix, 0.0);
  for (const auto& m : measurements) {
    const auto cols = projector.column_sums(m.angle_deg);
    for (std::size_t p = 0; p < npix; ++p) col_inv[p] += cols[p];
  }
  for (double& v : col_inv) v = detail::safe_inverse(v);

  std::vector<std::vector<double>> row_inv;
  row_inv.reserve(measurements.size());
  for (const auto& m : measurements) {
    const auto rows = projector.row_sums(m.angle_deg);
    auto& inv = row_inv.emplace_back(nbins);
    for (std::size_t b = 0; b < nbins; ++b) inv[b] = detail::safe_inverse(rows[b]);
  }

  Image x = init;
  std::vector<double> residual(nbins);
  std::vector<double> update(npix);
  for (int it = 0; it < cfg.iterations; ++it) {
    std::fill(update.begin(), update.end(), 0.0);
    for (std::size_t k = 0; k < measurements.size(); ++k) {
      const auto& kern = projector.kernel(measurements[k].angle_deg);
      std::fill(residual.begin(), residual.end(), 0.0);
      apply_forward(kern, x.values(), residual);
      for (std::size_t b = 0; b < nbins; ++b) residual[b] = (measurements[k].values[b] - residual[b]) * row_inv[k][b];
      apply_adjoint(kern, residual, update);
    }
    for (std::size_t p = 0; p < npix; ++p)
      x.pixels[p] = std::clamp(x.pixels[p] + col_inv[p] * update[p], cfg.box_lo, cfg.box_hi);
  }
  return x;
}

/// ||y - A x|| / ||y|| over all measurements.
inline double relative_residual(std::span<const Measurement> measurements, const Projector& projector, const Image& x) {
  double num = 0.0, den = 0.0;
  for (const auto& m : measurements) {
    const auto ax = projector.forward(x, m.angle_deg);
    for (std::size_t b = 0; b < ax.size(); ++b) {
      num += (m.values[b] - ax[b]) * (m.values[b] - ax[b]);
      den += m.values[b] * m.values[b];
    }
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

inline constexpr double kPsnrCap = 100.0;

/// PSNR in dB with peak value 1; identical images give the 100 dB cap.
inline double psnr(const Image& a, const Image& b) {
  if (a.side != b.side || a.size() != b.size()) throw DomainError("psnr: image dimensions differ");
  if (a.size() == 0) throw DomainError("psnr: empty images");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

}  // namespace adaptct
