#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "adaptct/agent.hpp"
#include "adaptct/env.hpp"
#include "adaptct/phantoms.hpp"

namespace adaptct {

/// floor(i * 180 / M) for i = 0..M-1, shifted by `offset_deg` modulo 180.
inline std::vector<int> equidistant_angles(int count, int offset_deg = 0) {
  if (count < 1 || count > kAngleCount) throw DomainError("equidistant_angles: count must lie in [1,180]");
  std::vector<int> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back((i * kAngleCount / count + offset_deg) % kAngleCount);
  return out;
}

enum class PolicyKind { learned, equidistant, random };

struct PolicySpec {
  PolicyKind kind = PolicyKind::equidistant;
  const AgentParams* params = nullptr;  // learned only
  bool greedy = true;                   // learned only; false samples from pi
  bool mask_repeats = false;            // learned only
  int offset_deg = 0;                   // equidistant only

  std::string id() const {
    switch (kind) {
      case PolicyKind::learned: return greedy ? "learned_greedy" : "learned_sampled";
      case PolicyKind::random: return "random";
      case PolicyKind::equidistant: return offset_deg == 0 ? "equidistant" : "equidistant_offset" + std::to_string(offset_deg);
    }
    return "unknown";
  }

  static PolicySpec learned(const AgentParams& p, bool greedy = true) {
    PolicySpec s;
    s.kind = PolicyKind::learned;
    s.params = &p;
    s.greedy = greedy;
    return s;
  }
  static PolicySpec equidistant(int offset = 0) {
    PolicySpec s;
    s.offset_deg = offset;
    return s;
  }
  static PolicySpec random() {
    PolicySpec s;
    s.kind = PolicyKind::random;
    return s;
  }
};

struct EpisodeOutcome {
  std::vector<int> angles;
  std::vector<double> psnr_curve;
};

/// Rolls out one episode without learning.
inline EpisodeOutcome run_episode(const PolicySpec& policy, const Environment& env, const Image& truth, int horizon,
                                  double noise_level, Rng& rng) {
  if (policy.kind == PolicyKind::learned && policy.params == nullptr) throw ConfigError("learned policy needs parameters");
  EpisodeState s = env.reset(truth, horizon, noise_level);
  const std::vector<int> fixed =
      policy.kind == PolicyKind::equidistant ? equidistant_angles(horizon, policy.offset_deg) : std::vector<int>{};
  for (int k = 0; k < horizon; ++k) {
    int angle = 0;
    switch (policy.kind) {
      case PolicyKind::equidistant:
        angle = fixed[k];
        break;
      case PolicyKind::random:
        angle = static_cast<int>(uniform_index(rng, kAngleCount));
        break;
      case PolicyKind::learned: {
        const auto f = agent_forward(s.recon, s.angle_vec, *policy.params, true, false,
                                     policy.mask_repeats ? std::span<const double>(s.angle_vec) : std::span<const double>{});
        angle = policy.greedy ? greedy_action(f.probs) : sample_action(f.probs, rng);
        break;
      }
    }
    env.step(s, angle, rng);
  }
  return {s.angles, s.psnr_curve};
}

struct EvalReport {
  std::string policy_id;
  std::string dataset_id;
  int horizon = 0;
  int image_size = 0;
  std::vector<double> final_psnr;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::vector<std::array<int, kAngleCount>> angle_histograms;  // per step
  std::vector<std::vector<int>> angle_sequences;
  std::vector<std::vector<double>> psnr_curves;
  std::vector<ShapeSpec> shapes;
};

inline std::pair<double, double> mean_std(std::span<const double> xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / n)};
}

/// One episode per phantom. Phantom k uses the rng stream (seed, k), so
/// results do not depend on `workers`.
inline EvalReport evaluate(const PolicySpec& policy, const Environment& env, const std::vector<Phantom>& dataset,
                           int horizon, double noise_level, std::uint64_t seed, int workers = 1,
                           std::string dataset_id = {}) {
  if (dataset.empty()) throw DomainError("evaluate: dataset is empty");
  EvalReport rep;
  rep.policy_id = policy.id();
  rep.dataset_id = std::move(dataset_id);
  rep.horizon = horizon;
  rep.image_size = env.projector().geometry().image_size;
  std::vector<EpisodeOutcome> outcomes(dataset.size());
  auto run_range = [&](std::size_t worker, std::size_t stride) {
    for (std::size_t k = worker; k < dataset.size(); k += stride) {
      Rng rng = stream_rng(seed, k);
      outcomes[k] = run_episode(policy, env, dataset[k].image, horizon, noise_level, rng);
    }
  };
  const std::size_t nworkers = static_cast<std::size_t>(std::max(1, workers));
  if (nworkers == 1) {
    run_range(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < nworkers; ++w) pool.emplace_back(run_range, w, nworkers);
  }
  rep.angle_histograms.assign(horizon, {});
  for (std::size_t k = 0; k < dataset.size(); ++k) {
    auto& o = outcomes[k];
    rep.final_psnr.push_back(o.psnr_curve.back());
    for (int step = 0; step < horizon; ++step) ++rep.angle_histograms[step][o.angles[step]];
    rep.angle_sequences.push_back(std::move(o.angles));
    rep.psnr_curves.push_back(std::move(o.psnr_curve));
    rep.shapes.push_back(dataset[k].spec);
  }
  std::tie(rep.mean, rep.std) = mean_std(rep.final_psnr);
  return rep;
}

/// Best of the 36 equidistant offsets 0, 5, ..., 175 by mean final PSNR.
inline EvalReport best_offset_equidistant(const Environment& env, const std::vector<Phantom>& dataset, int horizon,
                                          double noise_level, std::uint64_t seed, int workers = 1) {
  std::optional<EvalReport> best;
  for (int offset = 0; offset < kAngleCount; offset += 5) {
    EvalReport r = evaluate(PolicySpec::equidistant(offset), env, dataset, horizon, noise_level, seed, workers);
    if (!best || r.mean > best->mean) best = std::move(r);
  }
  return *best;
}

struct ConcentrationSummary {
  bool defined = false;                 // false when no phantom has informative angles
  double median = 0.0;                  // degrees
  std::vector<double> per_phantom;      // NaN for phantoms without informative angles
};

/// Per phantom, the smallest circular distance (mod 180) between the
/// angles chosen at steps first_step..M (1-based) and the shape's
/// informative angles; summarized by the median over phantoms.
inline ConcentrationSummary angle_concentration(const EvalReport& report, int first_step = 3) {
  if (first_step < 1) throw DomainError("angle_concentration: first_step must be >= 1");
  ConcentrationSummary out;
  std::vector<double> defined;
  for (std::size_t k = 0; k < report.shapes.size(); ++k) {
    const auto info = informative_angles(report.shapes[k], report.image_size);
    const auto& seq = report.angle_sequences[k];
    if (!info || static_cast<int>(seq.size()) < first_step) {
      out.per_phantom.push_back(std::nan(""));
      continue;
    }
    double best = 180.0;
    for (std::size_t s = first_step - 1; s < seq.size(); ++s)
      for (double a : *info) best = std::min(best, circular_distance180(seq[s], a));
    out.per_phantom.push_back(best);
    defined.push_back(best);
  }
  if (defined.empty()) return out;
  out.defined = true;
  std::sort(defined.begin(), defined.end());
  const std::size_t n = defined.size();
  out.median = n % 2 ? defined[n / 2] : 0.5 * (defined[n / 2 - 1] + defined[n / 2]);
  return out;
}

// ---------------------------------------------------------------------------
// report serialization

inline std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline constexpr const char* kReportCsvHeader = "policy,M,index,kind,rotation_deg,final_psnr,angles,psnr_curve";

/// One row per phantom; angle and PSNR sequences are ';'-separated.
inline std::string report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << kReportCsvHeader << '\n';
  for (std::size_t k = 0; k < r.final_psnr.size(); ++k) {
    os << r.policy_id << ',' << r.horizon << ',' << k << ',' << to_string(r.shapes[k].kind) << ','
       << format_real(r.shapes[k].rotation_deg) << ',' << format_real(r.final_psnr[k]) << ',';
    for (std::size_t s = 0; s < r.angle_sequences[k].size(); ++s) os << (s ? ";" : "") << r.angle_sequences[k][s];
    os << ',';
    for (std::size_t s = 0; s < r.psnr_curves[k].size(); ++s) os << (s ? ";" : "") << format_real(r.psnr_curves[k][s]);
    os << '\n';
  }
  return os.str();
}

inline constexpr const char* kSummaryCsvHeader = "policy,M,mean_psnr,std_psnr";

inline std::string summary_row(const EvalReport& r) {
  return r.policy_id + "," + std::to_string(r.horizon) + "," + format_real(r.mean) + "," + format_real(r.std);
}

/// Table cell in the "mean ± std" style, two decimals.
inline std::string summary_cell(const EvalReport& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", r.mean, r.std);
  return buf;
}

}  // namespace adaptct
