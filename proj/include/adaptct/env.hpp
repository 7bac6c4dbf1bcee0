#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "adaptct/recon.hpp"

namespace adaptct {

enum class RewardMode { end_to_end, incremental };

inline std::string_view to_string(RewardMode m) { return m == RewardMode::end_to_end ? "end_to_end" : "incremental"; }

inline RewardMode parse_reward_mode(std::string_view s) {
  if (s == "end_to_end") return RewardMode::end_to_end;
  if (s == "incremental") return RewardMode::incremental;
  throw ConfigError("unknown reward mode '" + std::string(s) + "'");
}

/// Belief state of one scan episode. The ground truth is carried along for
/// reward computation only; policies must not read it.
struct EpisodeState {
  Image truth;
  Image recon;
  std::vector<double> angle_vec = std::vector<double>(kAngleCount, 0.0);
  std::vector<Measurement> measurements;
  std::vector<int> angles;
  int step_index = 0;
  int horizon = 1;
  double noise_sigma = 0.0;
  std::vector<double> psnr_curve;

  bool done() const { return step_index >= horizon; }
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
};

/// The scan-angle selection POMDP: fixed hidden phantom, 180 integer-degree
/// actions, SIRT reconstruction as belief update, PSNR-based rewards.
class Environment {
 public:
  Environment(std::shared_ptr<const Projector> projector, ReconConfig recon, RewardMode mode)
      : projector_(std::move(projector)), recon_(recon), mode_(mode) {
    if (!projector_) throw ConfigError("environment needs a projector");
    recon_.validate();
  }

  const Projector& projector() const { return *projector_; }
  const ReconConfig& recon_config() const { return recon_; }
  RewardMode reward_mode() const { return mode_; }

  EpisodeState reset(const Image& truth, int horizon, double noise_level) const {
    if (horizon < 1) throw DomainError("episode horizon must be >= 1");
    projector_->check_image(truth);
    EpisodeState s;
    s.truth = truth;
    s.recon = Image(truth.side);
    s.horizon = horizon;
    s.noise_sigma = noise_sigma_for_level(truth, noise_level, *projector_);
    s.psnr_curve.push_back(psnr(s.recon, truth));
    return s;
  }

  /// Measures at `angle_deg`, rebuilds the reconstruction from every
  /// measurement so far, and returns the reward. Repeated angles are allowed.
  StepResult step(EpisodeState& s, int angle_deg, Rng& rng) const {
    if (s.done()) throw StateError("step() called on a finished episode");
    check_angle(angle_deg);
    s.measurements.push_back(simulate_measurement(s.truth, angle_deg, s.noise_sigma, rng, *projector_));
    const Image init = recon_.warm_start ? s.recon : Image(s.truth.side);
    s.recon = sirt_reconstruct(s.measurements, *projector_, recon_, init);
    s.angle_vec[angle_deg] = 1.0;
    s.angles.push_back(angle_deg);
    ++s.step_index;
    const double previous = s.psnr_curve.back();
    s.psnr_curve.push_back(psnr(s.recon, s.truth));
    StepResult r;
    r.done = s.done();
    if (mode_ == RewardMode::end_to_end)
      r.reward = r.done ? s.psnr_curve.back() : 0.0;
    else
      r.reward = s.psnr_curve.back() - previous;
    return r;
  }

 private:
  std::shared_ptr<const Projector> projector_;
  ReconConfig recon_;
  RewardMode mode_;
};

}  // namespace adaptct
