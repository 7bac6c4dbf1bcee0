#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaptct/agent.hpp"
#include "adaptct/env.hpp"
#include "adaptct/phantoms.hpp"

namespace adaptct {

struct TrainConfig {
  double gamma = 0.99;
  double actor_weight = 1.0;
  double critic_weight = 0.5;
  double entropy_weight = 0.01;
  double lr = 1e-4;
  double weight_decay = 1e-5;
  int episodes = 1000;
  int horizon = 3;
  RewardMode reward_mode = RewardMode::end_to_end;
  double noise_level = 0.0;
  bool mask_repeats = false;
  std::uint64_t seed = 7;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("train gamma must lie in (0,1]");
    if (!(actor_weight >= 0.0 && critic_weight >= 0.0 && entropy_weight >= 0.0))
      throw ConfigError("loss weights must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("train lr must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("train weight_decay must be >= 0");
    if (episodes < 0) throw ConfigError("train episodes must be >= 0");
    if (horizon < 1) throw ConfigError("train horizon must be >= 1");
    if (mask_repeats && horizon > kAngleCount) throw ConfigError("mask_repeats needs horizon <= 180");
    if (!(noise_level >= 0.0)) throw ConfigError("noise level must be >= 0");
  }
};

struct TrainRecord {
  std::uint64_t episode = 0;
  double episode_return = 0.0;  // discounted with TrainConfig::gamma
  double final_psnr = 0.0;
  double actor_loss = 0.0;      // means over the episode's steps
  double critic_loss = 0.0;
  double entropy = 0.0;
  std::vector<int> angles;

  friend bool operator==(const TrainRecord&, const TrainRecord&) = default;
};

/// Thrown when a loss or TD error is not finite. Carries a diagnostic
/// string describing the failing step.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One-step TD error; the bootstrap value is zero at the terminal step.
inline double td_error(double reward, double gamma, double v_next, double v_cur, bool terminal) {
  return reward + gamma * (terminal ? 0.0 : v_next) - v_cur;
}

/// sum_k gamma^(k-1) r_k
inline double discounted_return(std::span<const double> rewards, double gamma) {
  double total = 0.0, discount = 1.0;
  for (double r : rewards) {
    total += discount * r;
    discount *= gamma;
  }
  return total;
}

/// Per-group optimizer state plus everything needed to resume training.
struct TrainerState {
  AgentParams params;
  nn::AdamState policy_opt, value_opt;
  Rng rng;
  std::uint64_t episode = 0;
};

inline TrainerState init_trainer_state(const AgentConfig& agent_cfg, const TrainConfig& cfg) {
  TrainerState s;
  Rng init_rng = stream_rng(cfg.seed, 0);
  s.params = init_agent(agent_cfg, init_rng);
  s.policy_opt = nn::make_adam_state(s.params.policy_group(), cfg.lr, cfg.weight_decay);
  s.value_opt = nn::make_adam_state(s.params.value_group(), cfg.lr, cfg.weight_decay);
  s.rng = stream_rng(cfg.seed, 1);
  return s;
}

struct UpdateStats {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
};

/// Gradient of the combined loss w.r.t. the actor logits:
///   actor_weight * (-log pi[a] * delta) - entropy_weight * H(pi),  delta constant.
inline std::vector<double> policy_logit_gradient(std::span<const double> probs, int action, double delta,
                                                 const TrainConfig& cfg) {
  const double h = nn::entropy(probs);
  std::vector<double> g(probs.size(), 0.0);
  for (std::size_t j = 0; j < probs.size(); ++j) {
    const double p = probs[j];
    g[j] = cfg.actor_weight * delta * (p - (static_cast<int>(j) == action ? 1.0 : 0.0));
    if (p > 0.0) g[j] += cfg.entropy_weight * p * (std::log(p) + h);
  }
  return g;
}

/// Combined loss value for a forward pass, with `delta` and the critic
/// target treated as constants. Used by the gradient checks.
inline double combined_loss(const AgentForward& f, int action, double delta, double critic_target, const TrainConfig& cfg) {
  const double log_pi = std::log(f.probs[action]);
  const double dv = critic_target - f.value;
  return cfg.actor_weight * (-log_pi * delta) + cfg.critic_weight * dv * dv - cfg.entropy_weight * nn::entropy(f.probs);
}

/// Back-propagates the combined loss once and applies one Adam step to
/// each parameter group. The critic term is critic_weight * delta^2 with
/// the bootstrap target held fixed, so its gradient is
/// -2 * critic_weight * delta * dV.
inline UpdateStats update_step(const AgentForward& f, int action, double delta, TrainerState& state, const TrainConfig& cfg,
                               AgentParams& policy_grad, AgentParams& value_grad) {
  UpdateStats st;
  st.entropy = nn::entropy(f.probs);
  st.actor_loss = cfg.actor_weight * (-std::log(f.probs[action]) * delta);
  st.critic_loss = cfg.critic_weight * delta * delta;
  if (!std::isfinite(delta) || !std::isfinite(st.actor_loss) || !std::isfinite(st.critic_loss) || !std::isfinite(st.entropy)) {
    std::ostringstream os;
    os << "non-finite loss at episode " << state.episode << ": delta=" << delta << " actor_loss=" << st.actor_loss
       << " critic_loss=" << st.critic_loss << " entropy=" << st.entropy << " action=" << action
       << " value=" << f.value;
    throw TrainingAborted(os.str());
  }
  policy_grad.for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
  value_grad.for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
  const std::vector<double> d_logits = policy_logit_gradient(f.probs, action, delta, cfg);
  const double d_value = -2.0 * cfg.critic_weight * delta;
  agent_backward(f, state.params, d_logits, d_value, policy_grad, value_grad);

  const auto pg = policy_grad.policy_group();
  const auto vg = value_grad.value_group();
  const std::vector<const Tensor*> pg_c(pg.begin(), pg.end());
  const std::vector<const Tensor*> vg_c(vg.begin(), vg.end());
  nn::adam_step(state.params.policy_group(), pg_c, state.policy_opt);
  nn::adam_step(state.params.value_group(), vg_c, state.value_opt);
  return st;
}

/// Per-step callback for optional episode logs: (episode, step, angle, reward, psnr).
using StepObserver = std::function<void(std::uint64_t, int, int, double, double)>;

/// Online one-step actor-critic over a phantom corpus.
class Trainer {
 public:
  Trainer(std::shared_ptr<const Environment> env, std::shared_ptr<const std::vector<Phantom>> dataset, TrainConfig cfg,
          TrainerState state)
      : env_(std::move(env)), dataset_(std::move(dataset)), cfg_(cfg), state_(std::move(state)) {
    cfg_.validate();
    if (!env_) throw ConfigError("trainer needs an environment");
    if (!dataset_ || dataset_->empty()) throw DomainError("training dataset is empty");
    if (state_.params.config.image_size != env_->projector().geometry().image_size)
      throw ConfigError("agent image size does not match the projector geometry");
    policy_grad_ = state_.params.zeros_like();
    value_grad_ = state_.params.zeros_like();
  }

  const TrainerState& state() const { return state_; }
  TrainerState& state() { return state_; }
  const TrainConfig& config() const { return cfg_; }
  void set_step_observer(StepObserver obs) { observer_ = std::move(obs); }

  TrainRecord run_episode() {
    const auto& phantom = (*dataset_)[uniform_index(state_.rng, dataset_->size())];
    EpisodeState s = env_->reset(phantom.image, cfg_.horizon, cfg_.noise_level);
    std::vector<double> rewards;
    TrainRecord rec;
    rec.episode = state_.episode;
    for (int k = 0; k < cfg_.horizon; ++k) {
      const AgentForward f = agent_forward(s.recon, s.angle_vec, state_.params, true, true,
                                           cfg_.mask_repeats ? std::span<const double>(s.angle_vec) : std::span<const double>{});
      if (!std::all_of(f.probs.begin(), f.probs.end(), [](double p) { return std::isfinite(p); }) ||
          !std::isfinite(f.value)) {
        std::ostringstream os;
        os << "non-finite network output at episode " << state_.episode << ", step " << k << " (value=" << f.value << ")";
        throw TrainingAborted(os.str());
      }
      const int action = sample_action(f.probs, state_.rng);
      const StepResult r = env_->step(s, action, state_.rng);
      const double v_next = r.done ? 0.0 : critic_forward(s.recon, s.angle_vec, state_.params);
      const double delta = td_error(r.reward, cfg_.gamma, v_next, f.value, r.done);
      const UpdateStats st = update_step(f, action, delta, state_, cfg_, policy_grad_, value_grad_);
      rewards.push_back(r.reward);
      rec.actor_loss += st.actor_loss;
      rec.critic_loss += st.critic_loss;
      rec.entropy += st.entropy;
      if (observer_) observer_(state_.episode, k, action, r.reward, s.psnr_curve.back());
    }
    const double m = static_cast<double>(cfg_.horizon);
    rec.actor_loss /= m;
    rec.critic_loss /= m;
    rec.entropy /= m;
    rec.episode_return = discounted_return(rewards, cfg_.gamma);
    rec.final_psnr = s.psnr_curve.back();
    rec.angles = s.angles;
    ++state_.episode;
    return rec;
  }

  /// Runs `episodes` more episodes, invoking `on_record` after each.
  std::vector<TrainRecord> train(int episodes, const std::function<void(const TrainRecord&)>& on_record = {}) {
    std::vector<TrainRecord> out;
    out.reserve(episodes > 0 ? episodes : 0);
    for (int e = 0; e < episodes; ++e) {
      out.push_back(run_episode());
      if (on_record) on_record(out.back());
    }
    return out;
  }

 private:
  std::shared_ptr<const Environment> env_;
  std::shared_ptr<const std::vector<Phantom>> dataset_;
  TrainConfig cfg_;
  TrainerState state_;
  AgentParams policy_grad_, value_grad_;
  StepObserver observer_;
};

}  // namespace adaptct
