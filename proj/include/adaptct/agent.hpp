#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "adaptct/core.hpp"
#include "adaptct/nn.hpp"
#include "adaptct/rng.hpp"

namespace adaptct {

using nn::Tensor;

/// Shape of the shared-encoder actor-critic network.
struct AgentConfig {
  int image_size = 128;
  std::array<int, 3> channels{8, 16, 32};
  int groups = 4;
  int hidden = 256;
  double leaky_slope = nn::kLeakySlope;

  int code_length() const {
    const int side = image_size / 8;
    return side * side * channels[2];
  }
  int feature_length() const { return code_length() + kAngleCount; }

  void validate() const {
    if (image_size < 8 || image_size % 8 != 0) throw ConfigError("agent image_size must be a positive multiple of 8");
    for (int c : channels)
      if (c <= 0 || c % groups != 0) throw ConfigError("encoder channels must be positive multiples of groups");
    if (groups <= 0) throw ConfigError("group count must be positive");
    if (hidden <= 0) throw ConfigError("hidden width must be positive");
    if (!(leaky_slope >= 0.0)) throw ConfigError("leaky slope must be >= 0");
  }

  friend bool operator==(const AgentConfig&, const AgentConfig&) = default;
};

struct ConvBlockParams {
  Tensor kernel, bias, gamma, beta;

  friend bool operator==(const ConvBlockParams&, const ConvBlockParams&) = default;
};

struct DenseParams {
  Tensor weight, bias;

  friend bool operator==(const DenseParams&, const DenseParams&) = default;
};

/// All trainable tensors. The encoder belongs to both the policy group
/// (encoder + actor) and the value group (encoder + critic).
struct AgentParams {
  AgentConfig config;
  std::array<ConvBlockParams, 3> encoder;
  DenseParams actor_hidden, actor_out, critic_hidden, critic_out;

  /// Visits every tensor as f(name, tensor) in a fixed order.
  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    for (std::size_t b = 0; b < self.encoder.size(); ++b) {
      const std::string p = "encoder." + std::to_string(b) + ".";
      f(p + "kernel", self.encoder[b].kernel);
      f(p + "bias", self.encoder[b].bias);
      f(p + "gamma", self.encoder[b].gamma);
      f(p + "beta", self.encoder[b].beta);
    }
    f("actor.hidden.weight", self.actor_hidden.weight);
    f("actor.hidden.bias", self.actor_hidden.bias);
    f("actor.out.weight", self.actor_out.weight);
    f("actor.out.bias", self.actor_out.bias);
    f("critic.hidden.weight", self.critic_hidden.weight);
    f("critic.hidden.bias", self.critic_hidden.bias);
    f("critic.out.weight", self.critic_out.weight);
    f("critic.out.bias", self.critic_out.bias);
  }
  template <class F>
  void for_each(F&& f) { visit(*this, f); }
  template <class F>
  void for_each(F&& f) const { visit(*this, f); }

  std::vector<Tensor*> policy_group() {
    std::vector<Tensor*> out = encoder_tensors();
    for (Tensor* t : {&actor_hidden.weight, &actor_hidden.bias, &actor_out.weight, &actor_out.bias}) out.push_back(t);
    return out;
  }
  std::vector<Tensor*> value_group() {
    std::vector<Tensor*> out = encoder_tensors();
    for (Tensor* t : {&critic_hidden.weight, &critic_hidden.bias, &critic_out.weight, &critic_out.bias}) out.push_back(t);
    return out;
  }
  std::vector<Tensor*> encoder_tensors() {
    std::vector<Tensor*> out;
    for (auto& b : encoder)
      for (Tensor* t : {&b.kernel, &b.bias, &b.gamma, &b.beta}) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
  }

  /// Same shapes, all values zero; used as a gradient buffer.
  AgentParams zeros_like() const {
    AgentParams z = *this;
    z.for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
    return z;
  }

  friend bool operator==(const AgentParams&, const AgentParams&) = default;
};

inline AgentParams init_agent(const AgentConfig& cfg, Rng& rng) {
  cfg.validate();
  AgentParams p;
  p.config = cfg;
  int cin = 1;
  for (std::size_t b = 0; b < 3; ++b) {
    const int cout = cfg.channels[b];
    auto& blk = p.encoder[b];
    blk.kernel = Tensor({cout, cin, 3, 3});
    nn::kaiming_uniform(blk.kernel, cin * 9, rng);
    blk.bias = Tensor({cout});
    blk.gamma = Tensor({cout}, 1.0);
    blk.beta = Tensor({cout});
    cin = cout;
  }
  const int f = cfg.feature_length();
  auto make_dense = [&](int out, int in) {
    DenseParams d{Tensor({out, in}), Tensor({out})};
    nn::kaiming_uniform(d.weight, in, rng);
    return d;
  };
  p.actor_hidden = make_dense(cfg.hidden, f);
  p.actor_out = make_dense(kAngleCount, cfg.hidden);
  p.critic_hidden = make_dense(cfg.hidden, f);
  p.critic_out = make_dense(1, cfg.hidden);
  return p;
}

// ---------------------------------------------------------------------------
// forward / backward

struct EncoderCache {
  std::array<Tensor, 3> inputs, conv_out, norm_out;
  std::array<nn::GroupNormCache, 3> norm;
  std::array<nn::MaxPoolCache, 3> pool;
};

struct HeadCache {
  std::vector<double> hidden_pre, hidden;
};

/// Intermediate values of one forward pass, kept for backward().
struct AgentForward {
  EncoderCache encoder;
  std::vector<double> features;  // flattened code followed by the angle vector
  HeadCache actor, critic;
  std::vector<double> logits, probs;
  double value = 0.0;
  bool has_actor = false, has_critic = false;
};

inline Tensor image_tensor(const Image& img) {
  Tensor t({1, img.side, img.side});
  t.values = img.pixels;
  return t;
}

inline Tensor encode(const Tensor& input, const AgentParams& p, EncoderCache* cache = nullptr) {
  Tensor x = input;
  for (std::size_t b = 0; b < 3; ++b) {
    const auto& blk = p.encoder[b];
    Tensor conv = nn::conv2d(x, blk.kernel, blk.bias);
    Tensor norm = nn::group_norm(conv, p.config.groups, blk.gamma, blk.beta, cache ? &cache->norm[b] : nullptr);
    Tensor act = nn::leaky_relu(norm, p.config.leaky_slope);
    Tensor pooled = nn::max_pool2(act, cache ? &cache->pool[b] : nullptr);
    if (cache) {
      cache->inputs[b] = std::move(x);
      cache->conv_out[b] = std::move(conv);
      cache->norm_out[b] = std::move(norm);
    }
    x = std::move(pooled);
  }
  return x;
}

inline void check_agent_input(const Image& recon, std::span<const double> angle_vec, const AgentParams& p) {
  if (recon.side != p.config.image_size)
    throw DomainError("agent expects " + std::to_string(p.config.image_size) + " px images, got " + std::to_string(recon.side));
  if (angle_vec.size() != static_cast<std::size_t>(kAngleCount)) throw DomainError("angle vector must have 180 entries");
}

/// Flattened encoder code of a reconstruction.
inline std::vector<double> encode(const Image& recon, const AgentParams& p) {
  if (recon.side != p.config.image_size) throw DomainError("encode: image size mismatch");
  return encode(image_tensor(recon), p).values;
}

namespace detail {
inline void head_forward(const std::vector<double>& features, const DenseParams& hidden, const DenseParams& out,
                         double slope, HeadCache& cache, std::vector<double>& result) {
  cache.hidden_pre = nn::dense(features, hidden.weight, hidden.bias);
  cache.hidden = cache.hidden_pre;
  for (double& v : cache.hidden)
    if (!(v >= 0.0)) v *= slope;
  result = nn::dense(cache.hidden, out.weight, out.bias);
}

inline std::vector<double> head_backward(const std::vector<double>& features, const DenseParams& hidden,
                                         const DenseParams& out, double slope, const HeadCache& cache,
                                         std::span<const double> d_out, DenseParams& g_hidden, DenseParams& g_out) {
  std::vector<double> d_h = nn::dense_backward(cache.hidden, out.weight, d_out, g_out.weight, g_out.bias);
  for (std::size_t i = 0; i < d_h.size(); ++i)
    if (!(cache.hidden_pre[i] > 0.0)) d_h[i] *= slope;
  return nn::dense_backward(features, hidden.weight, d_h, g_hidden.weight, g_hidden.bias);
}
}  // namespace detail

/// Full forward pass. `mask`, when non-empty, marks angles (value > 0) whose
/// probability is forced to zero.
inline AgentForward agent_forward(const Image& recon, std::span<const double> angle_vec, const AgentParams& p,
                                  bool want_actor = true, bool want_critic = true, std::span<const double> mask = {}) {
  check_agent_input(recon, angle_vec, p);
  AgentForward f;
  const Tensor code = encode(image_tensor(recon), p, &f.encoder);
  f.features.reserve(code.size() + angle_vec.size());
  f.features.assign(code.values.begin(), code.values.end());
  f.features.insert(f.features.end(), angle_vec.begin(), angle_vec.end());
  if (want_actor) {
    detail::head_forward(f.features, p.actor_hidden, p.actor_out, p.config.leaky_slope, f.actor, f.logits);
    if (!mask.empty()) {
      bool any_open = false;
      for (int a = 0; a < kAngleCount; ++a) {
        if (mask[a] > 0.0)
          f.logits[a] = -std::numeric_limits<double>::infinity();
        else
          any_open = true;
      }
      if (!any_open) throw DomainError("every angle is masked");
    }
    f.probs = nn::softmax(f.logits);
    f.has_actor = true;
  }
  if (want_critic) {
    std::vector<double> v;
    detail::head_forward(f.features, p.critic_hidden, p.critic_out, p.config.leaky_slope, f.critic, v);
    f.value = v[0];
    f.has_critic = true;
  }
  return f;
}

inline std::vector<double> actor_forward(const Image& recon, std::span<const double> angle_vec, const AgentParams& p) {
  return agent_forward(recon, angle_vec, p, true, false).probs;
}

inline double critic_forward(const Image& recon, std::span<const double> angle_vec, const AgentParams& p) {
  return agent_forward(recon, angle_vec, p, false, true).value;
}

namespace detail {
inline void encoder_backward(const EncoderCache& cache, const AgentParams& p, std::span<const double> d_code,
                             AgentParams& grad) {
  Tensor d({p.config.channels[2], p.config.image_size / 8, p.config.image_size / 8});
  std::copy(d_code.begin(), d_code.end(), d.values.begin());
  for (int b = 2; b >= 0; --b) {
    const auto& blk = p.encoder[b];
    auto& g = grad.encoder[b];
    Tensor d_act = nn::max_pool2_backward(cache.pool[b], d);
    Tensor d_norm = nn::leaky_relu_backward(cache.norm_out[b], d_act, p.config.leaky_slope);
    Tensor d_conv = nn::group_norm_backward(cache.norm[b], p.config.groups, blk.gamma, d_norm, g.gamma, g.beta);
    if (b > 0) {
      Tensor d_in(cache.inputs[b].shape);
      nn::conv2d_backward(cache.inputs[b], blk.kernel, d_conv, &d_in, g.kernel, g.bias);
      d = std::move(d_in);
    } else {
      nn::conv2d_backward(cache.inputs[b], blk.kernel, d_conv, nullptr, g.kernel, g.bias);
    }
  }
}
}  // namespace detail

/// Back-propagates d(loss)/d(logits) into `policy_grad` (actor head and
/// encoder) and d(loss)/d(value) into `value_grad` (critic head and
/// encoder). Gradients accumulate into the buffers.
inline void agent_backward(const AgentForward& f, const AgentParams& p, std::span<const double> d_logits, double d_value,
                           AgentParams& policy_grad, AgentParams& value_grad) {
  const std::size_t code_len = static_cast<std::size_t>(p.config.code_length());
  if (!d_logits.empty()) {
    if (!f.has_actor) throw StateError("agent_backward: forward pass has no actor output");
    std::vector<double> d_feat = detail::head_backward(f.features, p.actor_hidden, p.actor_out, p.config.leaky_slope, f.actor,
                                                       d_logits, policy_grad.actor_hidden, policy_grad.actor_out);
    detail::encoder_backward(f.encoder, p, std::span<const double>(d_feat).first(code_len), policy_grad);
  }
  if (d_value != 0.0) {
    if (!f.has_critic) throw StateError("agent_backward: forward pass has no critic output");
    const double dv[1] = {d_value};
    std::vector<double> d_feat = detail::head_backward(f.features, p.critic_hidden, p.critic_out, p.config.leaky_slope,
                                                       f.critic, dv, value_grad.critic_hidden, value_grad.critic_out);
    detail::encoder_backward(f.encoder, p, std::span<const double>(d_feat).first(code_len), value_grad);
  }
}

// ---------------------------------------------------------------------------
// action selection

inline void check_distribution(std::span<const double> probs) {
  if (probs.size() != static_cast<std::size_t>(kAngleCount)) throw DomainError("action distribution must have 180 entries");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw DomainError("action distribution has a negative or NaN entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw DomainError("action distribution sums to " + std::to_string(sum));
}

/// Inverse-CDF draw over angles 0..179 in index order.
inline int sample_action(std::span<const double> probs, Rng& rng) {
  check_distribution(probs);
  const double u = uniform01(rng);
  double cum = 0.0;
  int last_open = 0;
  for (int a = 0; a < kAngleCount; ++a) {
    if (probs[a] <= 0.0) continue;
    last_open = a;
    cum += probs[a];
    if (u < cum) return a;
  }
  return last_open;
}

/// Most probable angle; ties resolve to the smallest angle.
inline int greedy_action(std::span<const double> probs) {
  check_distribution(probs);
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

}  // namespace adaptct
