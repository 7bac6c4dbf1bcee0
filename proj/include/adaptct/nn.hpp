#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "adaptct/core.hpp"
#include "adaptct/rng.hpp"

namespace adaptct::nn {

/// Dense row-major buffer with a shape.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<int> dims, double fill = 0.0) : shape(std::move(dims)) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw DomainError("tensor dimensions must be positive");
      n *= static_cast<std::size_t>(d);
    }
    values.assign(n, fill);
  }

  std::size_t size() const { return values.size(); }
  int dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double* data() { return values.data(); }
  const double* data() const { return values.data(); }
  void fill(double v) { std::fill(values.begin(), values.end(), v); }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline std::string shape_string(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

inline void expect_shape(const Tensor& t, const std::vector<int>& s, const char* what) {
  if (t.shape != s) throw DomainError(std::string(what) + ": expected shape " + shape_string(s) + ", got " + shape_string(t.shape));
}

inline void expect_rank(const Tensor& t, std::size_t r, const char* what) {
  if (t.rank() != r) throw DomainError(std::string(what) + ": expected rank " + std::to_string(r) + ", got " + shape_string(t.shape));
}

// ---------------------------------------------------------------------------
// conv2d: 3x3 kernel, zero padding 1, stride 1 (cross-correlation)

inline Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  expect_rank(input, 3, "conv2d input");
  expect_rank(kernels, 4, "conv2d kernels");
  const int cin = input.dim(0), h = input.dim(1), w = input.dim(2), cout = kernels.dim(0);
  expect_shape(kernels, {cout, cin, 3, 3}, "conv2d kernels");
  expect_shape(bias, {cout}, "conv2d bias");
  Tensor out({cout, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int co = 0; co < cout; ++co) {
    double* o = out.data() + co * plane;
    std::fill(o, o + plane, bias[co]);
    for (int ci = 0; ci < cin; ++ci) {
      const double* in = input.data() + ci * plane;
      const double* k = kernels.data() + (static_cast<std::size_t>(co) * cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          const double kv = k[ky * 3 + kx];
          for (int y = y0; y < y1; ++y) {
            double* orow = o + static_cast<std::size_t>(y) * w;
            const double* irow = in + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) orow[x] += kv * irow[x];
          }
        }
      }
    }
  }
  return out;
}

/// Accumulates d(kernels), d(bias) and, when `d_input` is non-null, d(input).
inline void conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& d_out, Tensor* d_input,
                            Tensor& d_kernels, Tensor& d_bias) {
  const int cin = input.dim(0), h = input.dim(1), w = input.dim(2), cout = kernels.dim(0);
  expect_shape(d_out, {cout, h, w}, "conv2d d_out");
  expect_shape(d_kernels, kernels.shape, "conv2d d_kernels");
  expect_shape(d_bias, {cout}, "conv2d d_bias");
  if (d_input) expect_shape(*d_input, input.shape, "conv2d d_input");
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int co = 0; co < cout; ++co) {
    const double* g = d_out.data() + co * plane;
    double bsum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) bsum += g[i];
    d_bias[co] += bsum;
    for (int ci = 0; ci < cin; ++ci) {
      const double* in = input.data() + ci * plane;
      double* din = d_input ? d_input->data() + ci * plane : nullptr;
      const std::size_t kbase = (static_cast<std::size_t>(co) * cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          const double kv = kernels[kbase + ky * 3 + kx];
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* grow = g + static_cast<std::size_t>(y) * w;
            const double* irow = in + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) acc += grow[x] * irow[x];
            if (din) {
              double* drow = din + static_cast<std::size_t>(y + dy) * w + dx;
              for (int x = x0; x < x1; ++x) drow[x] += kv * grow[x];
            }
          }
          d_kernels[kbase + ky * 3 + kx] += acc;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// group normalization

inline constexpr double kGroupNormEps = 1e-5;

struct GroupNormCache {
  Tensor normalized;             // pre-affine
  std::vector<double> inv_std;   // per group
};

inline Tensor group_norm(const Tensor& input, int groups, const Tensor& gamma, const Tensor& beta,
                         GroupNormCache* cache = nullptr, double eps = kGroupNormEps) {
  expect_rank(input, 3, "group_norm input");
  const int c = input.dim(0);
  if (groups <= 0 || c % groups != 0)
    throw ConfigError("group_norm: " + std::to_string(c) + " channels not divisible into " + std::to_string(groups) + " groups");
  expect_shape(gamma, {c}, "group_norm gamma");
  expect_shape(beta, {c}, "group_norm beta");
  const std::size_t plane = static_cast<std::size_t>(input.dim(1)) * input.dim(2);
  const int cpg = c / groups;
  const std::size_t gsize = plane * cpg;
  Tensor out(input.shape);
  GroupNormCache local;
  GroupNormCache& gc = cache ? *cache : local;
  gc.normalized = Tensor(input.shape);
  gc.inv_std.assign(groups, 0.0);
  for (int g = 0; g < groups; ++g) {
    const double* x = input.data() + g * gsize;
    double mean = 0.0;
    for (std::size_t i = 0; i < gsize; ++i) mean += x[i];
    mean /= static_cast<double>(gsize);
    double var = 0.0;
    for (std::size_t i = 0; i < gsize; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<double>(gsize);
    const double inv = 1.0 / std::sqrt(var + eps);
    gc.inv_std[g] = inv;
    double* xh = gc.normalized.data() + g * gsize;
    for (std::size_t i = 0; i < gsize; ++i) xh[i] = (x[i] - mean) * inv;
    for (int cc = 0; cc < cpg; ++cc) {
      const int ch = g * cpg + cc;
      const double ga = gamma[ch], be = beta[ch];
      const double* src = xh + cc * plane;
      double* dst = out.data() + ch * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = ga * src[i] + be;
    }
  }
  return out;
}

/// Returns d(input); accumulates d(gamma), d(beta).
inline Tensor group_norm_backward(const GroupNormCache& cache, int groups, const Tensor& gamma, const Tensor& d_out,
                                  Tensor& d_gamma, Tensor& d_beta) {
  const Tensor& xh = cache.normalized;
  expect_shape(d_out, xh.shape, "group_norm d_out");
  const int c = xh.dim(0);
  const std::size_t plane = static_cast<std::size_t>(xh.dim(1)) * xh.dim(2);
  const int cpg = c / groups;
  const std::size_t gsize = plane * cpg;
  Tensor d_in(xh.shape);
  std::vector<double> dxh(gsize);
  for (int g = 0; g < groups; ++g) {
    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
    for (int cc = 0; cc < cpg; ++cc) {
      const int ch = g * cpg + cc;
      const double* dy = d_out.data() + ch * plane;
      const double* xr = xh.data() + ch * plane;
      double dg = 0.0, db = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        dg += dy[i] * xr[i];
        db += dy[i];
        const double v = dy[i] * gamma[ch];
        dxh[cc * plane + i] = v;
        sum_dxh += v;
        sum_dxh_xh += v * xr[i];
      }
      d_gamma[ch] += dg;
      d_beta[ch] += db;
    }
    const double n = static_cast<double>(gsize);
    const double inv = cache.inv_std[g];
    const double* xg = xh.data() + g * gsize;
    double* dx = d_in.data() + g * gsize;
    for (std::size_t i = 0; i < gsize; ++i) dx[i] = inv / n * (n * dxh[i] - sum_dxh - xg[i] * sum_dxh_xh);
  }
  return d_in;
}

// ---------------------------------------------------------------------------
// leaky ReLU

inline constexpr double kLeakySlope = 0.01;

inline Tensor leaky_relu(const Tensor& input, double slope = kLeakySlope) {
  Tensor out = input;
  for (double& v : out.values)
    if (!(v >= 0.0)) v *= slope;
  return out;
}

/// Gradient is 1 for x > 0 and `slope` for x <= 0.
inline Tensor leaky_relu_backward(const Tensor& input, const Tensor& d_out, double slope = kLeakySlope) {
  expect_shape(d_out, input.shape, "leaky_relu d_out");
  Tensor d_in = d_out;
  for (std::size_t i = 0; i < d_in.size(); ++i)
    if (!(input[i] > 0.0)) d_in[i] *= slope;
  return d_in;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2

struct MaxPoolCache {
  std::vector<int> input_shape;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

inline Tensor max_pool2(const Tensor& input, MaxPoolCache* cache = nullptr) {
  expect_rank(input, 3, "max_pool2 input");
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h % 2 != 0 || w % 2 != 0) throw DomainError("max_pool2: spatial dims must be even, got " + shape_string(input.shape));
  const int oh = h / 2, ow = w / 2;
  Tensor out({c, oh, ow});
  if (cache) {
    cache->input_shape = input.shape;
    cache->argmax.assign(out.size(), 0);
  }
  std::size_t o = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x, ++o) {
        const std::size_t base = (static_cast<std::size_t>(ch) * h + 2 * y) * w + 2 * x;
        const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        for (int k = 1; k < 4; ++k)
          if (input[cand[k]] > input[best]) best = cand[k];
        out[o] = input[best];
        if (cache) cache->argmax[o] = static_cast<std::uint32_t>(best);
      }
  return out;
}

inline Tensor max_pool2_backward(const MaxPoolCache& cache, const Tensor& d_out) {
  if (d_out.size() != cache.argmax.size()) throw DomainError("max_pool2 d_out size mismatch");
  Tensor d_in(cache.input_shape);
  for (std::size_t o = 0; o < d_out.size(); ++o) d_in[cache.argmax[o]] += d_out[o];
  return d_in;
}

// ---------------------------------------------------------------------------
// dense

inline std::vector<double> dense(std::span<const double> input, const Tensor& weight, const Tensor& bias) {
  expect_rank(weight, 2, "dense weight");
  const int m = weight.dim(0), n = weight.dim(1);
  if (input.size() != static_cast<std::size_t>(n))
    throw DomainError("dense: input length " + std::to_string(input.size()) + " does not match weight " + shape_string(weight.shape));
  expect_shape(bias, {m}, "dense bias");
  std::vector<double> out(m);
  for (int r = 0; r < m; ++r) {
    const double* row = weight.data() + static_cast<std::size_t>(r) * n;
    double acc = 0.0;
    for (int k = 0; k < n; ++k) acc += row[k] * input[k];
    out[r] = acc + bias[r];
  }
  return out;
}

/// Accumulates d(weight), d(bias); returns d(input) when `want_input`.
inline std::vector<double> dense_backward(std::span<const double> input, const Tensor& weight, std::span<const double> d_out,
                                          Tensor& d_weight, Tensor& d_bias, bool want_input = true) {
  const int m = weight.dim(0), n = weight.dim(1);
  if (d_out.size() != static_cast<std::size_t>(m)) throw DomainError("dense d_out length mismatch");
  std::vector<double> d_in(want_input ? n : 0, 0.0);
  for (int r = 0; r < m; ++r) {
    const double g = d_out[r];
    d_bias[r] += g;
    if (g == 0.0) continue;
    double* dw = d_weight.data() + static_cast<std::size_t>(r) * n;
    for (int k = 0; k < n; ++k) dw[k] += g * input[k];
    if (want_input) {
      const double* row = weight.data() + static_cast<std::size_t>(r) * n;
      for (int k = 0; k < n; ++k) d_in[k] += g * row[k];
    }
  }
  return d_in;
}

// ---------------------------------------------------------------------------
// softmax

inline std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw DomainError("softmax of an empty vector");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

/// Jacobian-vector product: d(logits) = p * (d_probs - <p, d_probs>).
inline std::vector<double> softmax_backward(std::span<const double> probs, std::span<const double> d_probs) {
  double dot = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * d_probs[i];
  std::vector<double> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] * (d_probs[i] - dot);
  return out;
}

/// Shannon entropy in nats; zero-probability entries contribute nothing.
inline double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

// ---------------------------------------------------------------------------
// Adam

/// Adam moments and hyper-parameters for one parameter group. Weight decay
/// is the coupled L2 form: decay * param is added to the gradient.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t t = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

inline AdamState make_adam_state(std::span<Tensor* const> params, double lr, double weight_decay) {
  AdamState s;
  s.lr = lr;
  s.weight_decay = weight_decay;
  for (const Tensor* p : params) {
    s.m.emplace_back(p->size(), 0.0);
    s.v.emplace_back(p->size(), 0.0);
  }
  return s;
}

inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) throw DomainError("adam_step: group size mismatch");
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    if (g.size() != p.size() || state.m[k].size() != p.size()) throw DomainError("adam_step: tensor size mismatch");
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + state.weight_decay * p[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// initialization

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), i.e. Kaiming-uniform with the
/// leaky-ReLU gain sqrt(5) that common frameworks use by default.
inline void kaiming_uniform(Tensor& t, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.values) v = uniform(rng, -bound, bound);
}

}  // namespace adaptct::nn
