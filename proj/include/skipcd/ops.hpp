#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "skipcd/error.hpp"

namespace skipcd {

// Probability vectors are kept in double so that entropies and contrastive
// scores do not inherit float32 rounding from the softmax.
using Distribution = std::vector<double>;

inline std::vector<float> rmsnorm(std::span<const float> x, std::span<const float> weight, double eps) {
  if (x.size() != weight.size())
    throw ShapeError("rmsnorm: length mismatch " + std::to_string(x.size()) + " vs " + std::to_string(weight.size()));
  if (!(eps > 0.0)) throw Error("rmsnorm: eps must be positive");
  double ss = 0.0;
  for (float v : x) ss += static_cast<double>(v) * v;
  const float inv = static_cast<float>(1.0 / std::sqrt(ss / static_cast<double>(x.size()) + eps));
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = weight[i] * (x[i] * inv);
  return out;
}

// Max-subtracted softmax. -inf entries get probability 0; NaN and +inf are
// rejected.
inline Distribution stable_softmax(std::span<const float> logits) {
  if (logits.empty()) throw Error("stable_softmax: empty input");
  float mx = -std::numeric_limits<float>::infinity();
  for (float v : logits) {
    if (std::isnan(v)) throw Error("stable_softmax: NaN logit");
    if (v == std::numeric_limits<float>::infinity()) throw Error("stable_softmax: +inf logit");
    mx = std::max(mx, v);
  }
  if (mx == -std::numeric_limits<float>::infinity()) throw Error("stable_softmax: all logits are -inf");
  Distribution p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - static_cast<double>(mx));
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

// y[o] = sum_i x[i] * w[i * out + o]
inline void matvec(std::span<const float> x, std::span<const float> w, std::span<float> y) {
  const std::size_t in = x.size();
  const std::size_t out = y.size();
  std::fill(y.begin(), y.end(), 0.0f);
  for (std::size_t i = 0; i < in; ++i) {
    const float xi = x[i];
    const float* row = w.data() + i * out;
    for (std::size_t o = 0; o < out; ++o) y[o] += xi * row[o];
  }
}

inline float silu(float x) { return x / (1.0f + std::exp(-x)); }

// Rotary embedding on interleaved pairs (2i, 2i+1) of each head.
inline void apply_rope(std::span<float> v, int n_heads, int head_dim, int pos, double theta) {
  for (int i = 0; i < head_dim / 2; ++i) {
    const double freq = std::pow(theta, -2.0 * i / head_dim);
    const double angle = pos * freq;
    const auto c = static_cast<float>(std::cos(angle));
    const auto s = static_cast<float>(std::sin(angle));
    for (int h = 0; h < n_heads; ++h) {
      float* p = v.data() + static_cast<std::size_t>(h) * head_dim + 2 * i;
      const float a = p[0];
      const float b = p[1];
      p[0] = a * c - b * s;
      p[1] = a * s + b * c;
    }
  }
}

// Lowest index among the maxima.
template <typename T>
std::size_t argmax(std::span<const T> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

template <typename T>
std::size_t argmax(const std::vector<T>& v) {
  return argmax(std::span<const T>(v));
}

}  // namespace skipcd
