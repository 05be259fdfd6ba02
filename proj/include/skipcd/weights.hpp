#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "skipcd/config.hpp"
#include "skipcd/error.hpp"
#include "skipcd/rng.hpp"

namespace skipcd {

// Matrices are row-major [in x out]: y[o] = sum_i x[i] * W[i * out + o].
struct LayerWeights {
  std::vector<float> attn_norm;  // [d_model]
  std::vector<float> wq, wk, wv, wo;  // [d_model x d_model]
  std::vector<float> ffn_norm;  // [d_model]
  std::vector<float> w_gate, w_up;  // [d_model x d_ff]
  std::vector<float> w_down;  // [d_ff x d_model]

  bool operator==(const LayerWeights&) const = default;
};

struct WeightSet {
  std::vector<float> token_embedding;  // [vocab x d_model]
  std::vector<LayerWeights> layers;
  std::vector<float> final_norm;  // [d_model]
  std::vector<float> output_head;  // [d_model x vocab]; empty when tied

  bool operator==(const WeightSet&) const = default;
};

namespace detail {

struct TensorRef {
  std::string name;
  std::size_t expected;
};

}  // namespace detail

// Visits every tensor in the on-disk order together with its expected element
// count. Shared by validation, serialization, and initialization so the three
// can never disagree about layout.
template <typename WS, typename Fn>
void for_each_tensor(const ModelConfig& cfg, WS& w, Fn&& fn) {
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto f = static_cast<std::size_t>(cfg.d_ff);
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  fn(std::string("token_embedding"), w.token_embedding, v * d);
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    auto& l = w.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    fn(p + "attn_norm", l.attn_norm, d);
    fn(p + "q", l.wq, d * d);
    fn(p + "k", l.wk, d * d);
    fn(p + "v", l.wv, d * d);
    fn(p + "o", l.wo, d * d);
    fn(p + "ffn_norm", l.ffn_norm, d);
    fn(p + "gate", l.w_gate, d * f);
    fn(p + "up", l.w_up, d * f);
    fn(p + "down", l.w_down, f * d);
  }
  fn(std::string("final_norm"), w.final_norm, d);
  if (!cfg.tied_embeddings) fn(std::string("output_head"), w.output_head, d * v);
}

inline std::size_t total_parameters(const ModelConfig& cfg) {
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto f = static_cast<std::size_t>(cfg.d_ff);
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  std::size_t per_layer = 2 * d + 4 * d * d + 3 * d * f;
  std::size_t n = v * d + static_cast<std::size_t>(cfg.n_layers) * per_layer + d;
  if (!cfg.tied_embeddings) n += d * v;
  return n;
}

// Throws ShapeError on any shape mismatch and FormatError on NaN/Inf.
inline void validate_weights(const ModelConfig& cfg, const WeightSet& w) {
  cfg.validate();
  if (w.layers.size() != static_cast<std::size_t>(cfg.n_layers))
    throw ShapeError("weights: expected " + std::to_string(cfg.n_layers) + " layers, got " +
                     std::to_string(w.layers.size()));
  if (cfg.tied_embeddings && !w.output_head.empty())
    throw ShapeError("weights: output_head must be empty when embeddings are tied");
  for_each_tensor(cfg, w, [](const std::string& name, const std::vector<float>& t, std::size_t n) {
    if (t.size() != n)
      throw ShapeError("weights: tensor " + name + " has " + std::to_string(t.size()) + " elements, expected " +
                       std::to_string(n));
    for (float x : t)
      if (!std::isfinite(x)) throw FormatError("weights: tensor " + name + " contains a non-finite value");
  });
}

// Deterministic random model. Every tensor is drawn in on-disk order from one
// xoshiro256** stream seeded with `seed`: matrices get U[-1,1) / sqrt(d_model),
// norm weights get 1 + U[-1,1) / sqrt(d_model).
inline WeightSet init_random_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  WeightSet w;
  w.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  for_each_tensor(cfg, w, [&](const std::string& name, std::vector<float>& t, std::size_t n) {
    const bool is_norm = name.ends_with("norm");
    t.resize(n);
    for (auto& x : t) x = static_cast<float>((is_norm ? 1.0 : 0.0) + rng.symmetric() * scale);
  });
  return w;
}

}  // namespace skipcd
