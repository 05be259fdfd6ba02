#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "skipcd/error.hpp"

namespace skipcd {

using Token = int;

inline constexpr Token kBos = 0;
inline constexpr Token kEos = 1;

// Hyperparameters of a pre-norm LLaMA-style decoder.
struct ModelConfig {
  int n_layers = 0;
  int d_model = 0;
  int n_heads = 0;
  int d_ff = 0;
  int vocab_size = 0;
  int max_seq_len = 0;
  double rope_theta = 10000.0;
  double norm_eps = 1e-5;
  bool tied_embeddings = false;

  int head_dim() const { return d_model / n_heads; }

  void validate() const {
    if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 || max_seq_len < 1)
      throw ShapeError("model config: all dimensions must be >= 1");
    if (d_model % n_heads != 0)
      throw ShapeError("model config: d_model " + std::to_string(d_model) +
                       " not divisible by n_heads " + std::to_string(n_heads));
    if (head_dim() % 2 != 0) throw ShapeError("model config: head_dim must be even for rotary embeddings");
    if (vocab_size < 4) throw ShapeError("model config: vocab_size must be >= 4");
    if (!(rope_theta > 0.0) || !std::isfinite(rope_theta)) throw ShapeError("model config: rope_theta must be > 0");
    if (!(norm_eps > 0.0) || !std::isfinite(norm_eps)) throw ShapeError("model config: norm_eps must be > 0");
  }

  bool operator==(const ModelConfig&) const = default;
};

// Small configuration used by tests and `init-toy`.
inline ModelConfig toy_config(int n_layers = 16, int d_model = 64) {
  ModelConfig c;
  c.n_layers = n_layers;
  c.d_model = d_model;
  c.n_heads = 4;
  c.d_ff = 2 * d_model;
  c.vocab_size = 258;
  c.max_seq_len = 2048;
  return c;
}

}  // namespace skipcd
