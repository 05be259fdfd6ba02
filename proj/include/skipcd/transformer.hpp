#pragma once

// Pre-norm decoder (RMSNorm, rotary attention, SwiGLU) with layer skipping.
//
// Layers are numbered 1..N. h_0 is the token embedding and h_i the output of
// layer i. A span [m, n) turns layers m..n-1 into the identity, so the state
// entering layer m flows unchanged into layer n: h_i = h_{m-1} for i in
// [m, n). With exit_after set, layers n..N are skipped as well and the output
// head reads h_{m-1} directly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "skipcd/config.hpp"
#include "skipcd/error.hpp"
#include "skipcd/ops.hpp"
#include "skipcd/weights.hpp"

namespace skipcd {

struct LayerSpan {
  int m = 0;
  int n = 0;
  bool exit_after = false;

  static LayerSpan none() { return {}; }

  bool empty() const { return m == n; }

  // True when layer `layer` (1-based) performs no computation.
  bool skips(int layer) const {
    if (empty()) return false;
    if (layer >= m && layer < n) return true;
    return exit_after && layer >= n;
  }

  void validate(int n_layers) const {
    if (m < 0 || m > n || n > n_layers)
      throw Error("layer span [" + std::to_string(m) + "," + std::to_string(n) + ") invalid for " +
                  std::to_string(n_layers) + " layers");
    if (!empty() && m < 1) throw Error("layer span must start at layer >= 1");
    if (exit_after && empty()) throw Error("exit_after requires a non-empty span");
  }

  // Two spans bind the same cache iff they skip the same layers.
  bool equivalent(const LayerSpan& o) const {
    if (empty() && o.empty()) return true;
    return m == o.m && n == o.n && exit_after == o.exit_after;
  }

  std::string to_string() const {
    std::string s = "[" + std::to_string(m) + "," + std::to_string(n) + ")";
    if (exit_after) s += "+exit";
    return s;
  }

  bool operator==(const LayerSpan&) const = default;
};

// Per-layer keys and values for one generation session. Layers skipped by the
// bound span never receive entries.
class KVCache {
 public:
  KVCache(const ModelConfig& cfg, LayerSpan span)
      : span_(span), d_model_(static_cast<std::size_t>(cfg.d_model)), keys_(cfg.n_layers), values_(cfg.n_layers) {
    span_.validate(cfg.n_layers);
  }

  const LayerSpan& span() const { return span_; }
  int position() const { return position_; }
  bool fresh() const { return position_ == 0; }
  int n_layers() const { return static_cast<int>(keys_.size()); }

  // Number of positions stored for layer `layer` (1-based).
  std::size_t layer_length(int layer) const { return keys_.at(static_cast<std::size_t>(layer - 1)).size() / d_model_; }

 private:
  friend class Model;

  LayerSpan span_;
  std::size_t d_model_;
  std::vector<std::vector<float>> keys_;
  std::vector<std::vector<float>> values_;
  int position_ = 0;
};

// Hidden states at the last position of a forward call.
struct LensTrace {
  std::vector<std::vector<float>> hidden;  // h_0..h_N
  std::vector<float> logits;
  LayerSpan span;

  int n_layers() const { return static_cast<int>(hidden.size()) - 1; }
};

struct ForwardResult {
  std::vector<float> logits;
  std::optional<LensTrace> trace;
};

class Model {
 public:
  Model(ModelConfig cfg, WeightSet weights) : cfg_(std::move(cfg)), w_(std::move(weights)) {
    validate_weights(cfg_, w_);
  }

  const ModelConfig& config() const { return cfg_; }
  const WeightSet& weights() const { return w_; }
  int n_layers() const { return cfg_.n_layers; }
  int vocab_size() const { return cfg_.vocab_size; }

  KVCache new_cache(LayerSpan span = LayerSpan::none()) const { return KVCache(cfg_, span); }

  // Final norm followed by the output head. The one projection used for the
  // model output, early exit, and the logit lens.
  std::vector<float> head_logits(std::span<const float> h) const {
    if (h.size() != static_cast<std::size_t>(cfg_.d_model))
      throw ShapeError("head: hidden size " + std::to_string(h.size()) + ", expected " + std::to_string(cfg_.d_model));
    const auto normed = rmsnorm(h, w_.final_norm, cfg_.norm_eps);
    std::vector<float> logits(static_cast<std::size_t>(cfg_.vocab_size));
    if (cfg_.tied_embeddings) {
      const auto d = static_cast<std::size_t>(cfg_.d_model);
      for (std::size_t v = 0; v < logits.size(); ++v) {
        const float* row = w_.token_embedding.data() + v * d;
        float acc = 0.0f;
        for (std::size_t j = 0; j < d; ++j) acc += normed[j] * row[j];
        logits[v] = acc;
      }
    } else {
      matvec(normed, w_.output_head, logits);
    }
    return logits;
  }

  Distribution project_to_vocab(std::span<const float> h) const { return stable_softmax(head_logits(h)); }

  // Runs `tokens` through the model one position at a time, extending `cache`.
  // Returns logits for the last position and, if requested, its lens trace.
  ForwardResult forward(std::span<const Token> tokens, const LayerSpan& span, KVCache& cache,
                        bool trace = false) const {
    span.validate(cfg_.n_layers);
    if (!span.equivalent(cache.span()))
      throw Error("forward: span " + span.to_string() + " does not match cache span " + cache.span().to_string());
    if (cache.n_layers() != cfg_.n_layers) throw Error("forward: cache built for a different model");
    if (tokens.empty()) throw Error("forward: empty token input");
    if (cache.position() + tokens.size() > static_cast<std::size_t>(cfg_.max_seq_len))
      throw Error("forward: sequence length " + std::to_string(cache.position() + tokens.size()) +
                  " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
    for (Token t : tokens)
      if (t < 0 || t >= cfg_.vocab_size) throw Error("forward: token " + std::to_string(t) + " out of range");

    const LayerSpan& active = cache.span();
    Workspace ws(cfg_);
    ForwardResult result;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      const bool last = t + 1 == tokens.size();
      const bool tracing = trace && last;
      const auto d = static_cast<std::size_t>(cfg_.d_model);
      std::vector<float> x(w_.token_embedding.begin() + static_cast<std::ptrdiff_t>(tokens[t] * d),
                           w_.token_embedding.begin() + static_cast<std::ptrdiff_t>((tokens[t] + 1) * d));
      LensTrace lt;
      if (tracing) {
        lt.hidden.reserve(static_cast<std::size_t>(cfg_.n_layers) + 1);
        lt.hidden.push_back(x);
      }
      for (int layer = 1; layer <= cfg_.n_layers; ++layer) {
        if (!active.skips(layer)) run_layer(layer, x, cache, ws);
        if (tracing) lt.hidden.push_back(x);
      }
      ++cache.position_;
      if (last) {
        result.logits = head_logits(x);
        if (tracing) {
          lt.logits = result.logits;
          lt.span = active;
          result.trace = std::move(lt);
        }
      }
    }
    return result;
  }

  ForwardResult forward(std::span<const Token> tokens, const LayerSpan& span = LayerSpan::none(),
                        bool trace = false) const {
    KVCache cache = new_cache(span);
    return forward(tokens, span, cache, trace);
  }

 private:
  struct Workspace {
    explicit Workspace(const ModelConfig& c)
        : q(c.d_model), k(c.d_model), v(c.d_model), att(c.d_model), proj(c.d_model), gate(c.d_ff), up(c.d_ff) {}
    std::vector<float> q, k, v, att, proj, gate, up;
    std::vector<double> scores;
  };

  void run_layer(int layer, std::vector<float>& x, KVCache& cache, Workspace& ws) const {
    const auto& lw = w_.layers[static_cast<std::size_t>(layer - 1)];
    const int nh = cfg_.n_heads;
    const int hd = cfg_.head_dim();
    const int pos = cache.position_;
    auto& keys = cache.keys_[static_cast<std::size_t>(layer - 1)];
    auto& values = cache.values_[static_cast<std::size_t>(layer - 1)];

    // attention
    const auto xn = rmsnorm(x, lw.attn_norm, cfg_.norm_eps);
    matvec(xn, lw.wq, ws.q);
    matvec(xn, lw.wk, ws.k);
    matvec(xn, lw.wv, ws.v);
    apply_rope(ws.q, nh, hd, pos, cfg_.rope_theta);
    apply_rope(ws.k, nh, hd, pos, cfg_.rope_theta);
    keys.insert(keys.end(), ws.k.begin(), ws.k.end());
    values.insert(values.end(), ws.v.begin(), ws.v.end());

    const std::size_t len = keys.size() / x.size();
    const auto d = x.size();
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
    ws.scores.resize(len);
    for (int h = 0; h < nh; ++h) {
      const float* qh = ws.q.data() + static_cast<std::size_t>(h) * hd;
      double mx = -INFINITY;
      for (std::size_t p = 0; p < len; ++p) {
        const float* kp = keys.data() + p * d + static_cast<std::size_t>(h) * hd;
        float s = 0.0f;
        for (int j = 0; j < hd; ++j) s += qh[j] * kp[j];
        ws.scores[p] = static_cast<double>(s * scale);
        mx = std::max(mx, ws.scores[p]);
      }
      double sum = 0.0;
      for (std::size_t p = 0; p < len; ++p) {
        ws.scores[p] = std::exp(ws.scores[p] - mx);
        sum += ws.scores[p];
      }
      float* out = ws.att.data() + static_cast<std::size_t>(h) * hd;
      std::fill(out, out + hd, 0.0f);
      for (std::size_t p = 0; p < len; ++p) {
        const auto a = static_cast<float>(ws.scores[p] / sum);
        const float* vp = values.data() + p * d + static_cast<std::size_t>(h) * hd;
        for (int j = 0; j < hd; ++j) out[j] += a * vp[j];
      }
    }
    matvec(ws.att, lw.wo, ws.proj);
    for (std::size_t j = 0; j < d; ++j) x[j] += ws.proj[j];

    // feed-forward
    const auto xf = rmsnorm(x, lw.ffn_norm, cfg_.norm_eps);
    matvec(xf, lw.w_gate, ws.gate);
    matvec(xf, lw.w_up, ws.up);
    for (std::size_t j = 0; j < ws.gate.size(); ++j) ws.gate[j] = silu(ws.gate[j]) * ws.up[j];
    matvec(ws.gate, lw.w_down, ws.proj);
    for (std::size_t j = 0; j < d; ++j) x[j] += ws.proj[j];
  }

  ModelConfig cfg_;
  WeightSet w_;
};

}  // namespace skipcd
