#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skipcd/error.hpp"
#include "skipcd/lens.hpp"
#include "skipcd/ops.hpp"
#include "skipcd/rng.hpp"
#include "skipcd/transformer.hpp"

namespace skipcd {

enum class StrategyKind { kDirect, kDola, kSkipHeuristic, kSkipDynamic, kVanilla };

inline StrategyKind parse_strategy(std::string_view s) {
  if (s == "direct") return StrategyKind::kDirect;
  if (s == "dola") return StrategyKind::kDola;
  if (s == "sl-h" || s == "sl_h") return StrategyKind::kSkipHeuristic;
  if (s == "sl-d" || s == "sl_d") return StrategyKind::kSkipDynamic;
  if (s == "vanilla") return StrategyKind::kVanilla;
  throw Error("unknown strategy '" + std::string(s) + "'");
}

inline const char* strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::kDirect: return "direct";
    case StrategyKind::kDola: return "dola";
    case StrategyKind::kSkipHeuristic: return "sl-h";
    case StrategyKind::kSkipDynamic: return "sl-d";
    case StrategyKind::kVanilla: return "vanilla";
  }
  return "?";
}

struct StrategyConfig {
  StrategyKind kind = StrategyKind::kDirect;
  double delta = 0.1;
  std::uint64_t seed = 0;
  bool ablation_exit = false;
  // Overrides span selection for the skip strategies (fixed-span sweeps).
  std::optional<LayerSpan> forced_span;

  void validate() const {
    if (!(delta > 0.0)) throw Error("strategy: delta must be positive");
  }
};

// round() with halves away from zero.
inline int round_half_away(double x) { return static_cast<int>(std::round(x)); }

inline int span_width(int n_layers) { return round_half_away(n_layers / 8.0); }

// m ~ U{4, ..., floor(N/2) - 1}, n = m + round(N/8).
inline LayerSpan sample_span_heuristic(int n_layers, Rng& rng) {
  if (n_layers < 12) throw Error("sl-h: needs at least 12 layers, model has " + std::to_string(n_layers));
  const int m = static_cast<int>(rng.uniform_int(4, n_layers / 2 - 1));
  return LayerSpan{m, m + span_width(n_layers), false};
}

// Smallest layer index a dynamic span may end at: m = n - round(N/8) > 6.
inline int dynamic_min_end(int n_layers) { return 7 + span_width(n_layers); }

// `pooled[i-1]` holds e'_i. Picks the first i >= k where the pooled entropy
// drops by more than delta from layer i-1 and stays strictly below e'_i
// for every later layer; falls back to n = floor(N/2).
inline LayerSpan detect_span_dynamic(const std::vector<double>& pooled, int n_layers, double delta) {
  if (n_layers < 12) throw Error("sl-d: needs at least 12 layers, model has " + std::to_string(n_layers));
  if (pooled.size() != static_cast<std::size_t>(n_layers))
    throw Error("sl-d: profile has " + std::to_string(pooled.size()) + " entries for " + std::to_string(n_layers) +
                " layers");
  const int width = span_width(n_layers);
  auto e = [&](int i) { return pooled[static_cast<std::size_t>(i - 1)]; };
  // suffix maximum of e' over (i, N], so the descending test is O(1)
  std::vector<double> tail_max(static_cast<std::size_t>(n_layers) + 2, -INFINITY);
  for (int i = n_layers; i >= 1; --i)
    tail_max[static_cast<std::size_t>(i - 1)] = std::max(tail_max[static_cast<std::size_t>(i)], e(i));
  for (int i = dynamic_min_end(n_layers); i <= n_layers; ++i) {
    const bool drop = (e(i - 1) - e(i)) > delta;
    const bool descending = tail_max[static_cast<std::size_t>(i)] < e(i);
    if (drop && descending) return LayerSpan{i - width, i, false};
  }
  const int n = n_layers / 2;
  return LayerSpan{n - width, n, false};
}

inline LayerSpan detect_span_dynamic(const EntropyProfile& profile, double delta) {
  return detect_span_dynamic(profile.pooled, profile.n_layers(), delta);
}

// Jensen-Shannon divergence in nats, bounded by ln 2.
inline double js_divergence(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size()) throw ShapeError("jsd: size mismatch");
  double kl_p = 0.0;
  double kl_q = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) kl_p += p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) kl_q += q[i] * std::log(q[i] / m);
  }
  return std::max(0.0, 0.5 * (kl_p + kl_q));
}

inline std::vector<int> dola_candidates(int n_layers) {
  std::vector<int> c;
  for (int i = 2; i <= n_layers / 2; i += 2) c.push_back(i);
  return c;
}

// `dists[i-1]` is the lens distribution of layer i; the last entry is the
// final output. Returns the candidate layer with maximal JSD to the final
// distribution, the smaller layer on ties.
inline int select_premature_dola(const std::vector<Distribution>& dists) {
  const int n_layers = static_cast<int>(dists.size());
  if (n_layers < 4) throw Error("dola: needs at least 4 layers");
  const Distribution& final_dist = dists.back();
  int best = -1;
  double best_jsd = -1.0;
  for (int layer : dola_candidates(n_layers)) {
    const double d = js_divergence(dists[static_cast<std::size_t>(layer - 1)], final_dist);
    if (d > best_jsd) {
      best_jsd = d;
      best = layer;
    }
  }
  return best;
}

// Projects only the candidate layers and the final layer.
inline int select_premature_dola(const Model& model, const LensTrace& trace) {
  check_trace(model, trace);
  const int n_layers = model.n_layers();
  if (n_layers < 4) throw Error("dola: needs at least 4 layers");
  const Distribution final_dist = model.project_to_vocab(trace.hidden.back());
  int best = -1;
  double best_jsd = -1.0;
  for (int layer : dola_candidates(n_layers)) {
    const double d = js_divergence(model.project_to_vocab(trace.hidden[static_cast<std::size_t>(layer)]), final_dist);
    if (d > best_jsd) {
      best_jsd = d;
      best = layer;
    }
  }
  return best;
}

}  // namespace skipcd
