#pragma once

// Logit-lens analysis over LensTrace hidden states: per-layer vocabulary
// distributions, entropies, pooled entropy profiles, and target-script ratios.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "skipcd/error.hpp"
#include "skipcd/ops.hpp"
#include "skipcd/script.hpp"
#include "skipcd/tokenizer.hpp"
#include "skipcd/transformer.hpp"

namespace skipcd {

inline void check_trace(const Model& model, const LensTrace& trace) {
  if (trace.n_layers() != model.n_layers())
    throw Error("lens: incomplete trace (" + std::to_string(trace.hidden.size()) + " hidden states for " +
                std::to_string(model.n_layers()) + " layers)");
}

// Entry i-1 is project_to_vocab(h_i) for layer i in 1..N.
inline std::vector<Distribution> layer_distributions(const Model& model, const LensTrace& trace) {
  check_trace(model, trace);
  std::vector<Distribution> out;
  out.reserve(static_cast<std::size_t>(model.n_layers()));
  for (int i = 1; i <= model.n_layers(); ++i) out.push_back(model.project_to_vocab(trace.hidden[static_cast<std::size_t>(i)]));
  return out;
}

// Shannon entropy in nats; 0 ln 0 = 0.
inline double entropy(const Distribution& p) {
  double sum = 0.0;
  double h = 0.0;
  for (double v : p) {
    if (v < 0.0 || std::isnan(v)) throw Error("entropy: negative or NaN probability");
    sum += v;
    if (v > 0.0) h -= v * std::log(v);
  }
  if (std::abs(sum - 1.0) > 1e-4) throw Error("entropy: probabilities sum to " + std::to_string(sum));
  return h;
}

struct EntropyProfile {
  std::vector<double> raw;  // e_1..e_N at index 0..N-1
  std::vector<double> pooled;  // e'_i = (e_i + e_{i+1}) / 2, e'_N = e_N

  int n_layers() const { return static_cast<int>(raw.size()); }
};

inline EntropyProfile pool_entropies(std::vector<double> raw) {
  EntropyProfile p;
  p.pooled.resize(raw.size());
  for (std::size_t i = 0; i + 1 < raw.size(); ++i) p.pooled[i] = 0.5 * (raw[i] + raw[i + 1]);
  if (!raw.empty()) p.pooled.back() = raw.back();
  p.raw = std::move(raw);
  return p;
}

inline EntropyProfile entropy_profile(const std::vector<Distribution>& dists) {
  std::vector<double> raw;
  raw.reserve(dists.size());
  for (const auto& d : dists) raw.push_back(entropy(d));
  return pool_entropies(std::move(raw));
}

inline EntropyProfile entropy_profile(const Model& model, const LensTrace& trace) {
  return entropy_profile(layer_distributions(model, trace));
}

// Top-1 lens tokens at one generation position, plus the unfinished UTF-8
// bytes already emitted before it.
struct LensPosition {
  std::vector<Token> top1;  // index i-1 -> layer i
  std::string pending;
};

inline LensPosition lens_position(const Model& model, const LensTrace& trace, std::string pending = {}) {
  check_trace(model, trace);
  LensPosition pos;
  pos.pending = std::move(pending);
  for (int i = 1; i <= model.n_layers(); ++i)
    pos.top1.push_back(static_cast<Token>(argmax(model.head_logits(trace.hidden[static_cast<std::size_t>(i)]))));
  return pos;
}

struct ScriptRatioReport {
  Script script = Script::kHan;
  std::size_t denominator = 0;  // positions whose final-layer top-1 is in script
  std::vector<double> ratio;  // per layer; empty when denominator == 0

  bool has_target_positions() const { return denominator > 0; }
};

inline ScriptRatioReport script_ratio(const std::vector<LensPosition>& positions, Script script,
                                      const Tokenizer& tok) {
  if (positions.empty()) throw Error("script_ratio: no positions");
  const std::size_t n_layers = positions.front().top1.size();
  if (n_layers == 0) throw Error("script_ratio: empty position");
  std::vector<std::size_t> hits(n_layers, 0);
  ScriptRatioReport r;
  r.script = script;
  for (const auto& pos : positions) {
    if (pos.top1.size() != n_layers) throw Error("script_ratio: inconsistent layer counts");
    if (!completes_script_char(pos.pending, tok.token_bytes(pos.top1.back()), script)) continue;
    ++r.denominator;
    for (std::size_t i = 0; i < n_layers; ++i)
      if (completes_script_char(pos.pending, tok.token_bytes(pos.top1[i]), script)) ++hits[i];
  }
  if (r.denominator > 0) {
    r.ratio.resize(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i)
      r.ratio[i] = static_cast<double>(hits[i]) / static_cast<double>(r.denominator);
  }
  return r;
}

inline ScriptRatioReport script_ratio(const Model& model, const Tokenizer& tok, const std::vector<LensTrace>& traces,
                                      const std::vector<std::string>& pendings, Script script) {
  if (traces.empty()) throw Error("script_ratio: no traces");
  if (!pendings.empty() && pendings.size() != traces.size()) throw Error("script_ratio: pending/trace count mismatch");
  std::vector<LensPosition> positions;
  positions.reserve(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i)
    positions.push_back(lens_position(model, traces[i], pendings.empty() ? std::string() : pendings[i]));
  return script_ratio(positions, script, tok);
}

// Tab-separated rows "layer  entropy  pooled_entropy  ratio" for plotting.
// The ratio column reads "NA" when no position had a target-script output.
inline void write_curve_table(std::ostream& os, const EntropyProfile& profile, const ScriptRatioReport* ratios) {
  os << "layer\tentropy\tpooled_entropy\tratio\n";
  std::ostringstream line;
  line << std::setprecision(9);
  for (int i = 0; i < profile.n_layers(); ++i) {
    line.str("");
    line << (i + 1) << '\t' << profile.raw[static_cast<std::size_t>(i)] << '\t'
         << profile.pooled[static_cast<std::size_t>(i)] << '\t';
    if (ratios && ratios->has_target_positions())
      line << ratios->ratio[static_cast<std::size_t>(i)];
    else
      line << "NA";
    os << line.str() << '\n';
  }
}

}  // namespace skipcd
