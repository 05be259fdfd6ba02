#pragma once

// Greedy decoding with adaptive-plausibility contrastive scoring. The expert
// is always the full model; the amateur comes from a skip span (sl-h, sl-d),
// an early-exit lens layer (dola), or a second model (vanilla).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "skipcd/error.hpp"
#include "skipcd/lens.hpp"
#include "skipcd/ops.hpp"
#include "skipcd/rng.hpp"
#include "skipcd/strategy.hpp"
#include "skipcd/tokenizer.hpp"
#include "skipcd/transformer.hpp"

namespace skipcd {

inline constexpr double kLogFloor = 1e-30;

struct DecodeConfig {
  double alpha = 0.1;
  double beta = 0.5;
  int max_new_tokens = 256;
  std::string stop;  // empty: EOS and max_new_tokens only
  StrategyConfig strategy;
  bool record_logits = false;  // keep per-step expert/amateur logits
  bool record_entropies = false;  // per-layer lens entropies where a trace exists

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("decode: alpha must be in (0, 1]");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw Error("decode: beta must be >= 0");
    if (max_new_tokens < 1) throw Error("decode: max_new_tokens must be >= 1");
    strategy.validate();
  }
};

struct StepDiagnostics {
  Token chosen = -1;
  Token expert_top1 = -1;
  Token amateur_top1 = -1;  // -1 for direct
  LayerSpan span;
  int premature_layer = 0;  // dola only
  std::size_t plausible_size = 0;
  std::vector<double> entropies;
  std::vector<float> expert_logits;
  std::vector<float> amateur_logits;
};

struct GenerationResult {
  std::string text;
  std::vector<Token> tokens;  // emitted tokens, EOS excluded
  std::vector<StepDiagnostics> steps;
  LayerSpan span;
  bool hit_eos = false;
  bool hit_stop = false;
};

// { t : p(t) >= alpha * max p }, ascending token order.
inline std::vector<Token> plausible_set(const Distribution& p, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("plausible_set: alpha must be in (0, 1]");
  if (p.empty()) throw Error("plausible_set: empty distribution");
  const double threshold = alpha * *std::max_element(p.begin(), p.end());
  std::vector<Token> mask;
  for (std::size_t t = 0; t < p.size(); ++t)
    if (p[t] >= threshold) mask.push_back(static_cast<Token>(t));
  return mask;
}

// (1+beta) ln p_e - beta ln p_a on the mask, -inf elsewhere; probabilities are
// floored at kLogFloor. Written as ln p_e + beta (ln p_e - ln p_a) so that
// identical distributions reproduce ln p_e exactly.
inline std::vector<double> contrastive_scores(const Distribution& p_expert, const Distribution& p_amateur,
                                              std::span<const Token> mask, double beta) {
  if (p_expert.size() != p_amateur.size()) throw ShapeError("contrastive_scores: vocabulary mismatch");
  if (mask.empty()) throw Error("contrastive_scores: empty mask");
  std::vector<double> scores(p_expert.size(), -std::numeric_limits<double>::infinity());
  for (Token t : mask) {
    const auto i = static_cast<std::size_t>(t);
    if (i >= p_expert.size()) throw Error("contrastive_scores: mask token out of range");
    const double le = std::log(std::max(p_expert[i], kLogFloor));
    const double la = std::log(std::max(p_amateur[i], kLogFloor));
    scores[i] = le + beta * (le - la);
  }
  return scores;
}

// One greedy generation: owns the expert cache and, for the skip and vanilla
// strategies, a separate amateur cache. prefill() fixes the span, then
// select()/advance() alternate.
class DecodeSession {
 public:
  DecodeSession(const Model& expert, const Model* amateur, const Tokenizer& tok, DecodeConfig cfg)
      : expert_(expert), amateur_(amateur), tok_(tok), cfg_(std::move(cfg)), expert_cache_(expert.new_cache()) {
    cfg_.validate();
    if (tok.vocab_size() != expert.vocab_size()) throw Error("generate: tokenizer does not match model vocabulary");
    if (kind() == StrategyKind::kVanilla) {
      if (amateur_ == nullptr) throw Error("generate: vanilla contrastive decoding needs an amateur model");
      if (amateur_->vocab_size() != expert.vocab_size())
        throw Error("generate: amateur model does not share the expert's tokenizer");
    }
  }

  StrategyKind kind() const { return cfg_.strategy.kind; }
  const LayerSpan& span() const { return span_; }
  const KVCache& expert_cache() const { return expert_cache_; }
  const KVCache* amateur_cache() const { return amateur_cache_ ? &*amateur_cache_ : nullptr; }

  void prefill(std::span<const Token> prompt) {
    if (prompt.empty()) throw Error("generate: empty prompt");
    if (!expert_cache_.fresh()) throw Error("generate: session already prefilled");
    const bool trace = dola() || kind() == StrategyKind::kSkipDynamic || cfg_.record_entropies;
    ex_ = expert_.forward(prompt, LayerSpan::none(), expert_cache_, trace);

    // Span is fixed once per sample so the amateur cache stays valid.
    if (skip_kind()) {
      if (cfg_.strategy.forced_span) {
        span_ = *cfg_.strategy.forced_span;
      } else if (kind() == StrategyKind::kSkipHeuristic) {
        Rng rng(cfg_.strategy.seed);
        span_ = sample_span_heuristic(expert_.n_layers(), rng);
      } else {
        span_ = detect_span_dynamic(entropy_profile(expert_, *ex_.trace), cfg_.strategy.delta);
      }
      if (cfg_.strategy.ablation_exit && !span_.empty()) span_.exit_after = true;
      span_.validate(expert_.n_layers());
      amateur_cache_.emplace(expert_.new_cache(span_));
      am_ = expert_.forward(prompt, span_, *amateur_cache_);
    } else if (kind() == StrategyKind::kVanilla) {
      amateur_cache_.emplace(amateur_->new_cache());
      am_ = amateur_->forward(prompt, LayerSpan::none(), *amateur_cache_);
    }
  }

  // Chooses the next token from the current logits without consuming it.
  StepDiagnostics select() const {
    if (expert_cache_.fresh()) throw Error("generate: select() before prefill()");
    StepDiagnostics diag;
    diag.span = span_;
    diag.expert_top1 = static_cast<Token>(argmax(ex_.logits));
    if (cfg_.record_entropies && ex_.trace) diag.entropies = entropy_profile(expert_, *ex_.trace).raw;
    if (kind() == StrategyKind::kDirect) {
      diag.chosen = diag.expert_top1;
      diag.plausible_size = 1;
    } else {
      const Distribution p_expert = stable_softmax(ex_.logits);
      std::vector<float> amateur_logits;
      if (dola()) {
        diag.premature_layer = select_premature_dola(expert_, *ex_.trace);
        amateur_logits = expert_.head_logits(ex_.trace->hidden[static_cast<std::size_t>(diag.premature_layer)]);
      } else {
        amateur_logits = am_.logits;
      }
      const Distribution p_amateur = stable_softmax(amateur_logits);
      const auto mask = plausible_set(p_expert, cfg_.alpha);
      const auto scores = contrastive_scores(p_expert, p_amateur, mask, cfg_.beta);
      diag.chosen = static_cast<Token>(argmax(scores));
      diag.amateur_top1 = static_cast<Token>(argmax(amateur_logits));
      diag.plausible_size = mask.size();
      if (cfg_.record_logits) diag.amateur_logits = std::move(amateur_logits);
    }
    if (cfg_.record_logits) diag.expert_logits = ex_.logits;
    return diag;
  }

  void advance(Token t) {
    const Token next[1] = {t};
    ex_ = expert_.forward(next, LayerSpan::none(), expert_cache_, dola() || cfg_.record_entropies);
    if (skip_kind()) {
      am_ = expert_.forward(next, span_, *amateur_cache_);
    } else if (kind() == StrategyKind::kVanilla) {
      am_ = amateur_->forward(next, LayerSpan::none(), *amateur_cache_);
    }
  }

 private:
  bool skip_kind() const { return kind() == StrategyKind::kSkipHeuristic || kind() == StrategyKind::kSkipDynamic; }
  bool dola() const { return kind() == StrategyKind::kDola; }

  const Model& expert_;
  const Model* amateur_;
  const Tokenizer& tok_;
  DecodeConfig cfg_;
  KVCache expert_cache_;
  std::optional<KVCache> amateur_cache_;
  ForwardResult ex_;
  ForwardResult am_;
  LayerSpan span_;
};

// Greedy generation. `amateur` is only used (and required) for vanilla.
// Stops at EOS (not emitted), at the stop string (trimmed), or after
// max_new_tokens.
inline GenerationResult generate(const Model& expert, const Model* amateur, const Tokenizer& tok,
                                 std::span<const Token> prompt, const DecodeConfig& cfg) {
  DecodeSession session(expert, amateur, tok, cfg);
  session.prefill(prompt);
  GenerationResult out;
  out.span = session.span();
  for (int step = 0; step < cfg.max_new_tokens; ++step) {
    out.steps.push_back(session.select());
    const Token chosen = out.steps.back().chosen;
    if (chosen == kEos) {
      out.hit_eos = true;
      break;
    }
    out.tokens.push_back(chosen);
    out.text += tok.token_bytes(chosen);
    if (!cfg.stop.empty()) {
      if (auto pos = out.text.find(cfg.stop); pos != std::string::npos) {
        out.text.resize(pos);
        out.hit_stop = true;
        break;
      }
    }
    if (step + 1 == cfg.max_new_tokens) break;
    session.advance(chosen);
  }
  return out;
}

}  // namespace skipcd
