#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "reference_model.hpp"
#include "test_util.hpp"

using namespace skipcd;
using skipcd::testing::make_model;
using skipcd::testing::random_tokens;
using skipcd::testing::ReferenceModel;

namespace {

Distribution softmax_ld(const std::vector<double>& logits) {
  long double mx = *std::max_element(logits.begin(), logits.end());
  long double z = 0;
  for (double l : logits) z += std::exp(static_cast<long double>(l) - mx);
  Distribution p;
  for (double l : logits) p.push_back(static_cast<double>(std::exp(static_cast<long double>(l) - mx) / z));
  return p;
}

// Plain contrastive pick: argmax over {t : pe[t] >= alpha max pe} of
// (1 + beta) ln pe - beta ln pa, lowest id on ties.
Token contrastive_pick(const Distribution& pe, const Distribution& pa, double alpha, double beta) {
  const double mx = *std::max_element(pe.begin(), pe.end());
  Token best = -1;
  long double best_score = -INFINITY;
  for (std::size_t t = 0; t < pe.size(); ++t) {
    if (pe[t] < alpha * mx) continue;
    const long double s = (1.0L + beta) * std::log(std::max<long double>(pe[t], 1e-30L)) -
                          beta * std::log(std::max<long double>(pa[t], 1e-30L));
    if (best < 0 || s > best_score) {
      best = static_cast<Token>(t);
      best_score = s;
    }
  }
  return best;
}

std::vector<Token> prompt_of(int len, std::uint64_t seed) {
  Rng rng(seed);
  return random_tokens(rng, len, 258);
}

DecodeConfig config_for(StrategyKind kind, int max_new = 12) {
  DecodeConfig cfg;
  cfg.max_new_tokens = max_new;
  cfg.strategy.kind = kind;
  cfg.strategy.seed = 99;
  return cfg;
}

}  // namespace

TEST(PlausibleSet, KeepsTokensAboveAlphaTimesMax) {
  EXPECT_EQ(plausible_set({0.5, 0.3, 0.15, 0.05}, 0.1), (std::vector<Token>{0, 1, 2, 3}));
  EXPECT_EQ(plausible_set({0.5, 0.3, 0.15, 0.05}, 0.5), (std::vector<Token>{0, 1}));
  EXPECT_EQ(plausible_set({0.2, 0.4, 0.4}, 1.0), (std::vector<Token>{1, 2}));
  EXPECT_THROW(plausible_set({0.5, 0.5}, 0.0), Error);
  EXPECT_THROW(plausible_set({0.5, 0.5}, 1.5), Error);
}

TEST(PlausibleSet, MatchesBruteForceOnRandomDistributions) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> logits(50);
    for (auto& l : logits) l = rng.symmetric() * 6.0;
    const auto p = softmax_ld(logits);
    const double alpha = 0.01 + 0.99 * rng.uniform();
    const double mx = *std::max_element(p.begin(), p.end());
    std::vector<Token> expect;
    for (std::size_t t = 0; t < p.size(); ++t)
      if (p[t] >= alpha * mx) expect.push_back(static_cast<Token>(t));
    ASSERT_EQ(plausible_set(p, alpha), expect);
  }
}

TEST(ContrastiveScores, WorkedExample) {
  const std::vector<Token> mask{0, 1};
  const auto s = contrastive_scores({0.6, 0.4}, {0.4, 0.6}, mask, 0.5);
  EXPECT_NEAR(s[0], 1.5 * std::log(0.6) - 0.5 * std::log(0.4), 1e-12);
  EXPECT_NEAR(s[0], -0.308093, 1e-6);
  EXPECT_NEAR(s[1], -1.119023, 1e-6);
  EXPECT_EQ(argmax(s), 0u);
}

TEST(ContrastiveScores, IdenticalDistributionsGiveExpertLogProbs) {
  const Distribution p{0.1, 0.2, 0.3, 0.4};
  const std::vector<Token> mask{0, 1, 2, 3};
  const auto s = contrastive_scores(p, p, mask, 0.7);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(s[i], std::log(p[i]));
}

TEST(ContrastiveScores, BetaZeroAndMaskHandling) {
  const Distribution pe{0.7, 0.2, 0.1};
  const Distribution pa{0.1, 0.1, 0.8};
  const std::vector<Token> mask{0, 1};
  const auto s = contrastive_scores(pe, pa, mask, 0.0);
  EXPECT_DOUBLE_EQ(s[0], std::log(0.7));
  EXPECT_DOUBLE_EQ(s[1], std::log(0.2));
  EXPECT_EQ(s[2], -std::numeric_limits<double>::infinity());
  EXPECT_THROW(contrastive_scores(pe, pa, std::vector<Token>{}, 0.5), Error);
  EXPECT_THROW(contrastive_scores(pe, {0.5, 0.5}, mask, 0.5), ShapeError);
}

TEST(ContrastiveScores, ZeroProbabilitiesAreFloored) {
  const std::vector<Token> mask{0, 1};
  const auto s = contrastive_scores({0.5, 0.5}, {1.0, 0.0}, mask, 1.0);
  EXPECT_TRUE(std::isfinite(s[1]));
  EXPECT_NEAR(s[1], 2 * std::log(0.5) - std::log(1e-30), 1e-9);
  EXPECT_EQ(argmax(s), 1u);
}

TEST(ContrastiveScores, ShiftingLogitsDoesNotChangeChoice) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> le(30), la(30);
    for (auto& v : le) v = rng.symmetric() * 4;
    for (auto& v : la) v = rng.symmetric() * 4;
    auto pick = [&](double ce, double ca) {
      std::vector<double> a = le, b = la;
      for (auto& v : a) v += ce;
      for (auto& v : b) v += ca;
      const auto pe = softmax_ld(a);
      const auto mask = plausible_set(pe, 0.1);
      return argmax(contrastive_scores(pe, softmax_ld(b), mask, 0.5));
    };
    ASSERT_EQ(pick(0, 0), pick(17.5, -3.25));
  }
}

TEST(Generate, DirectMatchesUncachedGreedyLoop) {
  const Model model = make_model(12, 21);
  const Tokenizer tok(model.vocab_size());
  const auto prompt = prompt_of(9, 1);
  const auto res = generate(model, nullptr, tok, prompt, config_for(StrategyKind::kDirect, 15));

  std::vector<Token> seq = prompt;
  std::vector<Token> expect;
  for (int i = 0; i < 15; ++i) {
    const Token t = static_cast<Token>(argmax(model.forward(seq).logits));
    if (t == kEos) break;
    expect.push_back(t);
    seq.push_back(t);
  }
  EXPECT_EQ(res.tokens, expect);
  EXPECT_EQ(res.text, tok.decode(expect));
}

TEST(Generate, ForcedEmptySpanEqualsDirect) {
  const Model model = make_model(12, 22);
  const Tokenizer tok(model.vocab_size());
  const auto prompt = prompt_of(7, 2);
  DecodeConfig skip = config_for(StrategyKind::kSkipHeuristic, 15);
  skip.strategy.forced_span = LayerSpan{5, 5, false};
  const auto a = generate(model, nullptr, tok, prompt, skip);
  const auto b = generate(model, nullptr, tok, prompt, config_for(StrategyKind::kDirect, 15));
  EXPECT_EQ(a.tokens, b.tokens);
}

TEST(Generate, DynamicSkipIsDeterministicAndMatchesReference) {
  const Model model = make_model(12, 23);
  const ReferenceModel ref(model.config(), model.weights());
  const Tokenizer tok(model.vocab_size());
  const auto prompt = prompt_of(8, 3);
  const DecodeConfig cfg = config_for(StrategyKind::kSkipDynamic, 20);

  const auto first = generate(model, nullptr, tok, prompt, cfg);
  for (int rep = 0; rep < 2; ++rep) EXPECT_EQ(generate(model, nullptr, tok, prompt, cfg).tokens, first.tokens);

  const auto trace = model.forward(prompt, LayerSpan::none(), true).trace;
  const LayerSpan span = detect_span_dynamic(entropy_profile(model, *trace), cfg.strategy.delta);
  EXPECT_TRUE(span.equivalent(first.span));

  std::vector<Token> seq = prompt;
  std::vector<Token> expect;
  for (int i = 0; i < 20; ++i) {
    const auto pe = softmax_ld(ref.logits(seq));
    const auto pa = softmax_ld(ref.logits(seq, ref.layers_without(span.m, span.n)));
    const Token t = contrastive_pick(pe, pa, cfg.alpha, cfg.beta);
    if (t == kEos) break;
    expect.push_back(t);
    seq.push_back(t);
  }
  EXPECT_EQ(first.tokens, expect);
}

TEST(Generate, ChosenTokenAlwaysPlausible) {
  const Model model = make_model(12, 24);
  const Tokenizer tok(model.vocab_size());
  for (auto kind : {StrategyKind::kDola, StrategyKind::kSkipHeuristic, StrategyKind::kSkipDynamic}) {
    DecodeConfig cfg = config_for(kind, 10);
    cfg.record_logits = true;
    cfg.beta = 2.0;
    const auto res = generate(model, nullptr, tok, prompt_of(6, 4), cfg);
    for (const auto& step : res.steps) {
      const auto pe = stable_softmax(step.expert_logits);
      const auto mask = plausible_set(pe, cfg.alpha);
      ASSERT_TRUE(std::binary_search(mask.begin(), mask.end(), step.chosen)) << strategy_name(kind);
      ASSERT_EQ(mask.size(), step.plausible_size);
    }
  }
}

TEST(Generate, AmateurCacheHoldsOnlyActiveLayers) {
  const Model model = make_model(16, 25);
  const Tokenizer tok(model.vocab_size());
  for (bool exit : {false, true}) {
    DecodeConfig cfg = config_for(StrategyKind::kSkipHeuristic);
    cfg.strategy.ablation_exit = exit;
    DecodeSession session(model, nullptr, tok, cfg);
    const auto prompt = prompt_of(5, 5);
    session.prefill(prompt);
    const LayerSpan span = session.span();
    EXPECT_GE(span.m, 4);
    EXPECT_EQ(span.n - span.m, 2);
    EXPECT_EQ(span.exit_after, exit);
    for (int step = 0; step < 8; ++step) {
      const std::size_t len = prompt.size() + static_cast<std::size_t>(step);
      const KVCache* am = session.amateur_cache();
      ASSERT_NE(am, nullptr);
      for (int layer = 1; layer <= 16; ++layer) {
        ASSERT_EQ(session.expert_cache().layer_length(layer), len);
        const bool skipped = layer >= span.m && (layer < span.n || exit);
        ASSERT_EQ(am->layer_length(layer), skipped ? 0u : len) << "layer " << layer;
      }
      session.advance(session.select().chosen);
    }
  }
}

TEST(Generate, HeuristicSpanFollowsSeed) {
  const Model model = make_model(16, 26);
  const Tokenizer tok(model.vocab_size());
  DecodeConfig cfg = config_for(StrategyKind::kSkipHeuristic, 3);
  Rng rng(cfg.strategy.seed);
  const LayerSpan expect = sample_span_heuristic(16, rng);
  EXPECT_TRUE(generate(model, nullptr, tok, prompt_of(4, 6), cfg).span.equivalent(expect));
}

TEST(Generate, DolaPicksEvenEarlyLayers) {
  const Model model = make_model(12, 27);
  const Tokenizer tok(model.vocab_size());
  const auto res = generate(model, nullptr, tok, prompt_of(6, 7), config_for(StrategyKind::kDola, 8));
  ASSERT_FALSE(res.steps.empty());
  for (const auto& s : res.steps) {
    EXPECT_EQ(s.premature_layer % 2, 0);
    EXPECT_GE(s.premature_layer, 2);
    EXPECT_LE(s.premature_layer, 6);
  }
}

TEST(Generate, VanillaNeedsCompatibleAmateur) {
  const Model expert = make_model(12, 28);
  const Tokenizer tok(expert.vocab_size());
  const auto prompt = prompt_of(5, 8);
  const DecodeConfig cfg = config_for(StrategyKind::kVanilla, 6);
  EXPECT_THROW(generate(expert, nullptr, tok, prompt, cfg), Error);

  ModelConfig small = toy_config(2, 32);
  small.vocab_size = 300;
  const Model wrong(small, init_random_model(small, 3));
  EXPECT_THROW(generate(expert, &wrong, tok, prompt, cfg), Error);

  // An amateur identical to the expert leaves the expert's greedy choice.
  const auto same = generate(expert, &expert, tok, prompt, cfg);
  const auto direct = generate(expert, nullptr, tok, prompt, config_for(StrategyKind::kDirect, 6));
  EXPECT_EQ(same.tokens, direct.tokens);

  const Model amateur = make_model(2, 29, 32);
  const auto res = generate(expert, &amateur, tok, prompt, cfg);
  EXPECT_EQ(res.steps.size(), 6u);
}

TEST(Generate, StopsAtEosAndTrimsStopString) {
  auto [cfg, w] = skipcd::testing::rigged_weights(12, '7');
  const Model model(cfg, w);
  const Tokenizer tok(model.vocab_size());
  const auto prompt = tok.encode("Question: 3+4?\nAnswer:");
  for (auto kind : {StrategyKind::kDirect, StrategyKind::kDola, StrategyKind::kSkipHeuristic,
                    StrategyKind::kSkipDynamic}) {
    const auto res = generate(model, nullptr, tok, prompt, config_for(kind, 10));
    EXPECT_EQ(res.text, "7") << strategy_name(kind);
    EXPECT_TRUE(res.hit_eos);
    EXPECT_EQ(res.steps.size(), 2u);
    EXPECT_EQ(res.steps.back().chosen, kEos);
  }
  DecodeConfig stop = config_for(StrategyKind::kDirect, 10);
  stop.stop = "7";
  const auto res = generate(model, nullptr, tok, prompt, stop);
  EXPECT_EQ(res.text, "");
  EXPECT_TRUE(res.hit_stop);
  EXPECT_FALSE(res.hit_eos);
}

TEST(Generate, MaxNewTokensBoundsOutput) {
  const Model model = make_model(12, 30);
  const Tokenizer tok(model.vocab_size());
  const auto res = generate(model, nullptr, tok, prompt_of(4, 9), config_for(StrategyKind::kDirect, 5));
  EXPECT_LE(res.steps.size(), 5u);
  EXPECT_LE(res.tokens.size(), 5u);
}

TEST(Generate, AlphaDoesNotAffectDirect) {
  const Model model = make_model(12, 31);
  const Tokenizer tok(model.vocab_size());
  DecodeConfig a = config_for(StrategyKind::kDirect, 10);
  DecodeConfig b = a;
  b.alpha = 0.9;
  b.beta = 3.0;
  const auto prompt = prompt_of(5, 10);
  EXPECT_EQ(generate(model, nullptr, tok, prompt, a).tokens, generate(model, nullptr, tok, prompt, b).tokens);
}

TEST(Generate, RejectsBadInput) {
  const Model model = make_model(12, 32);
  const Tokenizer tok(model.vocab_size());
  EXPECT_THROW(generate(model, nullptr, tok, std::vector<Token>{}, config_for(StrategyKind::kDirect)), Error);
  DecodeConfig bad = config_for(StrategyKind::kDirect);
  bad.alpha = 0.0;
  EXPECT_THROW(generate(model, nullptr, tok, prompt_of(3, 1), bad), Error);
  const Model small = make_model(8, 33);
  const Tokenizer tok8(small.vocab_size());
  EXPECT_THROW(generate(small, nullptr, tok8, prompt_of(3, 1), config_for(StrategyKind::kSkipHeuristic)), Error);
  EXPECT_THROW(generate(model, nullptr, Tokenizer(100), prompt_of(3, 1), config_for(StrategyKind::kDirect)), Error);
}
