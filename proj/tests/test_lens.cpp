#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "reference_model.hpp"
#include "skipcd/lens.hpp"
#include "test_util.hpp"

namespace skipcd {
namespace {

using testing::make_model;

TEST(LayerDistributions, FinalEntryIsModelOutput) {
  const auto model = make_model(6, 21);
  const std::vector<Token> toks = {72, 105, 33};
  const auto res = model.forward(toks, LayerSpan{}, true);
  const auto dists = layer_distributions(model, *res.trace);
  ASSERT_EQ(dists.size(), 6u);
  EXPECT_EQ(dists.back(), stable_softmax(res.logits));
  for (const auto& d : dists) EXPECT_NEAR(std::accumulate(d.begin(), d.end(), 0.0), 1.0, 1e-6);
}

TEST(LayerDistributions, MatchRecomputationFromHiddenStates) {
  const auto model = make_model(5, 22);
  const testing::ReferenceModel ref(model.config(), model.weights());
  const std::vector<Token> toks = {5, 6, 7, 8};
  const auto trace = *model.forward(toks, LayerSpan{}, true).trace;
  const auto dists = layer_distributions(model, trace);
  for (int i = 1; i <= 5; ++i) {
    // independent route: reference layers 1..i, then the double-precision head
    std::vector<int> layers(static_cast<std::size_t>(i));
    std::iota(layers.begin(), layers.end(), 1);
    const auto l = ref.logits(toks, layers);
    const double mx = *std::max_element(l.begin(), l.end());
    double z = 0;
    for (double v : l) z += std::exp(v - mx);
    for (std::size_t t = 0; t < l.size(); ++t) ASSERT_NEAR(dists[static_cast<std::size_t>(i - 1)][t], std::exp(l[t] - mx) / z, 1e-6);
  }
}

TEST(LayerDistributions, IncompleteTraceRejected) {
  const auto model = make_model(4, 1);
  auto trace = *model.forward(std::vector<Token>{3}, LayerSpan{}, true).trace;
  trace.hidden.pop_back();
  EXPECT_THROW(layer_distributions(model, trace), Error);
}

TEST(Entropy, KnownValues) {
  EXPECT_NEAR(entropy({0.25, 0.25, 0.25, 0.25}), std::log(4.0), 1e-12);
  EXPECT_EQ(entropy({0.0, 1.0, 0.0}), 0.0);
  // 0.5 ln 2 + 2 * 0.25 ln 4 = 1.5 ln 2
  EXPECT_NEAR(entropy({0.5, 0.25, 0.25}), 1.039721, 1e-6);
  EXPECT_THROW(entropy({1.5, -0.5}), Error);
  EXPECT_THROW(entropy({0.3, 0.3}), Error);
}

TEST(Entropy, PermutationInvariantAndBoundedByUniform) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    Distribution p(20);
    double s = 0;
    for (auto& v : p) s += (v = rng.uniform());
    for (auto& v : p) v /= s;
    const double h = entropy(p);
    Distribution q = p;
    std::reverse(q.begin(), q.end());
    std::rotate(q.begin(), q.begin() + 7, q.end());
    ASSERT_NEAR(entropy(q), h, 1e-12);
    ASSERT_LE(h, std::log(20.0) + 1e-12);
    ASSERT_GE(h, 0.0);
  }
}

TEST(EntropyProfile, Pooling) {
  EXPECT_EQ(pool_entropies({2, 2, 2, 2}).pooled, (std::vector<double>{2, 2, 2, 2}));
  EXPECT_EQ(pool_entropies({4, 3, 2, 1}).pooled, (std::vector<double>{3.5, 2.5, 1.5, 1}));
}

TEST(EntropyProfile, FromModelMatchesRecompute) {
  const auto model = make_model(8, 23);
  const std::vector<Token> toks = {30, 31, 32, 33, 34};
  const auto trace = *model.forward(toks, LayerSpan{}, true).trace;
  const auto prof = entropy_profile(model, trace);
  ASSERT_EQ(prof.raw.size(), 8u);
  ASSERT_EQ(prof.pooled.size(), 8u);
  for (int i = 1; i <= 8; ++i) {
    const auto p = model.project_to_vocab(trace.hidden[static_cast<std::size_t>(i)]);
    double h = 0;
    for (double v : p)
      if (v > 0) h -= v * std::log(v);
    ASSERT_NEAR(prof.raw[static_cast<std::size_t>(i - 1)], h, 1e-12);
    ASSERT_GE(prof.raw[static_cast<std::size_t>(i - 1)], 0.0);
    ASSERT_LE(prof.raw[static_cast<std::size_t>(i - 1)], std::log(258.0) + 1e-9);
  }
  for (std::size_t i = 0; i + 1 < 8; ++i) {
    ASSERT_NEAR(prof.pooled[i], 0.5 * (prof.raw[i] + prof.raw[i + 1]), 1e-15);
    ASSERT_GE(prof.pooled[i], std::min(prof.raw[i], prof.raw[i + 1]));
    ASSERT_LE(prof.pooled[i], std::max(prof.raw[i], prof.raw[i + 1]));
  }
  EXPECT_EQ(prof.pooled.back(), prof.raw.back());
}

// 中 = E4 B8 AD
const std::string kHanPrefix = "\xE4\xB8";
const Token kHanTail = Tokenizer::byte_token(0xAD);
const Token kLatinA = Tokenizer::byte_token('a');
const Token kSpace = Tokenizer::byte_token(' ');

TEST(ScriptMembership, ByteLevelCompletion) {
  EXPECT_TRUE(completes_script_char(kHanPrefix, "\xAD", Script::kHan));
  EXPECT_FALSE(completes_script_char("", "\xAD", Script::kHan));
  EXPECT_FALSE(completes_script_char("\xE4", "\xB8", Script::kHan));
  EXPECT_TRUE(completes_script_char("", "a", Script::kLatin));
  EXPECT_FALSE(completes_script_char("", "1", Script::kLatin));
  EXPECT_FALSE(completes_script_char(kHanPrefix, "a", Script::kHan));
  // Д = D0 94, ก = E0 B8 81, あ = E3 81 82
  EXPECT_TRUE(completes_script_char("\xD0", "\x94", Script::kCyrillic));
  EXPECT_TRUE(completes_script_char("\xE0\xB8", "\x81", Script::kThai));
  EXPECT_TRUE(completes_script_char("\xE3\x81", "\x82", Script::kKana));
  EXPECT_FALSE(completes_script_char("\xE3\x81", "\x82", Script::kHan));
  EXPECT_FALSE(completes_script_char("", "", Script::kLatin));
}

TEST(ScriptMembership, PendingSuffix) {
  EXPECT_EQ(utf8::pending_suffix("ab"), "");
  EXPECT_EQ(utf8::pending_suffix("a\xE4\xB8"), "\xE4\xB8");
  EXPECT_EQ(utf8::pending_suffix("\xE4\xB8\xAD"), "");
  EXPECT_EQ(utf8::pending_suffix("\xF0\x9F"), "\xF0\x9F");
}

TEST(ScriptRatio, AllHan) {
  const Tokenizer tok(258);
  std::vector<LensPosition> pos(3, LensPosition{{kHanTail, kHanTail, kHanTail, kHanTail}, kHanPrefix});
  const auto r = script_ratio(pos, Script::kHan, tok);
  EXPECT_EQ(r.denominator, 3u);
  EXPECT_EQ(r.ratio, (std::vector<double>{1, 1, 1, 1}));
}

TEST(ScriptRatio, HandEnumeratedFixture) {
  const Tokenizer tok(258);
  const Token H = kHanTail, A = kLatinA;
  const std::vector<LensPosition> pos = {
      {{A, A, H, H}, kHanPrefix},  // final Han, layer 3 Han
      {{A, H, A, H}, kHanPrefix},  // final Han, layer 3 not
      {{A, A, A, A}, ""},  // final not Han
      {{H, H, H, A}, kHanPrefix},  // final not Han: excluded
  };
  const auto r = script_ratio(pos, Script::kHan, tok);
  EXPECT_EQ(r.denominator, 2u);
  EXPECT_EQ(r.ratio, (std::vector<double>{0.0, 0.5, 0.5, 1.0}));
}

TEST(ScriptRatio, NoTargetPositions) {
  const Tokenizer tok(258);
  const std::vector<LensPosition> pos = {{{kSpace, kLatinA}, ""}};
  const auto r = script_ratio(pos, Script::kHan, tok);
  EXPECT_FALSE(r.has_target_positions());
  EXPECT_TRUE(r.ratio.empty());
  EXPECT_THROW(script_ratio(std::vector<LensPosition>{}, Script::kHan, tok), Error);
}

TEST(ScriptRatio, FinalLayerRatioIsOneOnModelTraces) {
  const auto model = make_model(6, 24);
  const Tokenizer tok(258);
  std::vector<LensTrace> traces;
  Rng rng(2);
  for (int i = 0; i < 30; ++i)
    traces.push_back(*model.forward(testing::random_tokens(rng, 3, 258), LayerSpan{}, true).trace);
  const auto r = script_ratio(model, tok, traces, {}, Script::kLatin);
  if (r.has_target_positions()) {
    EXPECT_EQ(r.ratio.back(), 1.0);
  }
  for (double v : r.ratio) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(CurveTable, RowsPerLayer) {
  const auto prof = pool_entropies({4, 3, 2, 1});
  ScriptRatioReport r;
  r.denominator = 2;
  r.ratio = {0, 0.5, 0.5, 1};
  std::ostringstream os;
  write_curve_table(os, prof, &r);
  EXPECT_EQ(os.str(), "layer\tentropy\tpooled_entropy\tratio\n1\t4\t3.5\t0\n2\t3\t2.5\t0.5\n3\t2\t1.5\t0.5\n4\t1\t1\t1\n");
  std::ostringstream none;
  write_curve_table(none, prof, nullptr);
  EXPECT_NE(none.str().find("1\t4\t3.5\tNA\n"), std::string::npos);
}

}  // namespace
}  // namespace skipcd
