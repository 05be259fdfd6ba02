#pragma once

// Evaluation harness: few-shot prompts, answer extraction, accuracy reports,
// span sweeps, and lens curves.
//
// Prompt template (frozen):
//   Question: <exemplar question>\nAnswer: <chain> The answer is <answer>.\n\n
//   ... one block per exemplar ...
//   Question: <target question>\nAnswer:

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "skipcd/checkpoint.hpp"
#include "skipcd/dataset.hpp"
#include "skipcd/decode.hpp"
#include "skipcd/error.hpp"
#include "skipcd/lens.hpp"
#include "skipcd/rng.hpp"
#include "skipcd/script.hpp"
#include "skipcd/strategy.hpp"
#include "skipcd/tokenizer.hpp"
#include "skipcd/transformer.hpp"

namespace skipcd {

inline constexpr std::string_view kStopMarker = "Question";

inline int default_shots(std::string_view lang) {
  if (lang == "te") return 2;
  if (lang == "bn" || lang == "th") return 4;
  return 8;
}

inline std::string build_prompt(const std::vector<DatasetRecord>& exemplars, std::string_view question, int shots) {
  if (shots < 0) throw Error("build_prompt: negative shot count");
  if (static_cast<std::size_t>(shots) > exemplars.size())
    throw Error("build_prompt: " + std::to_string(shots) + " shots requested, " + std::to_string(exemplars.size()) +
                " exemplars available");
  std::string p;
  for (int i = 0; i < shots; ++i) {
    const auto& ex = exemplars[static_cast<std::size_t>(i)];
    if (!ex.chain) throw Error("build_prompt: exemplar '" + ex.id + "' has no chain");
    p += "Question: " + ex.question + "\nAnswer: " + *ex.chain + " The answer is " + ex.answer + ".\n\n";
  }
  p += "Question: ";
  p += question;
  p += "\nAnswer:";
  return p;
}

// Canonical decimal form: no sign for zero, no commas, no leading zeros, no
// trailing fractional zeros.
inline std::string normalize_number(std::string_view s) {
  std::string digits;
  bool negative = false;
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '-' || s[i] == '+')) negative = s[i++] == '-';
  for (; i < s.size(); ++i)
    if (s[i] != ',') digits += s[i];
  std::string int_part = digits;
  std::string frac;
  if (auto dot = digits.find('.'); dot != std::string::npos) {
    int_part = digits.substr(0, dot);
    frac = digits.substr(dot + 1);
  }
  while (!frac.empty() && frac.back() == '0') frac.pop_back();
  const auto nz = int_part.find_first_not_of('0');
  int_part = nz == std::string::npos ? "0" : int_part.substr(nz);
  std::string out = int_part;
  if (!frac.empty()) out += "." + frac;
  if (negative && out != "0") out = "-" + out;
  return out;
}

inline bool answers_match(std::string_view extracted, std::string_view gold) {
  return normalize_number(extracted) == normalize_number(gold);
}

// Last number in the text before the first stop marker, commas stripped.
inline std::optional<std::string> extract_answer(std::string_view text) {
  if (auto pos = text.find(kStopMarker); pos != std::string_view::npos) text = text.substr(0, pos);
  static const std::regex number(R"([-+]?\d[\d,]*(\.\d+)?)");
  std::optional<std::string> last;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), number); it != std::sregex_iterator(); ++it) {
    std::string m = it->str();
    while (!m.empty() && m.back() == ',') m.pop_back();
    std::string cleaned;
    for (char c : m)
      if (c != ',') cleaned += c;
    last = cleaned;
  }
  return last;
}

// Generated bytes need not be valid UTF-8; invalid sequences are written as
// U+FFFD and the exact output is kept in the token list.
inline std::string dump_json(const nlohmann::ordered_json& j, int indent = -1) {
  return j.dump(indent, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

struct EvalRecord {
  std::string id;
  std::string lang;
  std::string prompt;
  std::string generated;
  std::vector<Token> tokens;
  std::optional<std::string> extracted;
  std::string gold;
  bool correct = false;
  LayerSpan span;
  std::vector<StepDiagnostics> steps;
  double runtime_ms = 0.0;
  std::optional<std::string> error;
};

struct EvalOptions {
  std::filesystem::path model;
  std::optional<std::filesystem::path> amateur_model;
  std::filesystem::path data;
  std::filesystem::path out;
  DecodeConfig decode;
  std::optional<int> shots;  // nullopt: per-language default
  int workers = 1;
};

struct LanguageScore {
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy() const { return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
};

struct EvalSummary {
  std::size_t n = 0;
  std::size_t correct = 0;
  std::map<std::string, LanguageScore> per_lang;
  std::optional<double> hrl;
  std::optional<double> lrl;
  std::size_t failures = 0;

  double accuracy() const { return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
};

// HRL/LRL are unweighted means of the per-language accuracies present.
inline void compute_group_averages(EvalSummary& s) {
  double hrl = 0.0;
  double lrl = 0.0;
  int n_hrl = 0;
  int n_lrl = 0;
  for (const auto& [lang, score] : s.per_lang) {
    if (is_high_resource(lang)) {
      hrl += score.accuracy();
      ++n_hrl;
    } else if (is_low_resource(lang)) {
      lrl += score.accuracy();
      ++n_lrl;
    }
  }
  s.hrl = n_hrl ? std::optional<double>(hrl / n_hrl) : std::nullopt;
  s.lrl = n_lrl ? std::optional<double>(lrl / n_lrl) : std::nullopt;
}

inline EvalSummary summarize(const std::vector<EvalRecord>& records) {
  EvalSummary s;
  for (const auto& r : records) {
    ++s.n;
    auto& lang = s.per_lang[r.lang];
    ++lang.n;
    if (r.correct) {
      ++s.correct;
      ++lang.correct;
    }
    if (r.error) ++s.failures;
  }
  compute_group_averages(s);
  return s;
}

inline nlohmann::ordered_json step_to_json(const StepDiagnostics& d) {
  nlohmann::ordered_json j;
  j["chosen"] = d.chosen;
  j["expert_top1"] = d.expert_top1;
  j["amateur_top1"] = d.amateur_top1;
  j["plausible"] = d.plausible_size;
  if (d.premature_layer) j["premature_layer"] = d.premature_layer;
  if (!d.entropies.empty()) j["entropies"] = d.entropies;
  return j;
}

// Per-sample report line; runtime lives in the separate timings file so that
// reports are reproducible byte for byte.
inline nlohmann::ordered_json record_to_json(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["lang"] = r.lang;
  j["prompt"] = r.prompt;
  j["generated"] = r.generated;
  j["tokens"] = r.tokens;
  j["extracted"] = r.extracted ? nlohmann::ordered_json(*r.extracted) : nlohmann::ordered_json(nullptr);
  j["gold"] = r.gold;
  j["correct"] = r.correct;
  j["span"] = r.span.to_string();
  auto steps = nlohmann::ordered_json::array();
  for (const auto& s : r.steps) steps.push_back(step_to_json(s));
  j["steps"] = std::move(steps);
  if (r.error) j["error"] = *r.error;
  return j;
}

inline nlohmann::ordered_json summary_to_json(const EvalSummary& s) {
  nlohmann::ordered_json j;
  j["n"] = s.n;
  j["correct"] = s.correct;
  j["accuracy"] = s.accuracy();
  nlohmann::ordered_json langs = nlohmann::ordered_json::object();
  for (const auto& [lang, score] : s.per_lang)
    langs[lang] = {{"n", score.n}, {"correct", score.correct}, {"accuracy", score.accuracy()}};
  j["per_lang"] = std::move(langs);
  j["hrl"] = s.hrl ? nlohmann::ordered_json(*s.hrl) : nlohmann::ordered_json(nullptr);
  j["lrl"] = s.lrl ? nlohmann::ordered_json(*s.lrl) : nlohmann::ordered_json(nullptr);
  j["failures"] = s.failures;
  return j;
}

// Loaded models and dataset shared read-only by all workers.
struct EvalContext {
  std::shared_ptr<const Model> expert;
  std::shared_ptr<const Model> amateur;
  std::vector<DatasetRecord> records;
};

inline std::shared_ptr<const Model> load_shared_model(const std::filesystem::path& path) {
  auto [cfg, w] = load_model(path);
  return std::make_shared<const Model>(std::move(cfg), std::move(w));
}

inline EvalContext load_context(const EvalOptions& opt) {
  EvalContext ctx;
  ctx.expert = load_shared_model(opt.model);
  if (opt.amateur_model) ctx.amateur = load_shared_model(*opt.amateur_model);
  ctx.records = load_dataset(opt.data);
  return ctx;
}

// Exemplars for `target`: same-language records with a chain, in file order,
// excluding the target itself.
inline std::vector<DatasetRecord> exemplars_for(const std::vector<DatasetRecord>& records,
                                                const DatasetRecord& target) {
  std::vector<DatasetRecord> out;
  for (const auto& r : records)
    if (r.lang == target.lang && r.chain && r.id != target.id) out.push_back(r);
  return out;
}

// Requested shots must be available; the per-language default is capped at
// what the dataset provides.
inline int resolve_shots(std::optional<int> requested, const std::string& lang, std::size_t available) {
  if (requested) return *requested;
  return std::min(default_shots(lang), static_cast<int>(available));
}

inline EvalRecord evaluate_one(const EvalContext& ctx, std::size_t index, const DecodeConfig& base,
                               std::optional<int> shots) {
  const auto& rec = ctx.records[index];
  EvalRecord r;
  r.id = rec.id;
  r.lang = rec.lang;
  r.gold = rec.answer;
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto exemplars = exemplars_for(ctx.records, rec);
    r.prompt = build_prompt(exemplars, rec.question, resolve_shots(shots, rec.lang, exemplars.size()));
    DecodeConfig cfg = base;
    cfg.strategy.seed = derive_seed(base.strategy.seed, index);
    const Tokenizer tok(ctx.expert->vocab_size());
    const auto prompt_tokens = tok.encode(r.prompt);
    auto gen = generate(*ctx.expert, ctx.amateur.get(), tok, prompt_tokens, cfg);
    r.generated = std::move(gen.text);
    r.tokens = std::move(gen.tokens);
    r.span = gen.span;
    r.steps = std::move(gen.steps);
    r.extracted = extract_answer(r.generated);
    r.correct = r.extracted && answers_match(*r.extracted, r.gold);
  } catch (const std::exception& e) {
    r.error = e.what();
    r.correct = false;
  }
  r.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

// Samples are independent; workers take indices round-robin and results are
// stored by index, so output order never depends on scheduling.
inline std::vector<EvalRecord> evaluate_all(const EvalContext& ctx, const DecodeConfig& cfg, std::optional<int> shots,
                                            int workers) {
  std::vector<EvalRecord> results(ctx.records.size());
  const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(ctx.records.size())));
  auto work = [&](int w) {
    for (std::size_t i = static_cast<std::size_t>(w); i < ctx.records.size(); i += static_cast<std::size_t>(n_workers))
      results[i] = evaluate_one(ctx, i, cfg, shots);
  };
  if (n_workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(work, w);
  }
  return results;
}

inline nlohmann::ordered_json config_echo(const EvalOptions& opt) {
  nlohmann::ordered_json c;
  c["strategy"] = strategy_name(opt.decode.strategy.kind);
  c["alpha"] = opt.decode.alpha;
  c["beta"] = opt.decode.beta;
  c["delta"] = opt.decode.strategy.delta;
  c["seed"] = opt.decode.strategy.seed;
  c["ablation_exit"] = opt.decode.strategy.ablation_exit;
  if (opt.decode.strategy.forced_span) c["forced_span"] = opt.decode.strategy.forced_span->to_string();
  c["shots"] = opt.shots ? nlohmann::ordered_json(*opt.shots) : nlohmann::ordered_json("auto");
  c["max_new_tokens"] = opt.decode.max_new_tokens;
  c["model"] = opt.model.string();
  c["amateur_model"] = opt.amateur_model ? nlohmann::ordered_json(opt.amateur_model->string()) : nlohmann::ordered_json(nullptr);
  c["data"] = opt.data.string();
  return c;
}

// Writes <out>/summary.json, <out>/samples.jsonl and <out>/timings.jsonl.
// If any sample failed, everything is still written, the summary carries
// "status": "failed", and an Error is thrown afterwards.
inline nlohmann::ordered_json run_eval(const EvalOptions& opt) {
  opt.decode.validate();
  if (opt.shots && *opt.shots < 0) throw Error("eval: shots must be >= 0");
  const EvalContext ctx = load_context(opt);
  const auto records = evaluate_all(ctx, opt.decode, opt.shots, opt.workers);
  const auto summary = summarize(records);

  nlohmann::ordered_json report;
  std::optional<std::string> first_error;
  for (const auto& r : records)
    if (r.error && !first_error) first_error = "sample '" + r.id + "': " + *r.error;
  report["status"] = first_error ? "failed" : "ok";
  if (first_error) report["error"] = *first_error;
  report["summary"] = summary_to_json(summary);
  report["config"] = config_echo(opt);

  std::filesystem::create_directories(opt.out);
  std::string samples;
  std::string timings;
  for (const auto& r : records) {
    samples += dump_json(record_to_json(r)) + "\n";
    timings += dump_json(nlohmann::ordered_json{{"id", r.id}, {"runtime_ms", r.runtime_ms}}) + "\n";
  }
  detail::write_file(opt.out / "samples.jsonl", samples);
  detail::write_file(opt.out / "timings.jsonl", timings);
  detail::write_file(opt.out / "summary.json", dump_json(report, 2) + "\n");
  if (first_error) throw Error("eval failed: " + *first_error);
  return report;
}

// Fixed spans of width round(N/8) starting at layer 4, stopping
// while the span still ends at or below N - 4.
inline std::vector<LayerSpan> fixed_sweep_spans(int n_layers) {
  std::vector<LayerSpan> spans;
  const int w = span_width(n_layers);
  if (w < 1) return spans;
  for (int m = 4; m + w <= n_layers - 4; m += w) spans.push_back(LayerSpan{m, m + w, false});
  return spans;
}

struct AblationRow {
  std::string name;
  StrategyConfig strategy;
};

inline std::vector<AblationRow> ablation_rows(int n_layers, const StrategyConfig& base) {
  std::vector<AblationRow> rows;
  auto with = [&](StrategyKind k, bool exit) {
    StrategyConfig s = base;
    s.kind = k;
    s.ablation_exit = exit;
    s.forced_span.reset();
    return s;
  };
  rows.push_back({"direct", with(StrategyKind::kDirect, false)});
  rows.push_back({"dola", with(StrategyKind::kDola, false)});
  for (const auto& span : fixed_sweep_spans(n_layers)) {
    StrategyConfig s = with(StrategyKind::kSkipHeuristic, false);
    s.forced_span = span;
    rows.push_back({span.to_string(), s});
  }
  rows.push_back({"sl-h", with(StrategyKind::kSkipHeuristic, false)});
  rows.push_back({"sl-d", with(StrategyKind::kSkipDynamic, false)});
  rows.push_back({"sl-h(e)", with(StrategyKind::kSkipHeuristic, true)});
  rows.push_back({"sl-d(e)", with(StrategyKind::kSkipDynamic, true)});
  return rows;
}

// One accuracy row per configuration, written to `opt.out` as JSON.
inline nlohmann::ordered_json run_ablation_suite(const EvalOptions& opt) {
  opt.decode.validate();
  const EvalContext ctx = load_context(opt);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::optional<std::string> first_error;
  for (const auto& row : ablation_rows(ctx.expert->n_layers(), opt.decode.strategy)) {
    DecodeConfig cfg = opt.decode;
    cfg.strategy = row.strategy;
    const auto records = evaluate_all(ctx, cfg, opt.shots, opt.workers);
    const auto s = summarize(records);
    for (const auto& r : records)
      if (r.error && !first_error) first_error = row.name + " / sample '" + r.id + "': " + *r.error;
    nlohmann::ordered_json j;
    j["name"] = row.name;
    j["strategy"] = strategy_name(row.strategy.kind);
    j["ablation_exit"] = row.strategy.ablation_exit;
    j["span"] = row.strategy.forced_span ? nlohmann::ordered_json(row.strategy.forced_span->to_string())
                                         : nlohmann::ordered_json(nullptr);
    j["accuracy"] = s.accuracy();
    j["hrl"] = s.hrl ? nlohmann::ordered_json(*s.hrl) : nlohmann::ordered_json(nullptr);
    j["lrl"] = s.lrl ? nlohmann::ordered_json(*s.lrl) : nlohmann::ordered_json(nullptr);
    j["n"] = s.n;
    j["failures"] = s.failures;
    rows.push_back(std::move(j));
  }
  nlohmann::ordered_json report;
  report["status"] = first_error ? "failed" : "ok";
  if (first_error) report["error"] = *first_error;
  report["n_layers"] = ctx.expert->n_layers();
  report["rows"] = std::move(rows);
  report["config"] = config_echo(opt);
  if (opt.out.has_parent_path()) std::filesystem::create_directories(opt.out.parent_path());
  detail::write_file(opt.out, dump_json(report, 2) + "\n");
  if (first_error) throw Error("sweep failed: " + *first_error);
  return report;
}

inline Script default_script(std::string_view lang) {
  if (lang == "zh") return Script::kHan;
  if (lang == "ja") return Script::kKana;
  if (lang == "ru") return Script::kCyrillic;
  if (lang == "th") return Script::kThai;
  if (lang == "te") return Script::kTelugu;
  if (lang == "bn") return Script::kBengali;
  return Script::kLatin;
}

struct LensOptions {
  std::filesystem::path model;
  std::filesystem::path data;
  std::optional<std::string> lang;  // restrict to one language
  std::optional<Script> script;  // default: from lang
  std::optional<int> shots;
  int max_new_tokens = 32;
  std::size_t limit = 0;  // 0: all matching records
};

struct LensCurves {
  EntropyProfile profile;  // raw = mean per-layer entropy over positions
  ScriptRatioReport ratio;
  std::size_t positions = 0;
};

// Free-running greedy generation with a lens trace at every generated
// position. Entropies are averaged per layer over all positions, then pooled.
inline LensCurves run_lens_analysis(const LensOptions& opt) {
  const auto model = load_shared_model(opt.model);
  const auto records = load_dataset(opt.data);
  const Tokenizer tok(model->vocab_size());
  const Script script = opt.script ? *opt.script : default_script(opt.lang.value_or("en"));
  const int n_layers = model->n_layers();

  std::vector<double> entropy_sum(static_cast<std::size_t>(n_layers), 0.0);
  std::vector<LensPosition> positions;
  std::size_t used = 0;
  for (const auto& rec : records) {
    if (opt.lang && rec.lang != *opt.lang) continue;
    if (opt.limit && used >= opt.limit) break;
    ++used;
    const auto exemplars = exemplars_for(records, rec);
    const auto prompt = build_prompt(exemplars, rec.question, resolve_shots(opt.shots, rec.lang, exemplars.size()));
    KVCache cache = model->new_cache();
    std::vector<Token> next = tok.encode(prompt);
    std::string generated;
    for (int step = 0; step < opt.max_new_tokens; ++step) {
      auto res = model->forward(next, LayerSpan::none(), cache, true);
      const auto dists = layer_distributions(*model, *res.trace);
      for (int i = 0; i < n_layers; ++i) entropy_sum[static_cast<std::size_t>(i)] += entropy(dists[static_cast<std::size_t>(i)]);
      LensPosition pos;
      pos.pending = utf8::pending_suffix(generated);
      for (const auto& d : dists) pos.top1.push_back(static_cast<Token>(argmax(d)));
      const Token chosen = static_cast<Token>(argmax(res.logits));
      positions.push_back(std::move(pos));
      if (chosen == kEos) break;
      generated += tok.token_bytes(chosen);
      if (generated.find(kStopMarker) != std::string::npos) break;
      if (cache.position() >= model->config().max_seq_len) break;
      next = {chosen};
    }
  }
  if (positions.empty()) throw Error("lens: no records matched");
  LensCurves c;
  c.positions = positions.size();
  for (auto& e : entropy_sum) e /= static_cast<double>(positions.size());
  c.profile = pool_entropies(std::move(entropy_sum));
  c.ratio = script_ratio(positions, script, tok);
  return c;
}

}  // namespace skipcd
