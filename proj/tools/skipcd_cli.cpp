#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "skipcd/skipcd.hpp"

namespace {

std::optional<int> parse_shots(const std::string& s) {
  if (s == "auto") return std::nullopt;
  std::size_t used = 0;
  const int v = std::stoi(s, &used);
  if (used != s.size() || v < 0) throw skipcd::Error("--shots must be a non-negative integer or 'auto'");
  return v;
}

struct CommonFlags {
  std::string model;
  std::string data;
  std::string out;
  std::string shots = "auto";
  double alpha = 0.1;
  double beta = 0.5;
  double delta = 0.1;
  std::uint64_t seed = 0;
  int max_new_tokens = 64;
  int workers = 1;

  void add(CLI::App* app) {
    app->add_option("--model", model, "expert checkpoint directory")->required();
    app->add_option("--data", data, "line-delimited dataset")->required();
    app->add_option("--alpha", alpha, "plausibility threshold")->capture_default_str();
    app->add_option("--beta", beta, "contrast strength")->capture_default_str();
    app->add_option("--delta", delta, "sl-d entropy drop threshold")->capture_default_str();
    app->add_option("--seed", seed, "seed for span sampling")->capture_default_str();
    app->add_option("--shots", shots, "exemplars per prompt, or 'auto'")->capture_default_str();
    app->add_option("--max-new-tokens", max_new_tokens)->capture_default_str();
    app->add_option("--workers", workers, "parallel sessions")->capture_default_str();
  }

  skipcd::EvalOptions options() const {
    skipcd::EvalOptions o;
    o.model = model;
    o.data = data;
    o.out = out;
    o.shots = parse_shots(shots);
    o.workers = workers;
    o.decode.alpha = alpha;
    o.decode.beta = beta;
    o.decode.max_new_tokens = max_new_tokens;
    o.decode.stop = std::string(skipcd::kStopMarker);
    o.decode.strategy.delta = delta;
    o.decode.strategy.seed = seed;
    return o;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skip-layer contrastive decoding engine and evaluation harness"};
  app.require_subcommand(1);

  CommonFlags eval_flags;
  std::string strategy = "direct";
  std::string amateur;
  bool ablation_exit = false;
  auto* eval = app.add_subcommand("eval", "evaluate a decoding strategy on a dataset");
  eval_flags.add(eval);
  eval->add_option("--out", eval_flags.out, "report directory")->required();
  eval->add_option("--amateur-model", amateur, "amateur checkpoint (vanilla)");
  eval->add_option("--strategy", strategy)
      ->check(CLI::IsMember({"direct", "dola", "sl-h", "sl-d", "vanilla"}))
      ->capture_default_str();
  eval->add_flag("--ablation-exit", ablation_exit, "also skip every layer above the span");

  CommonFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "fixed-span sweep and early-exit ablations");
  sweep_flags.add(sweep);
  sweep->add_option("--out", sweep_flags.out, "report file (JSON)")->required();

  std::string lens_model, lens_data, lens_out, lens_lang, lens_script, lens_shots = "auto";
  int lens_tokens = 32;
  std::size_t lens_limit = 0;
  auto* lens = app.add_subcommand("lens", "per-layer entropy and target-script ratio curves");
  lens->add_option("--model", lens_model)->required();
  lens->add_option("--data", lens_data)->required();
  lens->add_option("--out", lens_out, "TSV output (default stdout)");
  lens->add_option("--lang", lens_lang, "restrict to one language");
  lens->add_option("--script", lens_script, "han|kana|cyrillic|thai|telugu|bengali|latin");
  lens->add_option("--shots", lens_shots)->capture_default_str();
  lens->add_option("--max-new-tokens", lens_tokens)->capture_default_str();
  lens->add_option("--limit", lens_limit, "max records (0 = all)")->capture_default_str();

  int toy_layers = 16;
  int toy_d_model = 64;
  int toy_heads = 4;
  int toy_d_ff = 0;
  int toy_vocab = 258;
  int toy_ctx = 2048;
  bool toy_tied = false;
  std::uint64_t toy_seed = 0;
  std::string toy_out;
  auto* init = app.add_subcommand("init-toy", "write a deterministic random checkpoint");
  init->add_option("--layers", toy_layers)->capture_default_str();
  init->add_option("--seed", toy_seed)->capture_default_str();
  init->add_option("--d-model", toy_d_model)->capture_default_str();
  init->add_option("--heads", toy_heads)->capture_default_str();
  init->add_option("--d-ff", toy_d_ff, "default 2 * d_model");
  init->add_option("--vocab", toy_vocab)->capture_default_str();
  init->add_option("--max-seq-len", toy_ctx)->capture_default_str();
  init->add_flag("--tied", toy_tied);
  init->add_option("--out", toy_out, "checkpoint directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*eval) {
      auto opt = eval_flags.options();
      opt.decode.strategy.kind = skipcd::parse_strategy(strategy);
      opt.decode.strategy.ablation_exit = ablation_exit;
      if (!amateur.empty()) opt.amateur_model = amateur;
      const auto report = skipcd::run_eval(opt);
      std::cout << skipcd::dump_json(report["summary"], 2) << "\n";
    } else if (*sweep) {
      const auto report = skipcd::run_ablation_suite(sweep_flags.options());
      for (const auto& row : report["rows"])
        std::cout << row["name"].get<std::string>() << "\t" << row["accuracy"].get<double>() << "\n";
    } else if (*lens) {
      skipcd::LensOptions opt;
      opt.model = lens_model;
      opt.data = lens_data;
      if (!lens_lang.empty()) opt.lang = lens_lang;
      if (!lens_script.empty()) opt.script = skipcd::parse_script(lens_script);
      opt.shots = parse_shots(lens_shots);
      opt.max_new_tokens = lens_tokens;
      opt.limit = lens_limit;
      const auto curves = skipcd::run_lens_analysis(opt);
      if (lens_out.empty()) {
        skipcd::write_curve_table(std::cout, curves.profile, &curves.ratio);
      } else {
        std::ofstream f(lens_out);
        if (!f) throw skipcd::Error("cannot write " + lens_out);
        skipcd::write_curve_table(f, curves.profile, &curves.ratio);
      }
      std::cerr << curves.positions << " positions, " << curves.ratio.denominator << " in "
                << skipcd::script_name(curves.ratio.script) << "\n";
    } else if (*init) {
      skipcd::ModelConfig cfg;
      cfg.n_layers = toy_layers;
      cfg.d_model = toy_d_model;
      cfg.n_heads = toy_heads;
      cfg.d_ff = toy_d_ff > 0 ? toy_d_ff : 2 * toy_d_model;
      cfg.vocab_size = toy_vocab;
      cfg.max_seq_len = toy_ctx;
      cfg.tied_embeddings = toy_tied;
      skipcd::save_model(cfg, skipcd::init_random_model(cfg, toy_seed), toy_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
