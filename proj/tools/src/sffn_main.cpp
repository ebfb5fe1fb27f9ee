// Command-line front end: config-driven training, checkpoint evaluation,
// verification suites, and routing/compute analysis with JSON reports.

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sffn/balance.hpp"
#include "sffn/checkpoint.hpp"
#include "sffn/config.hpp"
#include "sffn/corpus.hpp"
#include "sffn/flops.hpp"
#include "sffn/io.hpp"
#include "sffn/model.hpp"
#include "sffn/overlap.hpp"
#include "sffn/reference.hpp"
#include "sffn/rng.hpp"
#include "sffn/trace.hpp"
#include "sffn/train.hpp"
#include "sffn/verify.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;  // a check failed, training diverged, ...
constexpr int kExitUsage = 2;    // bad invocation, bad config, unknown suite

// Leftover command-line tokens of the form --a.b.c=value become config
// overrides; anything else is a usage error.
std::vector<std::string> overrides_from_extras(
    const std::vector<std::string>& extras) {
  std::vector<std::string> out;
  for (const std::string& raw : extras) {
    if (raw.rfind("--", 0) != 0 || raw.find('=') == std::string::npos)
      throw CLI::ValidationError(
          "unrecognized argument (config overrides look like --path.to.key=value): " +
          raw);
    out.push_back(raw.substr(2));
  }
  return out;
}

sffn::ExperimentConfig load_cfg(const std::string& path,
                                const std::vector<std::string>& extras,
                                const std::vector<std::string>& sets,
                                bool seed_given, std::uint64_t seed) {
  std::vector<std::string> overrides = overrides_from_extras(extras);
  overrides.insert(overrides.end(), sets.begin(), sets.end());
  if (seed_given) overrides.push_back("seed=" + std::to_string(seed));
  return sffn::load_config(path, overrides);
}

void write_json_report(const std::string& path, const json& j) {
  if (!path.empty()) sffn::atomic_write_file(path, j.dump(2) + "\n");
}

json check_results_json(const std::vector<sffn::CheckResult>& results) {
  json arr = json::array();
  for (const auto& r : results)
    arr.push_back({{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
  return arr;
}

json breakdown_json(const sffn::FlopsBreakdown& b) {
  return json{{"attention_macs", b.attention_macs},
              {"dense_ffn_macs", b.dense_ffn_macs},
              {"sffn_key_macs", b.sffn_key_macs},
              {"sffn_value_macs", b.sffn_value_macs},
              {"head_macs", b.head_macs},
              {"macs_per_token", b.macs_per_token},
              {"factor", b.factor},
              {"flops_per_token", b.flops_per_token},
              {"train_total", b.train_total}};
}

sffn::ModelShape shape_from_config(const sffn::ExperimentConfig& cfg) {
  sffn::ModelShape shape;
  shape.layers = cfg.model.layers;
  shape.d = cfg.model.d;
  shape.seq_len = cfg.model.seq_len;
  shape.vocab = cfg.model.vocab_size;
  shape.sffn_layer_count = static_cast<int>(cfg.model.sffn_layers.size());
  shape.selector = cfg.model.sffn.kind;
  shape.geom = cfg.model.sffn.geom;
  shape.d_ell = cfg.model.sffn.d_ell;
  return shape;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& extras,
              const std::vector<std::string>& sets, bool seed_given,
              std::uint64_t seed, const std::string& out_dir) {
  sffn::ExperimentConfig cfg;
  try {
    cfg = load_cfg(config_path, extras, sets, seed_given, seed);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }

  std::printf("training %s | d=%d layers=%d steps=%ld seed=%" PRIu64 "\n",
              sffn::selector_name(cfg.model.sffn.kind), cfg.model.d,
              cfg.model.layers, cfg.steps, cfg.seed);
  const sffn::TrainResult result = sffn::run_experiment(cfg);
  for (const auto& row : result.metrics)
    std::printf("step %6ld  train_loss %-10.6g val_ppl %-10.6g aux %.6g\n",
                row.step, row.train_loss, row.val_ppl, row.aux_loss);
  std::printf("wrote %s/{metrics.csv, config.json, checkpoint.sffn, manifest.json%s}\n",
              cfg.out_dir.c_str(), cfg.emit_trace ? ", trace.csv" : "");
  if (result.diverged) {
    std::fprintf(stderr,
                 "error: training diverged (non-finite loss) at step %ld; "
                 "partial metrics retained\n",
                 result.steps_run + 1);
    return kExitFailure;
  }
  std::printf("val ppl %.6g -> %.6g over %ld steps (%ld params)\n",
              result.initial_val_ppl, result.final_val_ppl, result.steps_run,
              result.num_params);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const std::string& run_dir, std::string config_path,
             std::string checkpoint_path,
             const std::vector<std::string>& extras,
             const std::vector<std::string>& sets, bool seed_given,
             std::uint64_t seed, const std::string& trace_out,
             const std::string& json_out) {
  sffn::ExperimentConfig cfg;
  try {
    if (!run_dir.empty()) {
      if (config_path.empty()) config_path = run_dir + "/config.json";
      if (checkpoint_path.empty())
        checkpoint_path = run_dir + "/checkpoint.sffn";
    }
    if (config_path.empty() || checkpoint_path.empty())
      throw std::runtime_error(
          "eval needs --run DIR or both --config and --checkpoint");
    cfg = load_cfg(config_path, extras, sets, seed_given, seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }

  sffn::TransformerLM model(cfg.model);
  model.load_state(sffn::load_checkpoint(checkpoint_path));
  const std::string corpus = sffn::load_corpus(cfg.data.corpus);
  const double val_loss = sffn::validation_loss(model, cfg, corpus);
  const double val_ppl = std::exp(val_loss);
  std::printf("val_loss %.17g\nval_ppl %.17g\n", val_loss, val_ppl);

  if (!trace_out.empty()) {
    const sffn::RoutingTrace trace = sffn::routing_trace(model, cfg, corpus);
    sffn::write_trace_csv(trace_out, trace);
    std::printf("wrote %s (%zu events)\n", trace_out.c_str(),
                trace.events.size());
  }
  write_json_report(json_out, json{{"val_loss", val_loss},
                                   {"val_ppl", val_ppl},
                                   {"checkpoint", checkpoint_path},
                                   {"selector",
                                    sffn::selector_name(cfg.model.sffn.kind)}});
  return kExitOk;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const std::string& suite, std::uint64_t seed,
               const std::string& json_out) {
  std::vector<sffn::CheckResult> results;
  try {
    results = sffn::verify_suite(suite, seed);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s (choose from equivalence, gradcheck, "
                         "flops, overlap, all)\n",
                 e.what());
    return kExitUsage;
  }
  int failures = 0;
  for (const auto& r : results) {
    std::printf("[%s] %-55s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str());
    if (!r.pass) ++failures;
  }
  std::printf("%d/%zu checks passed\n",
              static_cast<int>(results.size()) - failures, results.size());
  write_json_report(json_out, json{{"suite", suite},
                                   {"seed", seed},
                                   {"passed", failures == 0},
                                   {"checks", check_results_json(results)}});
  return failures == 0 ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------------------
// analyze

int cmd_analyze_overlap(const std::string& trace_path, long pairs,
                        std::uint64_t seed, const std::string& json_out) {
  const sffn::RoutingTrace trace = sffn::read_trace_csv(trace_path);
  sffn::RngStream rng(seed, "analyze.overlap", 0);
  const sffn::OverlapEstimate est =
      sffn::expected_overlap_empirical(trace, pairs, rng);
  json report{{"trace", trace_path},
              {"mean_shared_cells", est.mean},
              {"std_error", est.std_error},
              {"pairs", est.pairs}};
  std::printf("pairs sampled      %" PRId64 "\n", est.pairs);
  std::printf("mean shared cells  %.6g +- %.3g\n", est.mean, est.std_error);
  if (trace.num_blocks > 0 && !trace.events.empty()) {
    const int b = static_cast<int>(trace.events.front().blocks.size());
    const int g = trace.block_size > 0 ? trace.block_size : 1;
    const double expect =
        sffn::expected_overlap_closed_form(trace.num_blocks, b, g);
    std::printf("uniform-routing expectation (B=%d, b=%d, g=%d): %.6g\n",
                trace.num_blocks, b, g, expect);
    report["uniform_expectation"] = expect;
    report["num_blocks"] = trace.num_blocks;
    report["block_size"] = g;
    report["active_blocks"] = b;
  }
  write_json_report(json_out, report);
  return kExitOk;
}

int cmd_analyze_balance(const std::string& trace_path,
                        const std::string& json_out) {
  const sffn::RoutingTrace trace = sffn::read_trace_csv(trace_path);
  const std::vector<double> hist = sffn::load_balance_histogram(trace);
  double max_frac = 0.0, entropy = 0.0;
  for (double f : hist) {
    max_frac = std::max(max_frac, f);
    if (f > 0.0) entropy -= f * std::log(f);
  }
  const double uniform = hist.empty() ? 0.0 : 1.0 / hist.size();
  std::printf("blocks %zu  uniform share %.6g  max share %.6g  "
              "normalized entropy %.6g\n",
              hist.size(), uniform, max_frac,
              hist.size() > 1 ? entropy / std::log(hist.size()) : 1.0);
  for (std::size_t i = 0; i < hist.size(); ++i)
    std::printf("rank %4zu  %.17g\n", i, hist[i]);
  write_json_report(json_out,
                    json{{"trace", trace_path},
                         {"fractions_sorted_desc", hist},
                         {"max_fraction", max_frac}});
  return kExitOk;
}

int cmd_analyze_flops(const std::string& config_path,
                      const std::vector<std::string>& extras,
                      const std::vector<std::string>& sets, double tokens,
                      double factor, const std::string& json_out) {
  sffn::ExperimentConfig cfg;
  try {
    cfg = load_cfg(config_path, extras, sets, false, 0);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  if (tokens <= 0.0)
    tokens = static_cast<double>(cfg.steps) * cfg.data.batch_sequences *
             cfg.model.seq_len;
  const sffn::FlopsBreakdown b =
      sffn::model_flops(shape_from_config(cfg), tokens, factor);
  std::printf("selector           %s\n",
              sffn::selector_name(cfg.model.sffn.kind));
  std::printf("attention MACs/tok %.6g\n", b.attention_macs);
  std::printf("dense FFN MACs/tok %.6g\n", b.dense_ffn_macs);
  std::printf("memory key MACs    %.6g\n", b.sffn_key_macs);
  std::printf("memory value MACs  %.6g\n", b.sffn_value_macs);
  std::printf("head MACs/tok      %.6g\n", b.head_macs);
  std::printf("FLOPs/token (x%g)  %.6g\n", b.factor, b.flops_per_token);
  std::printf("total for %.4g tokens: %.6g FLOPs (%.6g ZFLOPs)\n", tokens,
              b.train_total, b.train_total / 1e21);
  json report = breakdown_json(b);
  report["selector"] = sffn::selector_name(cfg.model.sffn.kind);
  report["token_budget"] = tokens;
  write_json_report(json_out, report);
  return kExitOk;
}

int cmd_analyze_reference(const std::string& json_out) {
  const auto& table = sffn::reference_table();
  std::printf("large-scale reference results (for orientation only; this "
              "codebase does not reproduce them)\n");
  std::printf("%-12s %6s %6s %8s %9s %12s\n", "method", "E", "g", "k",
              "ood_ppl", "train_zflops");
  json arr = json::array();
  for (const auto& e : table) {
    std::printf("%-12s %6.3g %6d %8d %9.5g %12.6g\n", e.method.c_str(), e.E,
                e.g, e.k, e.ood_ppl, e.train_zflops);
    arr.push_back({{"method", e.method},
                   {"E", e.E},
                   {"g", e.g},
                   {"k", e.k},
                   {"ood_ppl", e.ood_ppl},
                   {"train_zflops", e.train_zflops}});
  }
  write_json_report(json_out, json{{"note",
                                    "large-scale reference results; not "
                                    "reproduced by this codebase"},
                                   {"rows", arr}});
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gen-corpus

int cmd_gen_corpus(const std::string& out_path, long bytes,
                   std::uint64_t seed) {
  const std::string text =
      sffn::generate_corpus(static_cast<std::size_t>(bytes), seed);
  sffn::atomic_write_file(out_path, text);
  std::printf("wrote %s (%zu bytes)\n", out_path.c_str(), text.size());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse feed-forward memory laboratory"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::simple);

  // train ------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train a model from a config");
  std::string train_config, train_out;
  std::vector<std::string> train_sets;
  std::uint64_t train_seed = 0;
  train->add_option("--config", train_config, "Experiment config (JSON)")
      ->required();
  train->add_option("--out", train_out, "Output directory (overrides config)");
  train->add_option("--set", train_sets,
                    "Config override path.to.key=value (repeatable)");
  auto* train_seed_opt =
      train->add_option("--seed", train_seed, "Seed override");
  train->allow_extras();

  // eval -------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Evaluate a trained checkpoint");
  std::string eval_run, eval_config, eval_ckpt, eval_trace, eval_json;
  std::vector<std::string> eval_sets;
  std::uint64_t eval_seed = 0;
  eval->add_option("--run", eval_run,
                   "Run directory holding config.json + checkpoint.sffn");
  eval->add_option("--config", eval_config, "Experiment config (JSON)");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file");
  eval->add_option("--trace", eval_trace, "Write a routing trace CSV here");
  eval->add_option("--json", eval_json, "Write a JSON report here");
  eval->add_option("--set", eval_sets,
                   "Config override path.to.key=value (repeatable)");
  auto* eval_seed_opt = eval->add_option("--seed", eval_seed, "Seed override");
  eval->allow_extras();

  // verify -----------------------------------------------------------------
  auto* verify = app.add_subcommand("verify", "Run a verification suite");
  std::string suite = "all", verify_json;
  std::uint64_t verify_seed = 2024;
  verify->add_option("--suite", suite,
                     "equivalence | gradcheck | flops | overlap | all");
  verify->add_option("--seed", verify_seed, "Seed for randomized checks");
  verify->add_option("--json", verify_json, "Write a JSON report here");

  // analyze ----------------------------------------------------------------
  auto* analyze = app.add_subcommand("analyze", "Analyze traces and budgets");
  analyze->require_subcommand(1);

  auto* overlap = analyze->add_subcommand(
      "overlap", "Expected routing overlap between positions");
  std::string overlap_trace, overlap_json;
  long overlap_pairs = 2000;
  std::uint64_t overlap_seed = 2024;
  overlap->add_option("--trace", overlap_trace, "Routing trace CSV")
      ->required();
  overlap->add_option("--pairs", overlap_pairs, "Position pairs per sequence");
  overlap->add_option("--seed", overlap_seed, "Pair-sampling seed");
  overlap->add_option("--json", overlap_json, "Write a JSON report here");

  auto* balance = analyze->add_subcommand(
      "balance", "Per-block usage histogram from a trace");
  std::string balance_trace, balance_json;
  balance->add_option("--trace", balance_trace, "Routing trace CSV")
      ->required();
  balance->add_option("--json", balance_json, "Write a JSON report here");

  auto* flops =
      analyze->add_subcommand("flops", "Analytical training-compute budget");
  std::string flops_config, flops_json;
  std::vector<std::string> flops_sets;
  double flops_tokens = 0.0, flops_factor = 4.0;
  flops->add_option("--config", flops_config, "Experiment config (JSON)")
      ->required();
  flops->add_option("--tokens", flops_tokens,
                    "Token budget (default: steps * batch * seq_len)");
  flops->add_option("--factor", flops_factor,
                    "Forward+backward multiplier on 2*MACs");
  flops->add_option("--set", flops_sets,
                    "Config override path.to.key=value (repeatable)");
  flops->add_option("--json", flops_json, "Write a JSON report here");
  flops->allow_extras();

  auto* reference = analyze->add_subcommand(
      "reference", "Published large-scale reference table");
  std::string reference_json;
  reference->add_option("--json", reference_json, "Write a JSON report here");

  // gen-corpus ---------------------------------------------------------------
  auto* gen =
      app.add_subcommand("gen-corpus", "Write a deterministic synthetic corpus");
  std::string gen_out;
  long gen_bytes = 1 << 20;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "Output path")->required();
  gen->add_option("--bytes", gen_bytes, "Corpus size in bytes");
  gen->add_option("--seed", gen_seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train)
      return cmd_train(train_config, train->remaining(), train_sets,
                       train_seed_opt->count() > 0, train_seed, train_out);
    if (*eval)
      return cmd_eval(eval_run, eval_config, eval_ckpt, eval->remaining(),
                      eval_sets, eval_seed_opt->count() > 0, eval_seed,
                      eval_trace, eval_json);
    if (*verify) return cmd_verify(suite, verify_seed, verify_json);
    if (*overlap)
      return cmd_analyze_overlap(overlap_trace, overlap_pairs, overlap_seed,
                                 overlap_json);
    if (*balance) return cmd_analyze_balance(balance_trace, balance_json);
    if (*flops)
      return cmd_analyze_flops(flops_config, flops->remaining(), flops_sets,
                               flops_tokens, flops_factor, flops_json);
    if (*reference) return cmd_analyze_reference(reference_json);
    if (*gen) return cmd_gen_corpus(gen_out, gen_bytes, gen_seed);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
