#include "sffn/train.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "sffn/checkpoint.hpp"
#include "sffn/corpus.hpp"
#include "sffn/flops.hpp"
#include "sffn/io.hpp"
#include "sffn/loss.hpp"
#include "sffn/optimizer.hpp"
#include "sffn/rng.hpp"

namespace sffn {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct SplitCorpus {
  const std::string* bytes = nullptr;
  long train_len = 0;  // usable head
  long val_begin = 0;
  long val_len = 0;    // held-out tail
};

SplitCorpus split_corpus(const ExperimentConfig& cfg,
                         const std::string& corpus) {
  const long window = static_cast<long>(cfg.model.seq_len) + 1;
  SplitCorpus sc;
  sc.bytes = &corpus;
  const long size = static_cast<long>(corpus.size());
  sc.val_begin = static_cast<long>(
      std::floor(static_cast<double>(size) * (1.0 - cfg.data.val_fraction)));
  sc.train_len = sc.val_begin;
  sc.val_len = size - sc.val_begin;
  if (sc.train_len < window || sc.val_len < window)
    throw std::runtime_error(
        "corpus too small for the sequence length and validation split");
  return sc;
}

void fill_window(const std::string& bytes, long start, int seq_len,
                 std::vector<int>& tokens, std::vector<int>& targets,
                 int offset) {
  for (int j = 0; j < seq_len; ++j) {
    tokens[static_cast<std::size_t>(offset + j)] =
        static_cast<unsigned char>(bytes[static_cast<std::size_t>(start + j)]);
    targets[static_cast<std::size_t>(offset + j)] = static_cast<unsigned char>(
        bytes[static_cast<std::size_t>(start + j + 1)]);
  }
}

// Start offset of validation window w (fixed across the run).
long val_window_start(const ExperimentConfig& cfg, const SplitCorpus& sc,
                      int w) {
  RngStream rng(cfg.seed, "val", static_cast<std::uint64_t>(w));
  const long window = static_cast<long>(cfg.model.seq_len) + 1;
  const long span = sc.val_len - window + 1;
  return sc.val_begin + static_cast<long>(
                            rng.uniform_below(static_cast<std::uint64_t>(span)));
}

double eval_val_loss(TransformerLM& model, const ExperimentConfig& cfg,
                     const SplitCorpus& sc) {
  const int T = cfg.model.seq_len;
  std::vector<int> tokens(static_cast<std::size_t>(T));
  std::vector<int> targets(static_cast<std::size_t>(T));
  double total = 0.0;
  for (int w = 0; w < cfg.data.val_windows; ++w) {
    fill_window(*sc.bytes, val_window_start(cfg, sc, w), T, tokens, targets, 0);
    Matrix logits;
    model.forward(tokens, 1, RunMode::Eval, 0, logits);
    total += cross_entropy_loss(logits, targets, nullptr);
  }
  return total / cfg.data.val_windows;
}

bool uses_balance_penalty(const ExperimentConfig& cfg) {
  return cfg.model.sffn.kind == SelectorKind::Switch;
}

}  // namespace

double validation_loss(TransformerLM& model, const ExperimentConfig& cfg,
                       const std::string& corpus) {
  const SplitCorpus sc = split_corpus(cfg, corpus);
  return eval_val_loss(model, cfg, sc);
}

RoutingTrace routing_trace(TransformerLM& model, const ExperimentConfig& cfg,
                           const std::string& corpus) {
  const SplitCorpus sc = split_corpus(cfg, corpus);
  const int T = cfg.model.seq_len;
  RoutingTrace trace;
  std::vector<int> tokens(static_cast<std::size_t>(T));
  std::vector<int> targets(static_cast<std::size_t>(T));
  for (int w = 0; w < cfg.data.val_windows; ++w) {
    fill_window(*sc.bytes, val_window_start(cfg, sc, w), T, tokens, targets, 0);
    Matrix logits;
    ModelCache cache = model.forward(tokens, 1, RunMode::Eval, 0, logits);
    for (int l = 0; l < cfg.model.layers; ++l) {
      SffnLayer& layer = model.ffn(l);
      if (!layer.routes_tokens() || !model.is_sffn_layer(l)) continue;
      trace.num_blocks = layer.view_blocks();
      trace.block_size = layer.view_block_size();
      const SffnLayerCache& fc =
          cache.blocks[static_cast<std::size_t>(l)].ffn;
      for (int p = 0; p < T; ++p) {
        RouteEvent ev;
        ev.layer = l;
        ev.seq = w;
        ev.pos = p;
        ev.token = tokens[static_cast<std::size_t>(p)];
        ev.blocks = fc.routes[static_cast<std::size_t>(p)].view;
        trace.events.push_back(std::move(ev));
      }
    }
  }
  return trace;
}

TrainResult train_lm(const ExperimentConfig& cfg, const std::string& corpus,
                     TransformerLM* model_out) {
  const SplitCorpus sc = split_corpus(cfg, corpus);
  if (model_out) *model_out = TransformerLM(cfg.model);
  TransformerLM local(cfg.model);
  TransformerLM& model = model_out ? *model_out : local;
  model.init_params();

  OptimizerConfig oc = cfg.optimizer;
  if (oc.total_steps <= 0) oc.total_steps = std::max<long>(cfg.steps, 1);
  AdamW opt(oc);
  std::vector<ParamRef> params = model.params();

  TrainResult result;
  result.num_params = model.num_params();

  const int S = cfg.data.batch_sequences;
  const int T = cfg.model.seq_len;
  const int N = S * T;
  const long window = static_cast<long>(T) + 1;
  const bool balance = uses_balance_penalty(cfg);
  const int num_experts = cfg.model.sffn.geom.blocks();

  result.initial_val_ppl = std::exp(eval_val_loss(model, cfg, sc));
  result.metrics.push_back({0, kNan, result.initial_val_ppl, kNan});

  std::vector<int> tokens(static_cast<std::size_t>(N));
  std::vector<int> targets(static_cast<std::size_t>(N));

  double ce_acc = 0.0, aux_acc = 0.0;
  long acc_rows = 0;

  for (long step = 1; step <= cfg.steps; ++step) {
    for (int i = 0; i < S; ++i) {
      RngStream rng(cfg.seed, "data",
                    static_cast<std::uint64_t>(step) *
                            static_cast<std::uint64_t>(S) +
                        static_cast<std::uint64_t>(i));
      const long span = sc.train_len - window + 1;
      const long start = static_cast<long>(
          rng.uniform_below(static_cast<std::uint64_t>(span)));
      fill_window(*sc.bytes, start, T, tokens, targets, i * T);
    }

    Matrix logits;
    ModelCache cache =
        model.forward(tokens, S, RunMode::Train, step, logits);
    Matrix dlogits;
    const double ce = cross_entropy_loss(logits, targets, &dlogits);

    double aux = kNan;
    std::vector<Matrix> dprobs;
    if (balance) {
      aux = 0.0;
      dprobs.resize(static_cast<std::size_t>(cfg.model.layers));
      for (int l = 0; l < cfg.model.layers; ++l) {
        if (!model.is_sffn_layer(l)) continue;
        const SffnLayerCache& fc =
            cache.blocks[static_cast<std::size_t>(l)].ffn;
        std::vector<int> dispatch;
        dispatch.reserve(fc.routes.size());
        for (const TokenRouting& rt : fc.routes)
          dispatch.push_back(rt.switch_block);
        aux += switch_balance_loss(fc.probs, dispatch);
        Matrix g = switch_balance_loss_grad(fc.probs, dispatch);
        for (double& v : g.data) v *= cfg.aux_weight;
        dprobs[static_cast<std::size_t>(l)] = std::move(g);
      }
    }

    if (!std::isfinite(ce) || (balance && !std::isfinite(aux))) {
      result.diverged = true;
      result.steps_run = step - 1;
      break;
    }

    model.zero_grads();
    model.backward(cache, dlogits, dprobs);
    if (balance) scale_expert_grads(params, num_experts);
    opt.step(params);

    result.step_losses.push_back(ce);
    ce_acc += ce;
    if (balance) aux_acc += aux;
    ++acc_rows;
    result.steps_run = step;

    if (step % cfg.eval_interval == 0 || step == cfg.steps) {
      const double vloss = eval_val_loss(model, cfg, sc);
      MetricsRow row;
      row.step = step;
      row.train_loss = ce_acc / static_cast<double>(acc_rows);
      row.val_ppl = std::exp(vloss);
      row.aux_loss = balance ? aux_acc / static_cast<double>(acc_rows) : kNan;
      result.metrics.push_back(row);
      ce_acc = aux_acc = 0.0;
      acc_rows = 0;
      result.final_val_ppl = row.val_ppl;
    }
  }
  if (result.metrics.size() == 1)  // no eval row reached (e.g. divergence)
    result.final_val_ppl = result.initial_val_ppl;
  return result;
}

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "step,train_loss,val_ppl,aux_loss\n";
  for (const MetricsRow& r : rows) {
    out += std::to_string(r.step);
    out += ',';
    out += format_double(r.train_loss);
    out += ',';
    out += format_double(r.val_ppl);
    out += ',';
    out += format_double(r.aux_loss);
    out += '\n';
  }
  return out;
}

}  // namespace

TrainResult run_experiment(const ExperimentConfig& cfg) {
  const std::string corpus = load_corpus(cfg.data.corpus);
  ensure_directory(cfg.out_dir);

  TransformerLM model(cfg.model);
  TrainResult result = train_lm(cfg, corpus, &model);

  atomic_write_file(cfg.out_dir + "/metrics.csv", metrics_csv(result.metrics));
  atomic_write_file(cfg.out_dir + "/config.json", config_to_json(cfg) + "\n");
  save_checkpoint(cfg.out_dir + "/checkpoint.sffn", model.state());

  ModelShape shape;
  shape.layers = cfg.model.layers;
  shape.d = cfg.model.d;
  shape.seq_len = cfg.model.seq_len;
  shape.vocab = cfg.model.vocab_size;
  shape.sffn_layer_count = static_cast<int>(cfg.model.sffn_layers.size());
  shape.selector = cfg.model.sffn.kind;
  shape.geom = cfg.model.sffn.geom;
  shape.d_ell = cfg.model.sffn.d_ell;
  const double tokens_trained = static_cast<double>(result.steps_run) *
                                static_cast<double>(cfg.data.batch_sequences) *
                                static_cast<double>(cfg.model.seq_len);
  const FlopsBreakdown fb = model_flops(shape, tokens_trained);

  char hash_buf[32];
  std::snprintf(hash_buf, sizeof(hash_buf), "%016" PRIx64 , config_hash(cfg));
  std::string manifest = "{\n";
  manifest += "  \"version\": \"0.1.0\",\n";
  manifest += "  \"config_hash\": \"" + std::string(hash_buf) + "\",\n";
  manifest += "  \"seed\": " + std::to_string(cfg.seed) + ",\n";
  manifest += "  \"selector\": \"" +
              std::string(selector_name(cfg.model.sffn.kind)) + "\",\n";
  manifest += "  \"num_params\": " + std::to_string(result.num_params) + ",\n";
  manifest += "  \"steps_run\": " + std::to_string(result.steps_run) + ",\n";
  manifest += "  \"diverged\": " +
              std::string(result.diverged ? "true" : "false") + ",\n";
  manifest += "  \"initial_val_ppl\": " + format_double(result.initial_val_ppl) +
              ",\n";
  manifest += "  \"final_val_ppl\": " + format_double(result.final_val_ppl) +
              ",\n";
  manifest += "  \"flops_per_token\": " + format_double(fb.flops_per_token) +
              ",\n";
  manifest += "  \"train_flops\": " + format_double(fb.train_total) + "\n";
  manifest += "}\n";
  atomic_write_file(cfg.out_dir + "/manifest.json", manifest);

  if (cfg.emit_trace) {
    const RoutingTrace trace = routing_trace(model, cfg, corpus);
    write_trace_csv(cfg.out_dir + "/trace.csv", trace);
  }
  return result;
}

}  // namespace sffn
