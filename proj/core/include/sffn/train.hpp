#pragma once

#include <string>
#include <vector>

#include "sffn/config.hpp"
#include "sffn/model.hpp"
#include "sffn/trace.hpp"

namespace sffn {

struct MetricsRow {
  long step = 0;
  double train_loss = 0.0;  // mean token cross entropy since the last row
  double val_ppl = 0.0;     // exp(mean validation cross entropy)
  double aux_loss = 0.0;    // mean unscaled balance penalty (NaN if unused)
};

struct TrainResult {
  std::vector<MetricsRow> metrics;
  std::vector<double> step_losses;  // per-step training cross entropy
  double initial_val_ppl = 0.0;
  double final_val_ppl = 0.0;
  long steps_run = 0;
  bool diverged = false;
  long num_params = 0;
};

// Deterministic sampling plan: training windows for step s (1-based) draw
// their start offsets from streams keyed (seed, "data", s * batch + i) over
// the head of the corpus; validation windows w key (seed, "val", w) over the
// held-out tail and stay fixed for the whole run.

// Trains in memory on the given corpus bytes. Writes nothing.
TrainResult train_lm(const ExperimentConfig& cfg, const std::string& corpus,
                     TransformerLM* model_out = nullptr);

// Mean validation cross entropy of the model under the config's fixed
// validation windows.
double validation_loss(TransformerLM& model, const ExperimentConfig& cfg,
                       const std::string& corpus);

// Routing trace over the validation windows (one event per token per memory
// layer). Empty when the model has no routing memory layers.
RoutingTrace routing_trace(TransformerLM& model, const ExperimentConfig& cfg,
                           const std::string& corpus);

// Full experiment: loads the corpus, trains, and writes metrics.csv,
// checkpoint.sffn, config.json, manifest.json (and trace.csv when
// emit_trace) under cfg.out_dir.
TrainResult run_experiment(const ExperimentConfig& cfg);

}  // namespace sffn
