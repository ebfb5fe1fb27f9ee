#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sffn/model.hpp"
#include "sffn/optimizer.hpp"

namespace sffn {

struct DataConfig {
  std::string corpus;          // path to the training bytes
  double val_fraction = 0.1;   // tail fraction held out for validation
  int batch_sequences = 8;     // sequences per step
  int val_windows = 16;        // validation windows per evaluation
};

struct ExperimentConfig {
  ModelConfig model;
  OptimizerConfig optimizer;
  DataConfig data;
  long steps = 1000;
  long eval_interval = 100;
  std::uint64_t seed = 0;
  std::string out_dir = "run";
  bool emit_trace = false;     // write routing traces during evaluation
  double aux_weight = 0.01;    // balance-penalty weight (Switch)
};

// Parses a config from JSON text. Unknown keys are rejected with their
// dotted path; geometry accepts either "e" (d_m = e * 4 * d) or "d_m".
// Missing "sffn_layers" falls back to the default placement; missing
// optimizer total_steps follows "steps".
ExperimentConfig config_from_json(const std::string& text);

// Reads the file at path, then applies overrides of the form
// "dotted.path=value" (value parsed as JSON when possible, else a string).
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});

// Canonical JSON rendering (sorted keys, resolved defaults). Two configs
// are interchangeable iff their canonical strings match.
std::string config_to_json(const ExperimentConfig& cfg);

// FNV-1a hash of the canonical rendering.
std::uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace sffn
