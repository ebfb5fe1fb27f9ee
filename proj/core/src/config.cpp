#include "sffn/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "json.hpp"

#include "sffn/io.hpp"

namespace sffn {
namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& path, const std::string& why) {
  throw std::runtime_error("config: " + path + ": " + why);
}

// Rejects keys that no reader consumed, naming them by dotted path.
void check_keys(const json& obj, const std::string& path,
                const std::set<std::string>& allowed) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key))
      bad(path.empty() ? key : path + "." + key, "unknown key");
  }
}

template <typename T>
T get_or(const json& obj, const std::string& path, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    bad(path + "." + key, "wrong type");
  }
}

SffnLayerConfig parse_selector(const json& obj, const std::string& path) {
  check_keys(obj, path, {"kind", "aggregator", "d_ell", "batch_norm",
                         "controller_low_rank", "sabotage_pct"});
  SffnLayerConfig sel;
  const std::string kind = get_or<std::string>(obj, path, "kind", "dense");
  const auto parsed = selector_from_name(kind);
  if (!parsed) bad(path + ".kind", "unknown selector '" + kind + "'");
  sel.kind = *parsed;
  const std::string agg =
      get_or<std::string>(obj, path, "aggregator", "avg");
  const auto pagg = aggregator_from_name(agg);
  if (!pagg) bad(path + ".aggregator", "unknown aggregator '" + agg + "'");
  sel.aggregator = *pagg;
  sel.d_ell = get_or<int>(obj, path, "d_ell", 0);
  // Normalization of the factorized query defaults on for product keys.
  const bool default_norm =
      sel.kind == SelectorKind::Pkm || sel.kind == SelectorKind::PkmFfn;
  sel.batch_norm = get_or<bool>(obj, path, "batch_norm", default_norm);
  sel.controller_low_rank =
      get_or<bool>(obj, path, "controller_low_rank", false);
  sel.sabotage_pct = get_or<double>(obj, path, "sabotage_pct", 0.0);
  return sel;
}

MemoryGeometry parse_geometry(const json& obj, const std::string& path,
                              int d, SelectorKind kind) {
  check_keys(obj, path, {"e", "d_m", "g", "k"});
  if (obj.contains("e") && obj.contains("d_m"))
    bad(path, "give either e or d_m, not both");
  int d_m = 0;
  if (obj.contains("d_m")) {
    d_m = get_or<int>(obj, path, "d_m", 0);
  } else {
    const double e = get_or<double>(obj, path, "e", 1.0);
    const double exact = e * 4.0 * static_cast<double>(d);
    d_m = static_cast<int>(std::llround(exact));
    if (std::abs(exact - static_cast<double>(d_m)) > 1e-9)
      bad(path + ".e", "e * 4 * d must be an integer memory size");
  }
  int g = get_or<int>(obj, path, "g", 0);
  int k = get_or<int>(obj, path, "k", 0);
  if (kind == SelectorKind::Dense) {
    if (g == 0) g = d_m;
    if (k == 0) k = d_m;
  }
  return MemoryGeometry::make(d, d_m, g, k);
}

ModelConfig parse_model(const json& obj, const std::string& path) {
  check_keys(obj, path, {"layers", "d", "heads", "seq_len", "vocab_size",
                         "sffn_layers", "geometry", "selector"});
  ModelConfig mc;
  mc.layers = get_or<int>(obj, path, "layers", mc.layers);
  mc.d = get_or<int>(obj, path, "d", mc.d);
  mc.heads = get_or<int>(obj, path, "heads", mc.heads);
  mc.seq_len = get_or<int>(obj, path, "seq_len", mc.seq_len);
  mc.vocab_size = get_or<int>(obj, path, "vocab_size", mc.vocab_size);
  if (obj.contains("sffn_layers")) {
    mc.sffn_layers =
        get_or<std::vector<int>>(obj, path, "sffn_layers", {});
  } else {
    mc.sffn_layers = default_sffn_layers(mc.layers);
  }
  if (obj.contains("selector"))
    mc.sffn = parse_selector(obj.at("selector"), path + ".selector");
  if (obj.contains("geometry")) {
    mc.sffn.geom = parse_geometry(obj.at("geometry"), path + ".geometry",
                                  mc.d, mc.sffn.kind);
  } else if (mc.sffn.kind == SelectorKind::Dense) {
    mc.sffn.geom =
        MemoryGeometry::make(mc.d, 4 * mc.d, 4 * mc.d, 4 * mc.d);
  } else {
    bad(path + ".geometry", "required for sparse selectors");
  }
  return mc;
}

OptimizerConfig parse_optimizer(const json& obj, const std::string& path) {
  check_keys(obj, path,
             {"peak_lr", "beta1", "beta2", "eps", "weight_decay",
              "warmup_steps", "total_steps", "decay_power"});
  OptimizerConfig oc;
  oc.peak_lr = get_or<double>(obj, path, "peak_lr", oc.peak_lr);
  oc.beta1 = get_or<double>(obj, path, "beta1", oc.beta1);
  oc.beta2 = get_or<double>(obj, path, "beta2", oc.beta2);
  oc.eps = get_or<double>(obj, path, "eps", oc.eps);
  oc.weight_decay = get_or<double>(obj, path, "weight_decay", oc.weight_decay);
  oc.warmup_steps = get_or<long>(obj, path, "warmup_steps", oc.warmup_steps);
  oc.total_steps = get_or<long>(obj, path, "total_steps", 0);
  oc.decay_power = get_or<double>(obj, path, "decay_power", oc.decay_power);
  return oc;
}

DataConfig parse_data(const json& obj, const std::string& path) {
  check_keys(obj, path,
             {"corpus", "val_fraction", "batch_sequences", "val_windows"});
  DataConfig dc;
  dc.corpus = get_or<std::string>(obj, path, "corpus", dc.corpus);
  dc.val_fraction = get_or<double>(obj, path, "val_fraction", dc.val_fraction);
  dc.batch_sequences =
      get_or<int>(obj, path, "batch_sequences", dc.batch_sequences);
  dc.val_windows = get_or<int>(obj, path, "val_windows", dc.val_windows);
  return dc;
}

ExperimentConfig from_parsed(const json& root) {
  if (!root.is_object()) throw std::runtime_error("config: not a JSON object");
  check_keys(root, "",
             {"model", "optimizer", "data", "steps", "eval_interval", "seed",
              "out_dir", "emit_trace", "aux_weight"});
  ExperimentConfig cfg;
  cfg.steps = get_or<long>(root, "", "steps", cfg.steps);
  cfg.eval_interval = get_or<long>(root, "", "eval_interval", cfg.eval_interval);
  cfg.seed = get_or<std::uint64_t>(root, "", "seed", cfg.seed);
  cfg.out_dir = get_or<std::string>(root, "", "out_dir", cfg.out_dir);
  cfg.emit_trace = get_or<bool>(root, "", "emit_trace", cfg.emit_trace);
  cfg.aux_weight = get_or<double>(root, "", "aux_weight", cfg.aux_weight);
  if (root.contains("model")) {
    cfg.model = parse_model(root.at("model"), "model");
  } else {
    cfg.model.sffn_layers = default_sffn_layers(cfg.model.layers);
    cfg.model.sffn.geom = MemoryGeometry::make(
        cfg.model.d, 4 * cfg.model.d, 4 * cfg.model.d, 4 * cfg.model.d);
  }
  if (root.contains("optimizer"))
    cfg.optimizer = parse_optimizer(root.at("optimizer"), "optimizer");
  if (root.contains("data")) cfg.data = parse_data(root.at("data"), "data");
  if (cfg.optimizer.total_steps <= 0)
    cfg.optimizer.total_steps = std::max<long>(cfg.steps, 1);
  cfg.model.seed = cfg.seed;
  if (cfg.steps < 0) throw std::runtime_error("config: steps must be >= 0");
  if (cfg.eval_interval <= 0)
    throw std::runtime_error("config: eval_interval must be > 0");
  if (cfg.data.val_fraction <= 0.0 || cfg.data.val_fraction >= 1.0)
    throw std::runtime_error("config: val_fraction must be in (0, 1)");
  if (cfg.data.batch_sequences <= 0 || cfg.data.val_windows <= 0)
    throw std::runtime_error("config: batch sizes must be > 0");
  return cfg;
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config: invalid JSON: ") + e.what());
  }
}

// Applies one "a.b.c=value" override onto the parsed tree.
void apply_override(json& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::runtime_error("override must look like path.to.key=value: " +
                             spec);
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // bare strings stay strings
  }
  json* node = &root;
  std::size_t begin = 0;
  while (true) {
    const auto dotpos = path.find('.', begin);
    const std::string key = path.substr(
        begin, dotpos == std::string::npos ? std::string::npos
                                           : dotpos - begin);
    if (key.empty())
      throw std::runtime_error("override has an empty path segment: " + spec);
    if (dotpos == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    begin = dotpos + 1;
  }
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  return from_parsed(parse_text(text));
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides) {
  json root = parse_text(read_file(path));
  for (const std::string& o : overrides) apply_override(root, o);
  return from_parsed(root);
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json root;
  root["steps"] = cfg.steps;
  root["eval_interval"] = cfg.eval_interval;
  root["seed"] = cfg.seed;
  root["out_dir"] = cfg.out_dir;
  root["emit_trace"] = cfg.emit_trace;
  root["aux_weight"] = cfg.aux_weight;
  json model;
  model["layers"] = cfg.model.layers;
  model["d"] = cfg.model.d;
  model["heads"] = cfg.model.heads;
  model["seq_len"] = cfg.model.seq_len;
  model["vocab_size"] = cfg.model.vocab_size;
  model["sffn_layers"] = cfg.model.sffn_layers;
  json sel;
  sel["kind"] = selector_name(cfg.model.sffn.kind);
  sel["aggregator"] = aggregator_name(cfg.model.sffn.aggregator);
  sel["d_ell"] = cfg.model.sffn.d_ell;
  sel["batch_norm"] = cfg.model.sffn.batch_norm;
  sel["controller_low_rank"] = cfg.model.sffn.controller_low_rank;
  sel["sabotage_pct"] = cfg.model.sffn.sabotage_pct;
  model["selector"] = sel;
  json geom;
  geom["d_m"] = cfg.model.sffn.geom.d_m;
  geom["g"] = cfg.model.sffn.geom.g;
  geom["k"] = cfg.model.sffn.geom.k;
  model["geometry"] = geom;
  root["model"] = model;
  json opt;
  opt["peak_lr"] = cfg.optimizer.peak_lr;
  opt["beta1"] = cfg.optimizer.beta1;
  opt["beta2"] = cfg.optimizer.beta2;
  opt["eps"] = cfg.optimizer.eps;
  opt["weight_decay"] = cfg.optimizer.weight_decay;
  opt["warmup_steps"] = cfg.optimizer.warmup_steps;
  opt["total_steps"] = cfg.optimizer.total_steps;
  opt["decay_power"] = cfg.optimizer.decay_power;
  root["optimizer"] = opt;
  json data;
  data["corpus"] = cfg.data.corpus;
  data["val_fraction"] = cfg.data.val_fraction;
  data["batch_sequences"] = cfg.data.batch_sequences;
  data["val_windows"] = cfg.data.val_windows;
  root["data"] = data;
  return root.dump(2);
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string canon = config_to_json(cfg);
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a 64-bit
  for (const unsigned char c : canon) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace sffn
