#include "sffn/selectors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "sffn/ops.hpp"

namespace sffn {

const char* selector_name(SelectorKind kind) {
  switch (kind) {
    case SelectorKind::Dense: return "dense";
    case SelectorKind::VanillaM: return "vanillam";
    case SelectorKind::AvgK: return "avg-k";
    case SelectorKind::RandHash: return "randhash";
    case SelectorKind::Switch: return "switch";
    case SelectorKind::Pkm: return "pkm";
    case SelectorKind::Lorkm: return "lorkm";
    case SelectorKind::PkmFfn: return "pkm-ffn";
    case SelectorKind::Controller: return "controller";
    case SelectorKind::NaiveAnn: return "naive-ann";
  }
  return "unknown";
}

std::optional<SelectorKind> selector_from_name(std::string_view name) {
  static constexpr SelectorKind kAll[] = {
      SelectorKind::Dense,    SelectorKind::VanillaM, SelectorKind::AvgK,
      SelectorKind::RandHash, SelectorKind::Switch,   SelectorKind::Pkm,
      SelectorKind::Lorkm,    SelectorKind::PkmFfn,   SelectorKind::Controller,
      SelectorKind::NaiveAnn};
  for (const auto kind : kAll) {
    if (name == selector_name(kind)) return kind;
  }
  return std::nullopt;
}

const char* aggregator_name(Aggregator agg) {
  switch (agg) {
    case Aggregator::Avg: return "avg";
    case Aggregator::AvgAbs: return "avg-abs";
    case Aggregator::Max: return "max";
    case Aggregator::Min: return "min";
  }
  return "unknown";
}

std::optional<Aggregator> aggregator_from_name(std::string_view name) {
  static constexpr Aggregator kAll[] = {Aggregator::Avg, Aggregator::AvgAbs,
                                        Aggregator::Max, Aggregator::Min};
  for (const auto agg : kAll) {
    if (name == aggregator_name(agg)) return agg;
  }
  return std::nullopt;
}

namespace {

void check_keys(const char* op, const Matrix& K, const MemoryGeometry& geom,
                size_t xlen) {
  if (K.rows != geom.d_m || K.cols != geom.d ||
      static_cast<int>(xlen) != geom.d) {
    throw std::invalid_argument(std::string(op) +
                                ": keys/input disagree with geometry");
  }
}

BlockSelection unit_selection(std::vector<int> indices) {
  BlockSelection sel;
  sel.weights.assign(indices.size(), 1.0);
  sel.indices = std::move(indices);
  return sel;
}

}  // namespace

std::vector<double> aggregate_block_scores(std::span<const double> m, int g,
                                           Aggregator agg) {
  if (g <= 0 || m.empty() || m.size() % static_cast<size_t>(g) != 0) {
    throw std::invalid_argument(
        "aggregate_block_scores: block size must divide the coefficients");
  }
  const int B = static_cast<int>(m.size()) / g;
  std::vector<double> scores(static_cast<size_t>(B));
  for (int i = 0; i < B; ++i) {
    const int base = i * g;
    double acc = 0.0;
    for (int j = 0; j < g; ++j) {
      const double v = m[static_cast<size_t>(base + j)];
      switch (agg) {
        case Aggregator::Avg: acc += v; break;
        case Aggregator::AvgAbs: acc += std::abs(v); break;
        case Aggregator::Max: acc = j == 0 ? v : std::max(acc, v); break;
        case Aggregator::Min: acc = j == 0 ? v : std::min(acc, v); break;
      }
    }
    if (agg == Aggregator::Avg || agg == Aggregator::AvgAbs) acc /= g;
    scores[static_cast<size_t>(i)] = acc;
  }
  return scores;
}

std::vector<double> score_vanilla(std::span<const double> x, const Matrix& K,
                                  const MemoryGeometry& geom, Aggregator agg) {
  check_keys("score_vanilla", K, geom, x.size());
  std::vector<double> m(static_cast<size_t>(geom.d_m));
  for (int i = 0; i < geom.d_m; ++i) {
    m[static_cast<size_t>(i)] = gelu(dot(x, K.row(i)));
  }
  return aggregate_block_scores(m, geom.g, agg);
}

BlockSelection select_vanillam(std::span<const double> x, const Matrix& K,
                               const MemoryGeometry& geom, Aggregator agg) {
  const auto scores = score_vanilla(x, K, geom, agg);
  return unit_selection(topk_indices(scores, geom.active_blocks()));
}

std::vector<double> score_avgk(std::span<const double> x, const Matrix& K,
                               const MemoryGeometry& geom) {
  check_keys("score_avgk", K, geom, x.size());
  const int B = geom.blocks();
  std::vector<double> scores(static_cast<size_t>(B));
  std::vector<double> mean(static_cast<size_t>(geom.d));
  for (int i = 0; i < B; ++i) {
    std::fill(mean.begin(), mean.end(), 0.0);
    const int base = i * geom.g;
    for (int j = 0; j < geom.g; ++j) axpy(1.0, K.row(base + j), mean);
    for (double& v : mean) v /= geom.g;
    scores[static_cast<size_t>(i)] = dot(mean, x);
  }
  return scores;
}

BlockSelection select_avgk(std::span<const double> x, const Matrix& K,
                           const MemoryGeometry& geom) {
  const auto scores = score_avgk(x, K, geom);
  return unit_selection(topk_indices(scores, geom.active_blocks()));
}

HashGateTable build_randhash(int vocab_size, const MemoryGeometry& geom,
                             std::uint64_t seed) {
  if (vocab_size <= 0) {
    throw std::invalid_argument("build_randhash: vocab_size must be > 0");
  }
  HashGateTable table;
  table.vocab_size = vocab_size;
  table.num_blocks = geom.blocks();
  table.active_blocks = geom.active_blocks();
  table.ids.resize(static_cast<size_t>(vocab_size) *
                   static_cast<size_t>(table.active_blocks));
  for (int t = 0; t < vocab_size; ++t) {
    // One sub-stream per token type: the table is a pure function of
    // (seed, vocab position), independent of build order.
    RngStream rng(seed, "randhash", static_cast<std::uint64_t>(t));
    const auto row =
        rng.sample_without_replacement(table.num_blocks, table.active_blocks);
    std::copy(row.begin(), row.end(),
              table.ids.begin() + static_cast<size_t>(t) *
                                      static_cast<size_t>(table.active_blocks));
  }
  return table;
}

BlockSelection select_randhash(int token_id, const HashGateTable& table) {
  if (token_id < 0 || token_id >= table.vocab_size) {
    throw std::invalid_argument("select_randhash: token id " +
                                std::to_string(token_id) +
                                " outside vocabulary of size " +
                                std::to_string(table.vocab_size));
  }
  const auto row = table.row(token_id);
  return unit_selection(std::vector<int>(row.begin(), row.end()));
}

std::vector<double> gate_softmax(std::span<const double> x,
                                 const Matrix& expert_emb) {
  if (static_cast<size_t>(expert_emb.cols) != x.size()) {
    throw std::invalid_argument("gate_softmax: embedding width mismatch");
  }
  std::vector<double> logits(static_cast<size_t>(expert_emb.rows));
  for (int i = 0; i < expert_emb.rows; ++i) {
    logits[static_cast<size_t>(i)] = dot(x, expert_emb.row(i));
  }
  return softmax(logits);
}

BlockSelection select_switch(std::span<const double> x,
                             const Matrix& expert_emb) {
  const auto probs = gate_softmax(x, expert_emb);
  int arg = 0;
  for (size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[static_cast<size_t>(arg)]) arg = static_cast<int>(i);
  }
  BlockSelection sel;
  sel.indices = {arg};
  sel.weights = {probs[static_cast<size_t>(arg)]};
  return sel;
}

LowRankKeys make_low_rank_keys(int d, int d_m, int d_ell, bool use_norm) {
  if (d <= 0 || d_m <= 0 || d_ell <= 0 || d_ell > d) {
    throw std::invalid_argument(
        "make_low_rank_keys: need 0 < d_ell <= d and positive sizes");
  }
  LowRankKeys keys;
  keys.D = Matrix(d, d_ell);
  keys.Ktilde = Matrix(d_m, d_ell);
  keys.use_norm = use_norm;
  keys.norm = BatchNorm1d(d_ell);
  return keys;
}

ProductKeys make_product_keys(int d, int d_m, int d_ell, bool use_norm) {
  if (d <= 0 || d_m <= 0 || d_ell <= 0 || d_ell > d) {
    throw std::invalid_argument(
        "make_product_keys: need 0 < d_ell <= d and positive sizes");
  }
  if (d_ell % 2 != 0) {
    throw std::invalid_argument(
        "make_product_keys: d_ell must be even (the query splits in half)");
  }
  const int r = static_cast<int>(std::lround(std::sqrt(
      static_cast<double>(d_m))));
  if (r * r != d_m) {
    throw std::invalid_argument("make_product_keys: memory size " +
                                std::to_string(d_m) +
                                " must be a perfect square");
  }
  ProductKeys keys;
  keys.D = Matrix(d, d_ell);
  keys.C = Matrix(r, d_ell / 2);
  keys.Cprime = Matrix(r, d_ell / 2);
  keys.use_norm = use_norm;
  keys.norm = BatchNorm1d(d_ell);
  return keys;
}

namespace {

std::vector<double> project_query(std::span<const double> x, const Matrix& D,
                                  bool use_norm, const BatchNorm1d& norm) {
  if (static_cast<size_t>(D.rows) != x.size()) {
    throw std::invalid_argument("factorized scorer: query width mismatch");
  }
  Matrix t(1, D.cols);
  for (int j = 0; j < D.cols; ++j) {
    double acc = 0.0;
    for (int i = 0; i < D.rows; ++i) acc += x[static_cast<size_t>(i)] * D(i, j);
    t(0, j) = acc;
  }
  if (use_norm) t = norm.forward_eval(t);
  return t.data;
}

}  // namespace

std::vector<double> lorkm_scores(std::span<const double> x,
                                 const LowRankKeys& keys) {
  const auto t = project_query(x, keys.D, keys.use_norm, keys.norm);
  std::vector<double> m(static_cast<size_t>(keys.Ktilde.rows));
  for (int i = 0; i < keys.Ktilde.rows; ++i) {
    m[static_cast<size_t>(i)] = gelu(dot(t, keys.Ktilde.row(i)));
  }
  return m;
}

std::vector<double> pkm_scores(std::span<const double> x,
                               const ProductKeys& keys) {
  const auto t = project_query(x, keys.D, keys.use_norm, keys.norm);
  const int r = keys.side();
  const int half = keys.D.cols / 2;
  const std::span<const double> head(t.data(), static_cast<size_t>(half));
  const std::span<const double> tail(t.data() + half,
                                     static_cast<size_t>(half));
  std::vector<double> s(static_cast<size_t>(r)), sp(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    s[static_cast<size_t>(i)] = dot(head, keys.C.row(i));
    sp[static_cast<size_t>(i)] = dot(tail, keys.Cprime.row(i));
  }
  std::vector<double> m(static_cast<size_t>(r) * static_cast<size_t>(r));
  for (int i = 0; i < r * r; ++i) {
    m[static_cast<size_t>(i)] =
        gelu(s[static_cast<size_t>(i / r)] + sp[static_cast<size_t>(i % r)]);
  }
  return m;
}

BlockSelection select_pkm_ffn(std::span<const double> x,
                              const ProductKeys& keys, int k) {
  const auto m = pkm_scores(x, keys);
  const auto idx = topk_indices(m, k);
  BlockSelection sel;
  sel.indices = idx;
  sel.weights.reserve(idx.size());
  for (const int i : idx) sel.weights.push_back(m[static_cast<size_t>(i)]);
  return sel;
}

BlockSelection select_controller(std::span<const double> x, const Matrix& K,
                                 const MemoryGeometry& geom,
                                 const LowRankKeys* controller) {
  check_keys("select_controller", K, geom, x.size());
  const int B = geom.blocks();
  std::vector<double> cell_scores;
  if (controller != nullptr) {
    if (controller->Ktilde.rows != geom.d_m) {
      throw std::invalid_argument(
          "select_controller: controller table must have d_m rows");
    }
    const auto t = project_query(x, controller->D, controller->use_norm,
                                 controller->norm);
    cell_scores.resize(static_cast<size_t>(geom.d_m));
    for (int i = 0; i < geom.d_m; ++i) {
      cell_scores[static_cast<size_t>(i)] = dot(t, controller->Ktilde.row(i));
    }
  } else {
    cell_scores.resize(static_cast<size_t>(geom.d_m));
    for (int i = 0; i < geom.d_m; ++i) {
      cell_scores[static_cast<size_t>(i)] = dot(x, K.row(i));
    }
  }
  BlockSelection sel;
  sel.indices.reserve(static_cast<size_t>(B));
  sel.weights.reserve(static_cast<size_t>(B));
  for (int i = 0; i < B; ++i) {
    const int base = i * geom.g;
    int best = base;
    for (int j = 1; j < geom.g; ++j) {  // ties keep the lower cell index
      if (cell_scores[static_cast<size_t>(base + j)] >
          cell_scores[static_cast<size_t>(best)]) {
        best = base + j;
      }
    }
    sel.indices.push_back(best);
    sel.weights.push_back(controller != nullptr
                              ? cell_scores[static_cast<size_t>(best)]
                              : 1.0);
  }
  return sel;
}

BlockSelection select_naive_ann(std::span<const double> scores, int k,
                                double sabotage_pct, RngStream& rng) {
  const int n = static_cast<int>(scores.size());
  if (k < 0 || k > n) {
    throw std::invalid_argument("select_naive_ann: k out of range");
  }
  if (sabotage_pct < 0.0) {
    throw std::invalid_argument("select_naive_ann: negative sabotage");
  }
  std::vector<int> members = topk_indices(scores, k);
  const int non_members = n - k;
  int swaps = static_cast<int>(
      std::floor(sabotage_pct * static_cast<double>(k) / 100.0));
  swaps = std::min(swaps, std::min(k, non_members));  // clamp: k = d_m -> 0
  if (swaps > 0) {
    std::vector<char> is_member(static_cast<size_t>(n), 0);
    for (const int i : members) is_member[static_cast<size_t>(i)] = 1;
    std::vector<int> outside;
    outside.reserve(static_cast<size_t>(non_members));
    for (int i = 0; i < n; ++i) {
      if (is_member[static_cast<size_t>(i)] == 0) outside.push_back(i);
    }
    const auto out_slots = rng.sample_without_replacement(k, swaps);
    const auto in_slots = rng.sample_without_replacement(non_members, swaps);
    for (int s = 0; s < swaps; ++s) {
      members[static_cast<size_t>(out_slots[static_cast<size_t>(s)])] =
          outside[static_cast<size_t>(in_slots[static_cast<size_t>(s)])];
    }
    std::sort(members.begin(), members.end());
  }
  return unit_selection(std::move(members));
}

}  // namespace sffn
