#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sffn/checkpoint.hpp"
#include "sffn/layer.hpp"
#include "sffn/matrix.hpp"
#include "sffn/norm.hpp"

namespace sffn {

struct ModelConfig {
  int layers = 4;
  int d = 64;
  int heads = 1;
  int seq_len = 128;
  int vocab_size = 256;
  std::vector<int> sffn_layers;  // layer indices carrying the sparse memory
  SffnLayerConfig sffn;          // selector configuration for those layers
  std::uint64_t seed = 0;
};

// Default placement when no layer list is given: n = max(1, layers / 6)
// memory layers at indices (i + 1) * layers / n - 1.
std::vector<int> default_sffn_layers(int layers);

struct BlockCache {
  LayerNormCache ln1, ln2;
  Matrix ln1_out;
  Matrix q, k, v;            // N x d projections
  std::vector<Matrix> attn;  // per (seq * heads + head): T x T probabilities
  Matrix concat;             // N x d attention head outputs, concatenated
  SffnLayerCache ffn;
};

struct ModelCache {
  int num_seqs = 0;
  int seq_len = 0;
  std::vector<int> tokens;
  RunMode mode = RunMode::Train;
  std::vector<BlockCache> blocks;
  LayerNormCache lnf;
  Matrix hf;  // final normalized hidden states (ties into the output head)
};

// Byte-level causal transformer: tied input/output embeddings, learned
// positions, pre-norm residual blocks, and a key/value memory in place of
// the feed-forward at configured layers (a dense memory elsewhere).
class TransformerLM {
 public:
  TransformerLM() = default;  // empty shell, assign a real model into it
  explicit TransformerLM(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  void init_params();
  long num_params();

  // tokens holds num_seqs sequences of cfg.seq_len ids, concatenated.
  // Returns logits (N x vocab) through the out parameter.
  ModelCache forward(const std::vector<int>& tokens, int num_seqs,
                     RunMode mode, long step, Matrix& logits,
                     bool update_norm_stats = true);
  // Re-runs the forward pass with every memory routing pinned to `base`.
  ModelCache forward_frozen(const std::vector<int>& tokens, int num_seqs,
                            const ModelCache& base, Matrix& logits);

  // dprobs, when non-empty, must hold one matrix per transformer layer;
  // non-empty entries inject router-probability gradient at that layer.
  void backward(const ModelCache& cache, const Matrix& dlogits,
                const std::vector<Matrix>& dprobs = {});

  std::vector<ParamRef> params();
  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& tensors);
  void zero_grads();

  bool is_sffn_layer(int layer) const;
  SffnLayer& ffn(int layer) { return ffns_[static_cast<std::size_t>(layer)]; }
  const SffnLayer& ffn(int layer) const {
    return ffns_[static_cast<std::size_t>(layer)];
  }

 private:
  ModelCache run(const std::vector<int>& tokens, int num_seqs, RunMode mode,
                 long step, Matrix& logits, bool update_norm_stats,
                 const ModelCache* frozen);

  ModelConfig cfg_;
  Matrix embed_, d_embed_;  // vocab x d, tied with the output head
  Matrix pos_, d_pos_;      // seq_len x d

  struct Block {
    LayerNorm ln1, ln2;
    Matrix d_ln1_gamma, d_ln1_beta, d_ln2_gamma, d_ln2_beta;
    Matrix wq, wk, wv, wo;
    Matrix d_wq, d_wk, d_wv, d_wo;
  };
  std::vector<Block> blocks_;
  std::vector<SffnLayer> ffns_;
  LayerNorm lnf_;
  Matrix d_lnf_gamma_, d_lnf_beta_;
};

}  // namespace sffn
