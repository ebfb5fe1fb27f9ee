#include "sffn/model.hpp"

#include <cmath>
#include <stdexcept>

#include "sffn/ops.hpp"
#include "sffn/rng.hpp"

namespace sffn {
namespace {

void accumulate(Matrix& dst, const Matrix& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace

std::vector<int> default_sffn_layers(int layers) {
  if (layers <= 0) throw std::invalid_argument("layers must be positive");
  const int n = std::max(1, layers / 6);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back((i + 1) * layers / n - 1);
  return out;
}

TransformerLM::TransformerLM(const ModelConfig& cfg) : cfg_(cfg) {
  if (cfg_.layers <= 0 || cfg_.d <= 0 || cfg_.heads <= 0 ||
      cfg_.seq_len <= 0 || cfg_.vocab_size <= 0)
    throw std::invalid_argument("model dimensions must be positive");
  if (cfg_.d % cfg_.heads != 0)
    throw std::invalid_argument("heads must divide the model width");
  for (int idx : cfg_.sffn_layers)
    if (idx < 0 || idx >= cfg_.layers)
      throw std::invalid_argument("memory layer index out of range");
  if (cfg_.sffn.kind != SelectorKind::Dense &&
      cfg_.sffn.geom.d != cfg_.d)
    throw std::invalid_argument("memory geometry width must match the model");

  embed_ = Matrix(cfg_.vocab_size, cfg_.d);
  d_embed_ = Matrix(cfg_.vocab_size, cfg_.d);
  pos_ = Matrix(cfg_.seq_len, cfg_.d);
  d_pos_ = Matrix(cfg_.seq_len, cfg_.d);

  MemoryGeometry dense_geom =
      MemoryGeometry::make(cfg_.d, 4 * cfg_.d, 4 * cfg_.d, 4 * cfg_.d);

  blocks_.resize(static_cast<std::size_t>(cfg_.layers));
  ffns_.reserve(static_cast<std::size_t>(cfg_.layers));
  for (int l = 0; l < cfg_.layers; ++l) {
    Block& blk = blocks_[static_cast<std::size_t>(l)];
    blk.ln1 = LayerNorm(cfg_.d);
    blk.ln2 = LayerNorm(cfg_.d);
    blk.d_ln1_gamma = Matrix(1, cfg_.d);
    blk.d_ln1_beta = Matrix(1, cfg_.d);
    blk.d_ln2_gamma = Matrix(1, cfg_.d);
    blk.d_ln2_beta = Matrix(1, cfg_.d);
    blk.wq = Matrix(cfg_.d, cfg_.d);
    blk.wk = Matrix(cfg_.d, cfg_.d);
    blk.wv = Matrix(cfg_.d, cfg_.d);
    blk.wo = Matrix(cfg_.d, cfg_.d);
    blk.d_wq = Matrix(cfg_.d, cfg_.d);
    blk.d_wk = Matrix(cfg_.d, cfg_.d);
    blk.d_wv = Matrix(cfg_.d, cfg_.d);
    blk.d_wo = Matrix(cfg_.d, cfg_.d);

    const std::string prefix = "layer" + std::to_string(l) + ".ffn";
    if (is_sffn_layer(l)) {
      SffnLayerConfig lc = cfg_.sffn;
      lc.vocab_size = cfg_.vocab_size;
      lc.seed = cfg_.seed + static_cast<std::uint64_t>(l);
      ffns_.emplace_back(lc, prefix);
    } else {
      SffnLayerConfig lc;
      lc.kind = SelectorKind::Dense;
      lc.geom = dense_geom;
      ffns_.emplace_back(lc, prefix);
    }
  }
  lnf_ = LayerNorm(cfg_.d);
  d_lnf_gamma_ = Matrix(1, cfg_.d);
  d_lnf_beta_ = Matrix(1, cfg_.d);
}

bool TransformerLM::is_sffn_layer(int layer) const {
  for (int idx : cfg_.sffn_layers)
    if (idx == layer) return true;
  return false;
}

void TransformerLM::init_params() {
  const double scale = 0.02;
  RngStream er(cfg_.seed, "embed");
  for (double& v : embed_.data) v = er.next_normal() * scale;
  RngStream pr(cfg_.seed, "pos");
  for (double& v : pos_.data) v = pr.next_normal() * scale;
  const double wscale = 1.0 / std::sqrt(static_cast<double>(cfg_.d));
  for (int l = 0; l < cfg_.layers; ++l) {
    Block& blk = blocks_[static_cast<std::size_t>(l)];
    const std::string base = "layer" + std::to_string(l);
    RngStream qr(cfg_.seed, base + ".wq");
    for (double& v : blk.wq.data) v = qr.next_normal() * wscale;
    RngStream kr(cfg_.seed, base + ".wk");
    for (double& v : blk.wk.data) v = kr.next_normal() * wscale;
    RngStream vr(cfg_.seed, base + ".wv");
    for (double& v : blk.wv.data) v = vr.next_normal() * wscale;
    RngStream orr(cfg_.seed, base + ".wo");
    for (double& v : blk.wo.data) v = orr.next_normal() * wscale;
    ffns_[static_cast<std::size_t>(l)].init_params(cfg_.seed);
  }
}

long TransformerLM::num_params() {
  long total = 0;
  for (const ParamRef& p : params())
    total += static_cast<long>(p.value->data.size());
  return total;
}

ModelCache TransformerLM::forward(const std::vector<int>& tokens, int num_seqs,
                                  RunMode mode, long step, Matrix& logits,
                                  bool update_norm_stats) {
  return run(tokens, num_seqs, mode, step, logits, update_norm_stats, nullptr);
}

ModelCache TransformerLM::forward_frozen(const std::vector<int>& tokens,
                                         int num_seqs, const ModelCache& base,
                                         Matrix& logits) {
  return run(tokens, num_seqs, base.mode, 0, logits, false, &base);
}

ModelCache TransformerLM::run(const std::vector<int>& tokens, int num_seqs,
                              RunMode mode, long step, Matrix& logits,
                              bool update_norm_stats,
                              const ModelCache* frozen) {
  const int T = cfg_.seq_len;
  const int N = num_seqs * T;
  if (num_seqs <= 0 ||
      static_cast<int>(tokens.size()) != N)
    throw std::invalid_argument("tokens must hold num_seqs full sequences");

  ModelCache cache;
  cache.num_seqs = num_seqs;
  cache.seq_len = T;
  cache.tokens = tokens;
  cache.mode = mode;
  cache.blocks.resize(static_cast<std::size_t>(cfg_.layers));

  Matrix x(N, cfg_.d);
  for (int n = 0; n < N; ++n) {
    const int t = tokens[static_cast<std::size_t>(n)];
    if (t < 0 || t >= cfg_.vocab_size)
      throw std::out_of_range("token id outside vocabulary");
    std::span<const double> emb = embed_.row(t);
    std::span<const double> ps = pos_.row(n % T);
    std::span<double> xr = x.row(n);
    for (int j = 0; j < cfg_.d; ++j) xr[j] = emb[j] + ps[j];
  }

  const int H = cfg_.heads;
  const int dh = cfg_.d / H;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  for (int l = 0; l < cfg_.layers; ++l) {
    Block& blk = blocks_[static_cast<std::size_t>(l)];
    BlockCache& bc = cache.blocks[static_cast<std::size_t>(l)];

    bc.ln1_out = blk.ln1.forward(x, &bc.ln1);
    bc.q = matmul(bc.ln1_out, blk.wq);
    bc.k = matmul(bc.ln1_out, blk.wk);
    bc.v = matmul(bc.ln1_out, blk.wv);
    bc.concat = Matrix(N, cfg_.d);
    bc.attn.assign(static_cast<std::size_t>(num_seqs * H), Matrix());
    for (int s = 0; s < num_seqs; ++s) {
      const int base = s * T;
      for (int h = 0; h < H; ++h) {
        Matrix& probs = bc.attn[static_cast<std::size_t>(s * H + h)];
        probs = Matrix(T, T);
        const int off = h * dh;
        for (int i = 0; i < T; ++i) {
          std::vector<double> scores(static_cast<std::size_t>(i) + 1);
          std::span<const double> qi = bc.q.row(base + i);
          for (int j = 0; j <= i; ++j) {
            std::span<const double> kj = bc.k.row(base + j);
            double sdot = 0.0;
            for (int e = 0; e < dh; ++e) sdot += qi[off + e] * kj[off + e];
            scores[static_cast<std::size_t>(j)] = sdot * att_scale;
          }
          std::vector<double> p = softmax(scores);
          std::span<double> out = bc.concat.row(base + i);
          for (int j = 0; j <= i; ++j) {
            probs(i, j) = p[static_cast<std::size_t>(j)];
            std::span<const double> vj = bc.v.row(base + j);
            for (int e = 0; e < dh; ++e)
              out[off + e] += p[static_cast<std::size_t>(j)] * vj[off + e];
          }
        }
      }
    }
    Matrix att_out = matmul(bc.concat, blk.wo);
    accumulate(x, att_out);  // residual

    Matrix ln2_out = blk.ln2.forward(x, &bc.ln2);
    Matrix ffn_out;
    SffnLayer& f = ffns_[static_cast<std::size_t>(l)];
    if (frozen && f.routes_tokens()) {
      bc.ffn = f.forward_frozen(
          ln2_out, tokens, frozen->blocks[static_cast<std::size_t>(l)].ffn,
          ffn_out);
    } else {
      bc.ffn = f.forward(ln2_out, tokens, mode, step, ffn_out,
                         update_norm_stats);
    }
    accumulate(x, ffn_out);  // residual
  }

  cache.hf = lnf_.forward(x, &cache.lnf);
  logits = matmul_nt(cache.hf, embed_);
  return cache;
}

void TransformerLM::backward(const ModelCache& cache, const Matrix& dlogits,
                             const std::vector<Matrix>& dprobs) {
  const int T = cache.seq_len;
  const int N = cache.num_seqs * T;
  if (dlogits.rows != N || dlogits.cols != cfg_.vocab_size)
    throw std::invalid_argument("logits gradient has the wrong shape");
  if (!dprobs.empty() &&
      static_cast<int>(dprobs.size()) != cfg_.layers)
    throw std::invalid_argument("dprobs must have one entry per layer");

  // Output head (tied with the embedding).
  Matrix dhf = matmul(dlogits, embed_);
  {
    Matrix de = matmul_tn(dlogits, cache.hf);
    accumulate(d_embed_, de);
  }
  Matrix dx = lnf_.backward(dhf, cache.lnf, d_lnf_gamma_, d_lnf_beta_);

  const int H = cfg_.heads;
  const int dh = cfg_.d / H;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  for (int l = cfg_.layers - 1; l >= 0; --l) {
    Block& blk = blocks_[static_cast<std::size_t>(l)];
    const BlockCache& bc = cache.blocks[static_cast<std::size_t>(l)];

    // Memory/FFN sub-block.
    SffnLayer& f = ffns_[static_cast<std::size_t>(l)];
    static const Matrix kNoProbs;
    const Matrix& extra =
        dprobs.empty() ? kNoProbs : dprobs[static_cast<std::size_t>(l)];
    Matrix d_ln2_out = f.backward(bc.ffn, dx, extra);
    Matrix d_attn_res =
        blk.ln2.backward(d_ln2_out, bc.ln2, blk.d_ln2_gamma, blk.d_ln2_beta);
    accumulate(dx, d_attn_res);

    // Attention sub-block.
    Matrix d_concat = matmul_nt(dx, blk.wo);
    {
      Matrix dwo = matmul_tn(bc.concat, dx);
      accumulate(blk.d_wo, dwo);
    }
    Matrix dq(N, cfg_.d), dk(N, cfg_.d), dv(N, cfg_.d);
    for (int s = 0; s < cache.num_seqs; ++s) {
      const int base = s * T;
      for (int h = 0; h < H; ++h) {
        const Matrix& probs = bc.attn[static_cast<std::size_t>(s * H + h)];
        const int off = h * dh;
        for (int i = 0; i < T; ++i) {
          std::span<const double> dout = d_concat.row(base + i);
          // dP and the softmax Jacobian, row i attends to j <= i.
          std::vector<double> dp(static_cast<std::size_t>(i) + 1, 0.0);
          for (int j = 0; j <= i; ++j) {
            std::span<const double> vj = bc.v.row(base + j);
            double acc = 0.0;
            for (int e = 0; e < dh; ++e) acc += dout[off + e] * vj[off + e];
            dp[static_cast<std::size_t>(j)] = acc;
            // dV accumulates p_ij * dout.
            std::span<double> dvj = dv.row(base + j);
            const double pij = probs(i, j);
            for (int e = 0; e < dh; ++e) dvj[off + e] += pij * dout[off + e];
          }
          double pdot = 0.0;
          for (int j = 0; j <= i; ++j)
            pdot += dp[static_cast<std::size_t>(j)] * probs(i, j);
          std::span<const double> qi = bc.q.row(base + i);
          std::span<double> dqi = dq.row(base + i);
          for (int j = 0; j <= i; ++j) {
            const double ds =
                probs(i, j) * (dp[static_cast<std::size_t>(j)] - pdot) *
                att_scale;
            std::span<const double> kj = bc.k.row(base + j);
            std::span<double> dkj = dk.row(base + j);
            for (int e = 0; e < dh; ++e) {
              dqi[off + e] += ds * kj[off + e];
              dkj[off + e] += ds * qi[off + e];
            }
          }
        }
      }
    }
    {
      Matrix dwq = matmul_tn(bc.ln1_out, dq);
      accumulate(blk.d_wq, dwq);
      Matrix dwk = matmul_tn(bc.ln1_out, dk);
      accumulate(blk.d_wk, dwk);
      Matrix dwv = matmul_tn(bc.ln1_out, dv);
      accumulate(blk.d_wv, dwv);
    }
    Matrix d_ln1_out = matmul_nt(dq, blk.wq);
    {
      Matrix tmp = matmul_nt(dk, blk.wk);
      accumulate(d_ln1_out, tmp);
      tmp = matmul_nt(dv, blk.wv);
      accumulate(d_ln1_out, tmp);
    }
    Matrix d_res =
        blk.ln1.backward(d_ln1_out, bc.ln1, blk.d_ln1_gamma, blk.d_ln1_beta);
    accumulate(dx, d_res);
  }

  // Embedding and positional tables.
  for (int n = 0; n < N; ++n) {
    const int t = cache.tokens[static_cast<std::size_t>(n)];
    axpy(1.0, dx.row(n), d_embed_.row(t));
    axpy(1.0, dx.row(n), d_pos_.row(n % T));
  }
}

std::vector<ParamRef> TransformerLM::params() {
  std::vector<ParamRef> out;
  out.push_back({"embed", &embed_, &d_embed_, false});
  out.push_back({"pos", &pos_, &d_pos_, false});
  for (int l = 0; l < cfg_.layers; ++l) {
    Block& blk = blocks_[static_cast<std::size_t>(l)];
    const std::string base = "layer" + std::to_string(l);
    out.push_back({base + ".ln1_gamma", &blk.ln1.gamma, &blk.d_ln1_gamma, false});
    out.push_back({base + ".ln1_beta", &blk.ln1.beta, &blk.d_ln1_beta, false});
    out.push_back({base + ".wq", &blk.wq, &blk.d_wq, false});
    out.push_back({base + ".wk", &blk.wk, &blk.d_wk, false});
    out.push_back({base + ".wv", &blk.wv, &blk.d_wv, false});
    out.push_back({base + ".wo", &blk.wo, &blk.d_wo, false});
    out.push_back({base + ".ln2_gamma", &blk.ln2.gamma, &blk.d_ln2_gamma, false});
    out.push_back({base + ".ln2_beta", &blk.ln2.beta, &blk.d_ln2_beta, false});
    for (const ParamRef& p : ffns_[static_cast<std::size_t>(l)].params())
      out.push_back(p);
  }
  out.push_back({"final_ln_gamma", &lnf_.gamma, &d_lnf_gamma_, false});
  out.push_back({"final_ln_beta", &lnf_.beta, &d_lnf_beta_, false});
  return out;
}

std::vector<NamedTensor> TransformerLM::state() const {
  std::vector<NamedTensor> out;
  auto* self = const_cast<TransformerLM*>(this);
  out.push_back({"embed", embed_});
  out.push_back({"pos", pos_});
  for (int l = 0; l < cfg_.layers; ++l) {
    const Block& blk = blocks_[static_cast<std::size_t>(l)];
    const std::string base = "layer" + std::to_string(l);
    out.push_back({base + ".ln1_gamma", blk.ln1.gamma});
    out.push_back({base + ".ln1_beta", blk.ln1.beta});
    out.push_back({base + ".wq", blk.wq});
    out.push_back({base + ".wk", blk.wk});
    out.push_back({base + ".wv", blk.wv});
    out.push_back({base + ".wo", blk.wo});
    out.push_back({base + ".ln2_gamma", blk.ln2.gamma});
    out.push_back({base + ".ln2_beta", blk.ln2.beta});
    for (const NamedTensor& t :
         self->ffns_[static_cast<std::size_t>(l)].state())
      out.push_back(t);
  }
  out.push_back({"final_ln_gamma", lnf_.gamma});
  out.push_back({"final_ln_beta", lnf_.beta});
  return out;
}

void TransformerLM::load_state(const std::vector<NamedTensor>& tensors) {
  auto find = [&](const std::string& name) -> const Matrix* {
    for (const NamedTensor& t : tensors)
      if (t.name == name) return &t.value;
    return nullptr;
  };
  for (ParamRef& p : params()) {
    const Matrix* src = find(p.name);
    if (!src) throw std::runtime_error("checkpoint missing tensor: " + p.name);
    if (src->rows != p.value->rows || src->cols != p.value->cols)
      throw std::runtime_error("checkpoint tensor shape mismatch: " + p.name);
    *p.value = *src;
  }
  // Normalizer running statistics live outside the trainable set.
  for (int l = 0; l < cfg_.layers; ++l) {
    SffnLayer& f = ffns_[static_cast<std::size_t>(l)];
    if (f.config().batch_norm) f.load_state(tensors);
  }
}

void TransformerLM::zero_grads() {
  for (ParamRef& p : params()) p.grad->fill(0.0);
}

}  // namespace sffn
