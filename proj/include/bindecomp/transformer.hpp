#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bindecomp/autograd.hpp"
#include "bindecomp/common.hpp"
#include "bindecomp/tensor.hpp"

namespace bindecomp::neural {

struct TransformerConfig {
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t n_enc_layers = 2;
  std::size_t n_dec_layers = 2;
  std::size_t d_ff = 512;
  std::size_t max_seq_len = 512;
  std::size_t vocab_src = 0;
  std::size_t vocab_tgt = 0;   // classifier: number of classes
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;
  bool use_positional = true;

  void validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
      throw UsageError("model width must divide evenly across heads");
    }
    if (max_seq_len < 2) throw UsageError("max sequence length must be at least 2");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
      throw UsageError("dropout rate must lie in [0,1)");
    }
    if (vocab_src == 0 || vocab_tgt == 0) {
      throw UsageError("vocabulary sizes must be positive");
    }
    if (d_ff == 0) throw UsageError("feed-forward width must be positive");
  }
};

// Flat list of named parameter tensors. Registration order is the canonical
// order: the optimizer, checkpoints, and the finite-difference check all
// iterate it as-is.
struct ParameterSet {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  std::size_t add(const std::string& name, Tensor t) {
    names.push_back(name);
    tensors.push_back(std::move(t));
    return tensors.size() - 1;
  }

  std::size_t count() const { return tensors.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }
};

// Parameter tensors bound onto a tape as leaves for one forward/backward run.
struct Bound {
  Tape* tape = nullptr;
  std::vector<Value> leaves;  // parallel to ParameterSet::tensors

  Value operator[](std::size_t i) const { return leaves[i]; }
};

namespace detail {

struct AttentionRefs {
  std::size_t ln_g, ln_b;
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
};

struct FfnRefs {
  std::size_t ln_g, ln_b;
  std::size_t w1, b1, w2, b2;
};

struct EncoderLayerRefs {
  AttentionRefs attn;
  FfnRefs ffn;
};

struct DecoderLayerRefs {
  AttentionRefs self_attn;
  AttentionRefs cross_attn;
  FfnRefs ffn;
};

inline Tensor normal_init(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t(rows, cols);
  const double std_dev = std::sqrt(2.0 / static_cast<double>(rows + cols));
  for (double& v : t.data) v = std_dev * rng.next_normal();
  return t;
}

inline AttentionRefs add_attention(ParameterSet& p, const std::string& prefix,
                                   std::size_t d_model, Rng& rng) {
  AttentionRefs r;
  r.ln_g = p.add(prefix + ".ln.gain", Tensor(1, d_model, 1.0));
  r.ln_b = p.add(prefix + ".ln.bias", Tensor(1, d_model));
  r.wq = p.add(prefix + ".wq", normal_init(rng, d_model, d_model));
  r.bq = p.add(prefix + ".bq", Tensor(1, d_model));
  r.wk = p.add(prefix + ".wk", normal_init(rng, d_model, d_model));
  r.bk = p.add(prefix + ".bk", Tensor(1, d_model));
  r.wv = p.add(prefix + ".wv", normal_init(rng, d_model, d_model));
  r.bv = p.add(prefix + ".bv", Tensor(1, d_model));
  r.wo = p.add(prefix + ".wo", normal_init(rng, d_model, d_model));
  r.bo = p.add(prefix + ".bo", Tensor(1, d_model));
  return r;
}

inline FfnRefs add_ffn(ParameterSet& p, const std::string& prefix, std::size_t d_model,
                       std::size_t d_ff, Rng& rng) {
  FfnRefs r;
  r.ln_g = p.add(prefix + ".ln.gain", Tensor(1, d_model, 1.0));
  r.ln_b = p.add(prefix + ".ln.bias", Tensor(1, d_model));
  r.w1 = p.add(prefix + ".w1", normal_init(rng, d_model, d_ff));
  r.b1 = p.add(prefix + ".b1", Tensor(1, d_ff));
  r.w2 = p.add(prefix + ".w2", normal_init(rng, d_ff, d_model));
  r.b2 = p.add(prefix + ".b2", Tensor(1, d_model));
  return r;
}

// Sinusoidal position table for `len` positions.
inline Tensor positional_table(std::size_t len, std::size_t d_model) {
  Tensor t(len, d_model);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      t.data[pos * d_model + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return t;
}

// Attention masks are dense 0/1 tensors of shape (q_len, k_len).
inline Tensor full_mask(std::size_t q_len, std::size_t k_len) {
  return Tensor(q_len, k_len, 1.0);
}

inline Tensor causal_mask(std::size_t len) {
  Tensor t(len, len);
  for (std::size_t q = 0; q < len; ++q) {
    for (std::size_t k = 0; k <= q; ++k) t.data[q * len + k] = 1.0;
  }
  return t;
}

inline Tensor key_padding_mask(std::size_t q_len, const std::vector<std::uint8_t>& key_keep) {
  Tensor t(q_len, key_keep.size());
  for (std::size_t q = 0; q < q_len; ++q) {
    for (std::size_t k = 0; k < key_keep.size(); ++k) {
      t.data[q * key_keep.size() + k] = key_keep[k] ? 1.0 : 0.0;
    }
  }
  return t;
}

inline Tensor combine_masks(const Tensor& a, const Tensor& b) {
  Tensor t = a;
  for (std::size_t i = 0; i < t.size(); ++i) t.data[i] *= b.data[i];
  return t;
}

}  // namespace detail

namespace detail {

// Shared multi-head attention block, pre-norm residual style.
inline Value attention_block(Tape& tape, const Bound& b, const AttentionRefs& r,
                             Value x, Value kv_source, const Tensor& mask,
                             std::size_t n_heads) {
  const std::size_t d_model = tape.value(b[r.wq]).rows;
  const std::size_t d_head = d_model / n_heads;

  Value q_in = tape.layer_norm(x, b[r.ln_g], b[r.ln_b]);
  // Cross attention normalizes its own query stream but takes keys/values
  // from the already-normalized encoder output.
  Value kv_in = kv_source.idx == x.idx ? q_in : kv_source;

  Value Q = tape.add_row(tape.matmul(q_in, b[r.wq]), b[r.bq]);
  Value K = tape.add_row(tape.matmul(kv_in, b[r.wk]), b[r.bk]);
  Value V = tape.add_row(tape.matmul(kv_in, b[r.wv]), b[r.bv]);

  std::vector<Value> heads;
  heads.reserve(n_heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_head));
  for (std::size_t h = 0; h < n_heads; ++h) {
    Value qh = tape.slice_cols(Q, h * d_head, (h + 1) * d_head);
    Value kh = tape.slice_cols(K, h * d_head, (h + 1) * d_head);
    Value vh = tape.slice_cols(V, h * d_head, (h + 1) * d_head);
    Value scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt);
    Value weights = tape.masked_softmax(scores, mask);
    heads.push_back(tape.matmul(weights, vh));
  }
  Value ctx = n_heads == 1 ? heads[0] : tape.concat_cols(heads);
  Value out = tape.add_row(tape.matmul(ctx, b[r.wo]), b[r.bo]);
  return tape.add(x, out);
}

inline Value ffn_block(Tape& tape, const Bound& b, const FfnRefs& r, Value x) {
  Value h = tape.layer_norm(x, b[r.ln_g], b[r.ln_b]);
  Value mid = tape.relu(tape.add_row(tape.matmul(h, b[r.w1]), b[r.b1]));
  Value out = tape.add_row(tape.matmul(mid, b[r.w2]), b[r.b2]);
  return tape.add(x, out);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sequence-to-sequence model.
// ---------------------------------------------------------------------------

class Seq2Seq {
 public:
  TransformerConfig config;
  ParameterSet params;

  static Seq2Seq init(const TransformerConfig& cfg) {
    cfg.validate();
    Seq2Seq m;
    m.config = cfg;
    Rng rng(cfg.seed);
    m.src_embed_ = m.params.add("src_embed",
                                detail::normal_init(rng, cfg.vocab_src, cfg.d_model));
    m.tgt_embed_ = m.params.add("tgt_embed",
                                detail::normal_init(rng, cfg.vocab_tgt, cfg.d_model));
    for (std::size_t l = 0; l < cfg.n_enc_layers; ++l) {
      const std::string pfx = "enc." + std::to_string(l);
      detail::EncoderLayerRefs refs;
      refs.attn = detail::add_attention(m.params, pfx + ".attn", cfg.d_model, rng);
      refs.ffn = detail::add_ffn(m.params, pfx + ".ffn", cfg.d_model, cfg.d_ff, rng);
      m.enc_layers_.push_back(refs);
    }
    m.enc_ln_g_ = m.params.add("enc.final_ln.gain", Tensor(1, cfg.d_model, 1.0));
    m.enc_ln_b_ = m.params.add("enc.final_ln.bias", Tensor(1, cfg.d_model));
    for (std::size_t l = 0; l < cfg.n_dec_layers; ++l) {
      const std::string pfx = "dec." + std::to_string(l);
      detail::DecoderLayerRefs refs;
      refs.self_attn = detail::add_attention(m.params, pfx + ".self", cfg.d_model, rng);
      refs.cross_attn = detail::add_attention(m.params, pfx + ".cross", cfg.d_model, rng);
      refs.ffn = detail::add_ffn(m.params, pfx + ".ffn", cfg.d_model, cfg.d_ff, rng);
      m.dec_layers_.push_back(refs);
    }
    m.dec_ln_g_ = m.params.add("dec.final_ln.gain", Tensor(1, cfg.d_model, 1.0));
    m.dec_ln_b_ = m.params.add("dec.final_ln.bias", Tensor(1, cfg.d_model));
    m.out_w_ = m.params.add("out.weight",
                            detail::normal_init(rng, cfg.d_model, cfg.vocab_tgt));
    m.out_b_ = m.params.add("out.bias", Tensor(1, cfg.vocab_tgt));
    return m;
  }

  Bound bind(Tape& tape) const {
    Bound b;
    b.tape = &tape;
    b.leaves.reserve(params.count());
    for (const auto& t : params.tensors) b.leaves.push_back(tape.leaf(t, true));
    return b;
  }

  // Token embedding + scale + positions, shared by both sides.
  Value embed(Tape& tape, const Bound& b, std::size_t table,
              const std::vector<std::size_t>& ids) const {
    if (ids.empty()) throw EmptyInput("embed: empty id sequence");
    if (ids.size() > config.max_seq_len) {
      throw SequenceTooLong("sequence of " + std::to_string(ids.size()) +
                            " tokens exceeds the limit of " +
                            std::to_string(config.max_seq_len));
    }
    Value x = tape.scale(tape.embedding(b[table], ids),
                         std::sqrt(static_cast<double>(config.d_model)));
    if (config.use_positional) {
      Value pos = tape.leaf(detail::positional_table(ids.size(), config.d_model));
      x = tape.add(x, pos);
    }
    return x;
  }

  // Encoder stack. `src_keep[i]` false marks a padding position that no
  // attention query may look at.
  Value encode(Tape& tape, const Bound& b, const std::vector<std::size_t>& src_ids,
               const std::vector<std::uint8_t>& src_keep) const {
    if (src_keep.size() != src_ids.size()) throw ShapeMismatch("encode: keep size");
    Value x = embed(tape, b, src_embed_, src_ids);
    const Tensor mask = detail::key_padding_mask(src_ids.size(), src_keep);
    for (const auto& layer : enc_layers_) {
      x = detail::attention_block(tape, b, layer.attn, x, x, mask, config.n_heads);
      x = detail::ffn_block(tape, b, layer.ffn, x);
    }
    return tape.layer_norm(x, b[enc_ln_g_], b[enc_ln_b_]);
  }

  // Decoder stack over teacher-forced inputs; returns logits (tgt_len, V).
  Value decode_logits(Tape& tape, const Bound& b, Value enc_out,
                      const std::vector<std::uint8_t>& src_keep,
                      const std::vector<std::size_t>& tgt_ids) const {
    Value x = embed(tape, b, tgt_embed_, tgt_ids);
    const Tensor self_mask = detail::causal_mask(tgt_ids.size());
    const Tensor cross_mask = detail::key_padding_mask(tgt_ids.size(), src_keep);
    for (const auto& layer : dec_layers_) {
      x = detail::attention_block(tape, b, layer.self_attn, x, x, self_mask,
                                  config.n_heads);
      x = detail::attention_block(tape, b, layer.cross_attn, x, enc_out, cross_mask,
                                  config.n_heads);
      x = detail::ffn_block(tape, b, layer.ffn, x);
    }
    x = tape.layer_norm(x, b[dec_ln_g_], b[dec_ln_b_]);
    return tape.add_row(tape.matmul(x, b[out_w_]), b[out_b_]);
  }

 private:
  std::size_t src_embed_ = 0, tgt_embed_ = 0;
  std::vector<detail::EncoderLayerRefs> enc_layers_;
  std::vector<detail::DecoderLayerRefs> dec_layers_;
  std::size_t enc_ln_g_ = 0, enc_ln_b_ = 0;
  std::size_t dec_ln_g_ = 0, dec_ln_b_ = 0;
  std::size_t out_w_ = 0, out_b_ = 0;
};

// ---------------------------------------------------------------------------
// Encoder-only classifier.
// ---------------------------------------------------------------------------

class Classifier {
 public:
  TransformerConfig config;  // vocab_tgt doubles as the class count
  ParameterSet params;

  static Classifier init(const TransformerConfig& cfg) {
    cfg.validate();
    Classifier m;
    m.config = cfg;
    Rng rng(cfg.seed);
    m.src_embed_ = m.params.add("src_embed",
                                detail::normal_init(rng, cfg.vocab_src, cfg.d_model));
    for (std::size_t l = 0; l < cfg.n_enc_layers; ++l) {
      const std::string pfx = "enc." + std::to_string(l);
      detail::EncoderLayerRefs refs;
      refs.attn = detail::add_attention(m.params, pfx + ".attn", cfg.d_model, rng);
      refs.ffn = detail::add_ffn(m.params, pfx + ".ffn", cfg.d_model, cfg.d_ff, rng);
      m.enc_layers_.push_back(refs);
    }
    m.enc_ln_g_ = m.params.add("enc.final_ln.gain", Tensor(1, cfg.d_model, 1.0));
    m.enc_ln_b_ = m.params.add("enc.final_ln.bias", Tensor(1, cfg.d_model));
    m.head_w_ = m.params.add("head.weight",
                             detail::normal_init(rng, cfg.d_model, cfg.vocab_tgt));
    m.head_b_ = m.params.add("head.bias", Tensor(1, cfg.vocab_tgt));
    return m;
  }

  Bound bind(Tape& tape) const {
    Bound b;
    b.tape = &tape;
    b.leaves.reserve(params.count());
    for (const auto& t : params.tensors) b.leaves.push_back(tape.leaf(t, true));
    return b;
  }

  // Class logits (1, n_classes): encode, mean-pool non-pad rows, project.
  Value logits(Tape& tape, const Bound& b, const std::vector<std::size_t>& src_ids,
               const std::vector<std::uint8_t>& src_keep) const {
    if (src_keep.size() != src_ids.size()) throw ShapeMismatch("logits: keep size");
    if (src_ids.empty()) throw EmptyInput("logits: empty id sequence");
    if (src_ids.size() > config.max_seq_len) {
      throw SequenceTooLong("sequence of " + std::to_string(src_ids.size()) +
                            " tokens exceeds the limit of " +
                            std::to_string(config.max_seq_len));
    }
    Value x = tape.scale(tape.embedding(b[src_embed_], src_ids),
                         std::sqrt(static_cast<double>(config.d_model)));
    if (config.use_positional) {
      Value pos = tape.leaf(detail::positional_table(src_ids.size(), config.d_model));
      x = tape.add(x, pos);
    }
    const Tensor mask = detail::key_padding_mask(src_ids.size(), src_keep);
    for (const auto& layer : enc_layers_) {
      x = detail::attention_block(tape, b, layer.attn, x, x, mask, config.n_heads);
      x = detail::ffn_block(tape, b, layer.ffn, x);
    }
    x = tape.layer_norm(x, b[enc_ln_g_], b[enc_ln_b_]);
    Value pooled = tape.mean_rows(x, src_keep);
    return tape.add_row(tape.matmul(pooled, b[head_w_]), b[head_b_]);
  }

 private:
  std::size_t src_embed_ = 0;
  std::vector<detail::EncoderLayerRefs> enc_layers_;
  std::size_t enc_ln_g_ = 0, enc_ln_b_ = 0;
  std::size_t head_w_ = 0, head_b_ = 0;
};

inline std::vector<std::uint8_t> all_kept(std::size_t n) {
  return std::vector<std::uint8_t>(n, 1);
}

inline std::vector<std::uint8_t> keep_from_ids(const std::vector<std::size_t>& ids,
                                               std::size_t pad_id) {
  std::vector<std::uint8_t> keep(ids.size(), 1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == pad_id) keep[i] = 0;
  }
  return keep;
}

}  // namespace bindecomp::neural
