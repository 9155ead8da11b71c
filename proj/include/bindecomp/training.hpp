#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "bindecomp/autograd.hpp"
#include "bindecomp/common.hpp"
#include "bindecomp/tensor.hpp"
#include "bindecomp/transformer.hpp"

namespace bindecomp::neural {

// ---------------------------------------------------------------------------
// Optimizer.
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const ParameterSet& params, AdamConfig cfg = {}) : cfg_(cfg) {
    m_.reserve(params.count());
    v_.reserve(params.count());
    for (const auto& t : params.tensors) {
      m_.emplace_back(t.rows, t.cols);
      v_.emplace_back(t.rows, t.cols);
    }
  }

  std::size_t step_count() const { return step_; }

  void update(ParameterSet& params, const std::vector<Tensor>& grads) {
    if (grads.size() != params.count()) {
      throw ShapeMismatch("adam: gradient list length mismatch");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t p = 0; p < params.count(); ++p) {
      Tensor& w = params.tensors[p];
      const Tensor& g = grads[p];
      if (!w.same_shape(g)) {
        throw ShapeMismatch("adam: parameter " + params.names[p] + " " + w.shape_str() +
                            " vs gradient " + g.shape_str());
      }
      Tensor& m = m_[p];
      Tensor& v = v_[p];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * g.data[i];
        v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * g.data[i] * g.data[i];
        const double mhat = m.data[i] / bc1;
        const double vhat = v.data[i] / bc2;
        w.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::size_t step_ = 0;
  std::vector<Tensor> m_, v_;
};

// Scale gradients so their global L2 norm is at most max_norm; returns the
// norm before clipping.
inline double clip_gradients(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0;
  for (const auto& g : grads) {
    for (double v : g.data) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) {
      for (double& v : g.data) v *= s;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Training loops.
// ---------------------------------------------------------------------------

struct SpecialIds {
  std::size_t pad = 0;
  std::size_t bos = 2;
  std::size_t eos = 3;
};

struct SeqPair {
  std::vector<std::size_t> src;
  std::vector<std::size_t> tgt;  // raw ids; bos/eos added by the loop
};

struct LabeledSeq {
  std::vector<std::size_t> ids;
  std::size_t label = 0;
};

struct TrainSchedule {
  std::size_t max_steps = 5000;
  std::size_t batch_size = 8;
  double lr = 3e-4;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  std::size_t patience = 0;      // 0 disables plateau stopping
  double min_delta = 1e-4;       // improvement threshold for the plateau check
  double target_loss = 0.0;      // stop early once reached; 0 disables
  std::size_t snapshot_every = 25;
};

struct TrainResult {
  std::vector<double> losses;  // one entry per executed step
  std::size_t steps = 0;
  std::string stop_reason;     // "max_steps" | "target_loss" | "plateau"
};

inline std::string loss_curve_csv(const std::vector<double>& losses) {
  std::string out = "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i + 1, losses[i]);
    out += buf;
  }
  return out;
}

namespace detail {

inline std::vector<Tensor> zero_like(const ParameterSet& params) {
  std::vector<Tensor> out;
  out.reserve(params.count());
  for (const auto& t : params.tensors) out.emplace_back(t.rows, t.cols);
  return out;
}

inline void accumulate_grads(std::vector<Tensor>& acc, const Bound& bound, Tape& tape,
                             double scale) {
  for (std::size_t p = 0; p < acc.size(); ++p) {
    const Tensor& g = tape.grad(bound[p]);
    for (std::size_t i = 0; i < g.size(); ++i) acc[p].data[i] += scale * g.data[i];
  }
}

// Shared stopping logic; returns a non-empty reason when done.
class StopWatchdog {
 public:
  explicit StopWatchdog(const TrainSchedule& s) : sched_(s) {}

  std::string observe(double loss) {
    if (sched_.target_loss > 0 && loss < sched_.target_loss) return "target_loss";
    if (sched_.patience > 0) {
      if (loss < best_ - sched_.min_delta) {
        best_ = loss;
        since_ = 0;
      } else if (++since_ >= sched_.patience) {
        return "plateau";
      }
    }
    return "";
  }

 private:
  TrainSchedule sched_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t since_ = 0;
};

}  // namespace detail

// Teacher-forced training for the translation model. On a non-finite loss
// the parameters are rolled back to the last snapshot before Divergence is
// raised, so the caller still holds a usable model.
inline TrainResult train_seq2seq(Seq2Seq& model, const std::vector<SeqPair>& data,
                                 const TrainSchedule& sched, const SpecialIds& specials) {
  if (data.empty()) throw EmptyTrainingSet("train_seq2seq: no pairs");
  for (const auto& p : data) {
    if (p.src.empty() || p.tgt.empty()) {
      throw EmptyTrainingSet("train_seq2seq: pair with empty side");
    }
  }

  Rng rng(derive_seed(sched.seed, "seq2seq-batches"));
  Adam adam(model.params, AdamConfig{sched.lr, 0.9, 0.999, 1e-8});
  detail::StopWatchdog watchdog(sched);
  TrainResult result;
  ParameterSet snapshot = model.params;

  for (std::size_t step = 0; step < sched.max_steps; ++step) {
    auto grads = detail::zero_like(model.params);
    double loss_sum = 0;
    const double inv_batch = 1.0 / static_cast<double>(sched.batch_size);

    try {
      for (std::size_t s = 0; s < sched.batch_size; ++s) {
        const SeqPair& pair = data[rng.next_below(data.size())];
        Tape tape;
        const Bound bound = model.bind(tape);
        const auto keep = all_kept(pair.src.size());
        Value enc = model.encode(tape, bound, pair.src, keep);

        std::vector<std::size_t> dec_in;
        dec_in.reserve(pair.tgt.size() + 1);
        dec_in.push_back(specials.bos);
        dec_in.insert(dec_in.end(), pair.tgt.begin(), pair.tgt.end());
        std::vector<std::size_t> targets = pair.tgt;
        targets.push_back(specials.eos);

        Value logits = model.decode_logits(tape, bound, enc, keep, dec_in);
        Value loss = tape.cross_entropy(logits, targets, specials.pad);
        tape.backward(loss);
        detail::accumulate_grads(grads, bound, tape, inv_batch);
        loss_sum += tape.value(loss).data[0];
      }
    } catch (const NonFinite& e) {
      model.params = snapshot;
      throw Divergence("training blew up at step " + std::to_string(step + 1) +
                       " (" + e.what() + "); parameters rolled back");
    }

    const double loss = loss_sum * inv_batch;
    if (!std::isfinite(loss)) {
      model.params = snapshot;
      throw Divergence("training loss became non-finite at step " +
                       std::to_string(step + 1) + "; parameters rolled back");
    }
    clip_gradients(grads, sched.clip_norm);
    adam.update(model.params, grads);
    result.losses.push_back(loss);
    result.steps = step + 1;

    if (sched.snapshot_every > 0 && (step + 1) % sched.snapshot_every == 0) {
      snapshot = model.params;
    }
    const std::string reason = watchdog.observe(loss);
    if (!reason.empty()) {
      result.stop_reason = reason;
      return result;
    }
  }
  result.stop_reason = "max_steps";
  return result;
}

// Classifier training over labeled token sequences.
inline TrainResult train_classifier(Classifier& model, const std::vector<LabeledSeq>& data,
                                    const TrainSchedule& sched, const SpecialIds& specials) {
  if (data.empty()) throw EmptyTrainingSet("train_classifier: no samples");
  const std::size_t n_classes = model.config.vocab_tgt;
  for (const auto& d : data) {
    if (d.ids.empty()) throw EmptyTrainingSet("train_classifier: empty sequence");
    if (d.label >= n_classes) {
      throw IdOutOfRange("train_classifier: label " + std::to_string(d.label) +
                         " with " + std::to_string(n_classes) + " classes");
    }
  }

  Rng rng(derive_seed(sched.seed, "classifier-batches"));
  Adam adam(model.params, AdamConfig{sched.lr, 0.9, 0.999, 1e-8});
  detail::StopWatchdog watchdog(sched);
  TrainResult result;
  ParameterSet snapshot = model.params;

  for (std::size_t step = 0; step < sched.max_steps; ++step) {
    auto grads = detail::zero_like(model.params);
    double loss_sum = 0;
    const double inv_batch = 1.0 / static_cast<double>(sched.batch_size);

    try {
      for (std::size_t s = 0; s < sched.batch_size; ++s) {
        const LabeledSeq& sample = data[rng.next_below(data.size())];
        Tape tape;
        const Bound bound = model.bind(tape);
        const auto keep = keep_from_ids(sample.ids, specials.pad);
        Value logits = model.logits(tape, bound, sample.ids, keep);
        Value loss = tape.cross_entropy(logits, {sample.label}, n_classes);
        tape.backward(loss);
        detail::accumulate_grads(grads, bound, tape, inv_batch);
        loss_sum += tape.value(loss).data[0];
      }
    } catch (const NonFinite& e) {
      model.params = snapshot;
      throw Divergence("training blew up at step " + std::to_string(step + 1) +
                       " (" + e.what() + "); parameters rolled back");
    }

    const double loss = loss_sum * inv_batch;
    if (!std::isfinite(loss)) {
      model.params = snapshot;
      throw Divergence("training loss became non-finite at step " +
                       std::to_string(step + 1) + "; parameters rolled back");
    }
    clip_gradients(grads, sched.clip_norm);
    adam.update(model.params, grads);
    result.losses.push_back(loss);
    result.steps = step + 1;

    if (sched.snapshot_every > 0 && (step + 1) % sched.snapshot_every == 0) {
      snapshot = model.params;
    }
    const std::string reason = watchdog.observe(loss);
    if (!reason.empty()) {
      result.stop_reason = reason;
      return result;
    }
  }
  result.stop_reason = "max_steps";
  return result;
}

// ---------------------------------------------------------------------------
// Decoding.
// ---------------------------------------------------------------------------

struct DecodeOptions {
  std::size_t beam_width = 1;
  std::size_t max_len = 512;  // generated tokens, excluding bos
  SpecialIds specials;
};

struct Decoded {
  std::vector<std::size_t> ids;  // generated tokens, no bos, no eos
  double mean_logprob = -std::numeric_limits<double>::infinity();
};

namespace detail {

// Log-softmax of the last logits row.
inline std::vector<double> last_row_logprobs(const Tape& tape, Value logits) {
  const Tensor& L = tape.value(logits);
  const double* row = &L.data[(L.rows - 1) * L.cols];
  double mx = row[0];
  for (std::size_t j = 1; j < L.cols; ++j) mx = std::max(mx, row[j]);
  double z = 0;
  for (std::size_t j = 0; j < L.cols; ++j) z += std::exp(row[j] - mx);
  const double lse = std::log(z) + mx;
  std::vector<double> out(L.cols);
  for (std::size_t j = 0; j < L.cols; ++j) out[j] = row[j] - lse;
  return out;
}

struct Hypothesis {
  std::vector<std::size_t> prefix;  // includes bos
  double sum_logprob = 0;
  bool finished = false;

  double mean_logprob() const {
    const std::size_t produced = prefix.size() - 1 + (finished ? 1 : 0);
    if (produced == 0) return -std::numeric_limits<double>::infinity();
    return sum_logprob / static_cast<double>(produced);
  }
};

}  // namespace detail

inline Decoded greedy_decode(const Seq2Seq& model, const std::vector<std::size_t>& src_ids,
                             const DecodeOptions& opt) {
  Tape tape;
  const Bound bound = model.bind(tape);
  const auto keep = all_kept(src_ids.size());
  Value enc = model.encode(tape, bound, src_ids, keep);

  std::vector<std::size_t> prefix = {opt.specials.bos};
  double sum_logprob = 0;
  Decoded out;
  const std::size_t limit = std::min(opt.max_len, model.config.max_seq_len - 1);
  for (std::size_t t = 0; t < limit; ++t) {
    Value logits = model.decode_logits(tape, bound, enc, keep, prefix);
    const auto lp = detail::last_row_logprobs(tape, logits);
    std::size_t best = 0;
    for (std::size_t j = 1; j < lp.size(); ++j) {
      if (lp[j] > lp[best]) best = j;  // ties keep the smaller id
    }
    sum_logprob += lp[best];
    if (best == opt.specials.eos) {
      out.mean_logprob = sum_logprob / static_cast<double>(t + 1);
      return out;
    }
    out.ids.push_back(best);
    prefix.push_back(best);
  }
  out.mean_logprob = out.ids.empty()
                         ? -std::numeric_limits<double>::infinity()
                         : sum_logprob / static_cast<double>(out.ids.size());
  return out;
}

// Beam search scored by mean log-probability. The greedy result always
// competes, so widening the beam can only improve the returned score.
inline Decoded decode(const Seq2Seq& model, const std::vector<std::size_t>& src_ids,
                      const DecodeOptions& opt) {
  if (opt.beam_width == 0) throw UsageError("beam width must be at least 1");
  const Decoded greedy = greedy_decode(model, src_ids, opt);
  if (opt.beam_width == 1) return greedy;

  Tape tape;
  const Bound bound = model.bind(tape);
  const auto keep = all_kept(src_ids.size());
  Value enc = model.encode(tape, bound, src_ids, keep);

  std::vector<detail::Hypothesis> active = {{{opt.specials.bos}, 0.0, false}};
  std::vector<detail::Hypothesis> done;
  const std::size_t limit = std::min(opt.max_len, model.config.max_seq_len - 1);

  for (std::size_t t = 0; t < limit && !active.empty(); ++t) {
    std::vector<detail::Hypothesis> candidates;
    for (const auto& hyp : active) {
      Value logits = model.decode_logits(tape, bound, enc, keep, hyp.prefix);
      const auto lp = detail::last_row_logprobs(tape, logits);

      // Only the top beam_width continuations of one hypothesis can survive
      // the global cut.
      std::vector<std::size_t> order(lp.size());
      for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (lp[a] != lp[b]) return lp[a] > lp[b];
        return a < b;
      });
      const std::size_t take = std::min(opt.beam_width, order.size());
      for (std::size_t r = 0; r < take; ++r) {
        detail::Hypothesis next = hyp;
        next.sum_logprob += lp[order[r]];
        if (order[r] == opt.specials.eos) {
          next.finished = true;
          done.push_back(std::move(next));
        } else {
          next.prefix.push_back(order[r]);
          candidates.push_back(std::move(next));
        }
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const detail::Hypothesis& a, const detail::Hypothesis& b) {
                if (a.mean_logprob() != b.mean_logprob()) {
                  return a.mean_logprob() > b.mean_logprob();
                }
                return a.prefix < b.prefix;
              });
    if (candidates.size() > opt.beam_width) candidates.resize(opt.beam_width);
    active = std::move(candidates);
  }

  // Horizon-stopped hypotheses still compete.
  for (auto& hyp : active) done.push_back(std::move(hyp));

  Decoded best = greedy;
  for (const auto& hyp : done) {
    const double score = hyp.mean_logprob();
    if (score > best.mean_logprob) {
      best.mean_logprob = score;
      best.ids.assign(hyp.prefix.begin() + 1, hyp.prefix.end());
    }
  }
  return best;
}

// Class prediction for one sequence.
inline std::size_t classify(const Classifier& model, const std::vector<std::size_t>& ids,
                            const SpecialIds& specials) {
  Tape tape;
  const Bound bound = model.bind(tape);
  const auto keep = keep_from_ids(ids, specials.pad);
  Value logits = model.logits(tape, bound, ids, keep);
  const Tensor& L = tape.value(logits);
  std::size_t best = 0;
  for (std::size_t j = 1; j < L.cols; ++j) {
    if (L.data[j] > L.data[best]) best = j;
  }
  return best;
}

}  // namespace bindecomp::neural
