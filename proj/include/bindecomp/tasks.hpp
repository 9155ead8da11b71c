#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bindecomp/corpus.hpp"
#include "bindecomp/metrics.hpp"
#include "bindecomp/tokenizer.hpp"
#include "bindecomp/training.hpp"
#include "bindecomp/transformer.hpp"

namespace bindecomp::tasks {

using corpus::Corpus;
using corpus::CweId;
using corpus::FunctionPair;
using corpus::Variant;

// ---------------------------------------------------------------------------
// Label space for the multi-class task.
// ---------------------------------------------------------------------------

struct LabelSpace {
  std::vector<CweId> cwe_ids;
  std::string good_label = "good";

  // The 20 weakness classes the prediction task distinguishes, plus good.
  static LabelSpace standard() {
    LabelSpace s;
    for (int v : {190, 762, 121, 590, 194, 197, 78, 36, 23, 690,
                  369, 457, 134, 680, 758, 400, 789, 253, 398, 761}) {
      s.cwe_ids.push_back(CweId{v});
    }
    return s;
  }

  void validate() const {
    if (cwe_ids.empty()) throw UsageError("label space has no CWE classes");
    std::set<int> seen;
    for (const auto& id : cwe_ids) {
      if (!seen.insert(id.value).second) {
        throw UsageError("label space repeats CWE" + std::to_string(id.value));
      }
    }
  }

  static std::string cwe_label(CweId id) { return "CWE" + std::to_string(id.value); }

  bool contains(CweId id) const {
    return std::find(cwe_ids.begin(), cwe_ids.end(), id) != cwe_ids.end();
  }

  // good pairs map to the good class regardless of their CWE; bad pairs map
  // to their CWE when it is in the space and are dropped (nullopt) otherwise.
  std::optional<std::string> label_of(const FunctionPair& p) const {
    if (p.variant == Variant::good) return good_label;
    if (contains(p.cwe)) return cwe_label(p.cwe);
    return std::nullopt;
  }

  // Ordered label set: the CWE classes in declaration order, then good.
  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    out.reserve(cwe_ids.size() + 1);
    for (const auto& id : cwe_ids) out.push_back(cwe_label(id));
    out.push_back(good_label);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Labeled datasets.
// ---------------------------------------------------------------------------

struct LabeledSample {
  FunctionPair pair;
  std::string label;
};

struct LabeledDataset {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
  std::vector<std::string> label_set;               // ordered class names
  std::map<std::string, std::size_t> dropped_by_cwe;  // bad pairs outside the space
  std::map<std::string, std::size_t> test_quota;    // stratum -> test seats
  std::uint64_t seed = 0;
};

// Classifier input text: the normalized source when present, raw otherwise.
inline const std::string& classifier_text(const FunctionPair& p) {
  return p.src_norm ? *p.src_norm : p.src_raw;
}

namespace detail {

inline void fill_sides(LabeledDataset& out, const corpus::SplitResult& split,
                       const std::function<std::string(const FunctionPair&)>& label_of) {
  out.test_quota = split.test_quota;
  for (const auto& p : split.train.pairs) out.train.push_back({p, label_of(p)});
  for (const auto& p : split.test.pairs) out.test.push_back({p, label_of(p)});
}

}  // namespace detail

// Good-vs-bad dataset: the majority variant is downsampled (seeded) to a
// 50-50 balance, then split with stratification by variant.
inline LabeledDataset build_biclass_dataset(const Corpus& corpus, double test_fraction,
                                            std::uint64_t seed) {
  std::vector<std::size_t> good, bad;
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    (corpus.pairs[i].variant == Variant::good ? good : bad).push_back(i);
  }
  if (good.empty() || bad.empty()) {
    throw OneClassOnly("biclass dataset needs both good and bad samples");
  }

  const std::size_t keep = std::min(good.size(), bad.size());
  auto& majority = good.size() > bad.size() ? good : bad;
  if (majority.size() > keep) {
    Rng rng(derive_seed(seed, "biclass-balance"));
    rng.shuffle(majority);
    majority.resize(keep);
    std::sort(majority.begin(), majority.end());
  }

  std::vector<std::size_t> chosen;
  chosen.reserve(2 * keep);
  chosen.insert(chosen.end(), good.begin(), good.end());
  chosen.insert(chosen.end(), bad.begin(), bad.end());
  std::sort(chosen.begin(), chosen.end());

  Corpus balanced;
  balanced.provenance = corpus.provenance;
  for (std::size_t idx : chosen) balanced.pairs.push_back(corpus.pairs[idx]);

  const auto split =
      corpus::stratified_split(balanced, test_fraction, corpus::SplitKey::variant, seed);

  LabeledDataset out;
  out.seed = seed;
  out.label_set = {"bad", "good"};
  detail::fill_sides(out, split,
                     [](const FunctionPair& p) { return corpus::to_string(p.variant); });
  return out;
}

// 21-class dataset: bad pairs keep their CWE label when it is in the space
// (dropped and counted otherwise), good pairs collapse into the good class,
// and the split stratifies by the assigned label.
inline LabeledDataset build_multiclass_dataset(const Corpus& corpus, const LabelSpace& labels,
                                               double test_fraction, std::uint64_t seed) {
  labels.validate();

  LabeledDataset out;
  out.seed = seed;
  out.label_set = labels.labels();

  Corpus filtered;
  filtered.provenance = corpus.provenance;
  for (const auto& p : corpus.pairs) {
    if (labels.label_of(p)) {
      filtered.pairs.push_back(p);
    } else {
      out.dropped_by_cwe[LabelSpace::cwe_label(p.cwe)]++;
    }
  }
  if (filtered.pairs.empty()) {
    throw EmptyAfterFilter("no sample carries a label inside the label space");
  }

  const auto by_label = [&labels](const FunctionPair& p) { return *labels.label_of(p); };
  const auto split = corpus::stratified_split(filtered, test_fraction, by_label, seed);
  detail::fill_sides(out, split, by_label);
  return out;
}

// ---------------------------------------------------------------------------
// Decompilation step used by the evaluations.
// ---------------------------------------------------------------------------

// Maps one pair to candidate source text. The neural variant runs the
// translation model; the identity variant passes the reference through and
// serves as the experimental control.
using DecompileFn = std::function<std::string(const FunctionPair&)>;

inline DecompileFn identity_decompiler() {
  return [](const FunctionPair& p) { return classifier_text(p); };
}

// Tokenizer ids (ints) to model ids, truncated to the model window.
inline std::vector<std::size_t> clamp_ids(const bpe::TokenSeq& seq, std::size_t max_len) {
  std::vector<std::size_t> ids;
  ids.reserve(std::min(seq.ids.size(), max_len));
  for (int id : seq.ids) {
    if (ids.size() == max_len) break;
    ids.push_back(static_cast<std::size_t>(id));
  }
  return ids;
}

inline neural::SpecialIds specials_of(const bpe::Model& model) {
  neural::SpecialIds s;
  s.pad = static_cast<std::size_t>(model.pad_id());
  s.bos = static_cast<std::size_t>(model.bos_id());
  s.eos = static_cast<std::size_t>(model.eos_id());
  return s;
}

// The returned closure borrows the model and both tokenizers; keep them alive
// for as long as the closure is used.
inline DecompileFn neural_decompiler(const neural::Seq2Seq& model, const bpe::Model& asm_bpe,
                                     const bpe::Model& src_bpe, neural::DecodeOptions opts) {
  opts.specials = specials_of(src_bpe);
  return [&model, &asm_bpe, &src_bpe, opts](const FunctionPair& p) {
    const std::string& asm_text = p.asm_norm ? *p.asm_norm : p.asm_raw;
    const auto ids = clamp_ids(bpe::encode_text(asm_bpe, asm_text), model.config.max_seq_len);
    if (ids.empty()) return std::string();
    const neural::Decoded decoded = neural::decode(model, ids, opts);
    bpe::TokenSeq seq;
    seq.ids.reserve(decoded.ids.size());
    for (std::size_t id : decoded.ids) seq.ids.push_back(static_cast<int>(id));
    return bpe::decode(src_bpe, seq);
  };
}

// ---------------------------------------------------------------------------
// Evaluation 1: decompilation quality.
// ---------------------------------------------------------------------------

struct PairScore {
  std::string id;
  metrics::SimilarityScores scores;
};

struct DecompileEval {
  metrics::CorpusScores corpus;
  std::vector<PairScore> per_pair;
};

// Scores candidate source text against the normalized reference for every
// test pair. Similarity operates on whitespace words, not subword ids.
inline DecompileEval run_decompile_eval(const std::vector<FunctionPair>& test,
                                        const std::vector<std::string>& candidates) {
  if (test.empty()) throw EmptyInput("decompilation eval: empty test set");
  if (candidates.size() != test.size()) {
    throw LengthMismatch("decompilation eval: candidate count does not match test set");
  }
  DecompileEval out;
  std::vector<std::pair<metrics::TokenSeq, metrics::TokenSeq>> token_pairs;
  token_pairs.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    metrics::TokenSeq cand = bpe::pretokenize(candidates[i]);
    metrics::TokenSeq ref = bpe::pretokenize(classifier_text(test[i]));
    out.per_pair.push_back({test[i].id, metrics::score_pair(cand, ref)});
    token_pairs.emplace_back(std::move(cand), std::move(ref));
  }
  out.corpus = metrics::corpus_scores(token_pairs);
  return out;
}

inline DecompileEval run_decompile_eval(const std::vector<FunctionPair>& test,
                                        const DecompileFn& decompile) {
  std::vector<std::string> candidates;
  candidates.reserve(test.size());
  for (const auto& p : test) candidates.push_back(decompile(p));
  return run_decompile_eval(test, candidates);
}

// ---------------------------------------------------------------------------
// Evaluation 2: vulnerability prediction on decompiled code.
// ---------------------------------------------------------------------------

struct ClassifierSetup {
  neural::TransformerConfig config;  // vocabulary/class sizes are filled in here
  neural::TrainSchedule schedule;
};

struct PredictionEval {
  metrics::ClassificationReport decompiled;  // classifier on decompiled test text
  metrics::ClassificationReport original;    // control: original test text
  neural::TrainResult training;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  std::vector<std::string> label_set;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<std::size_t> classifier_ids(const bpe::Model& text_bpe,
                                               const std::string& text, std::size_t cap) {
  auto ids = clamp_ids(bpe::encode_text(text_bpe, text), cap);
  // Empty text (a silent decompiler) still needs a classifiable input.
  if (ids.empty()) ids.push_back(static_cast<std::size_t>(text_bpe.unk_id()));
  return ids;
}

}  // namespace detail

// Trains the classifier on original train-split source, then evaluates it
// twice on the test split: on decompiled text and on the original text.
inline PredictionEval run_prediction_eval(const LabeledDataset& data,
                                          const bpe::Model& text_bpe, ClassifierSetup setup,
                                          const DecompileFn& decompile) {
  if (data.train.empty()) throw EmptyTrainingSet("prediction eval: empty train split");
  if (data.test.empty()) throw EmptyInput("prediction eval: empty test split");

  std::set<std::string> train_ids;
  for (const auto& s : data.train) train_ids.insert(s.pair.id);
  for (const auto& s : data.test) {
    if (train_ids.count(s.pair.id)) {
      throw UsageError("sample '" + s.pair.id + "' appears in both splits");
    }
  }

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < data.label_set.size(); ++i) index[data.label_set[i]] = i;

  setup.config.vocab_src = text_bpe.vocab_size();
  setup.config.vocab_tgt = data.label_set.size();
  neural::Classifier model = neural::Classifier::init(setup.config);
  const neural::SpecialIds specials = specials_of(text_bpe);
  const std::size_t cap = setup.config.max_seq_len;

  std::vector<neural::LabeledSeq> train;
  train.reserve(data.train.size());
  for (const auto& s : data.train) {
    const auto it = index.find(s.label);
    if (it == index.end()) throw UnknownLabel("unknown training label: " + s.label);
    train.push_back({detail::classifier_ids(text_bpe, classifier_text(s.pair), cap),
                     it->second});
  }

  PredictionEval out;
  out.seed = data.seed;
  out.label_set = data.label_set;
  out.train_samples = data.train.size();
  out.test_samples = data.test.size();
  out.training = neural::train_classifier(model, train, setup.schedule, specials);

  const auto evaluate = [&](const std::function<std::string(const FunctionPair&)>& text_of) {
    std::vector<std::string> predicted, actual;
    predicted.reserve(data.test.size());
    actual.reserve(data.test.size());
    for (const auto& s : data.test) {
      const auto ids = detail::classifier_ids(text_bpe, text_of(s.pair), cap);
      predicted.push_back(data.label_set[neural::classify(model, ids, specials)]);
      actual.push_back(s.label);
    }
    return metrics::classification_report(predicted, actual, data.label_set);
  };

  out.decompiled = evaluate(decompile);
  out.original = evaluate([](const FunctionPair& p) { return classifier_text(p); });
  return out;
}

}  // namespace bindecomp::tasks
