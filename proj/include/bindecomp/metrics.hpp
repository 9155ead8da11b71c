#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "bindecomp/common.hpp"

namespace bindecomp::metrics {

using TokenSeq = std::vector<std::string>;

// ---------------------------------------------------------------------------
// Edit similarity: 1 - Levenshtein / max(len). The corpus-level "ED" number
// reported elsewhere is the mean of this per-pair value.
// ---------------------------------------------------------------------------

inline std::size_t levenshtein(const TokenSeq& a, const TokenSeq& b) {
  const std::size_t m = a.size(), n = b.size();
  if (m == 0) return n;
  if (n == 0) return m;
  std::vector<std::size_t> prev(n + 1), cur(n + 1);
  for (std::size_t j = 0; j <= n; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= m; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= n; ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

inline double edit_similarity(const TokenSeq& candidate, const TokenSeq& reference) {
  if (candidate.empty() && reference.empty()) return 1.0;
  const double denom = static_cast<double>(std::max(candidate.size(), reference.size()));
  return 1.0 - static_cast<double>(levenshtein(candidate, reference)) / denom;
}

// ---------------------------------------------------------------------------
// BLEU-4 with add-one smoothing on zero higher-order counts.
// ---------------------------------------------------------------------------

namespace detail {

inline std::map<TokenSeq, std::size_t> ngram_counts(const TokenSeq& tokens, std::size_t n) {
  std::map<TokenSeq, std::size_t> counts;
  if (tokens.size() < n || n == 0) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    counts[TokenSeq(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                    tokens.begin() + static_cast<std::ptrdiff_t>(i + n))]++;
  }
  return counts;
}

struct BleuCounts {
  std::size_t clipped[4] = {0, 0, 0, 0};
  std::size_t total[4] = {0, 0, 0, 0};
  std::size_t candidate_len = 0;
  std::size_t reference_len = 0;  // closest reference length (ties -> shorter)
};

inline BleuCounts bleu_counts(const TokenSeq& candidate, const std::vector<TokenSeq>& references) {
  if (references.empty()) throw EmptyInput("bleu4: references must be non-empty");
  BleuCounts bc;
  bc.candidate_len = candidate.size();
  bc.reference_len = references.front().size();
  for (const auto& ref : references) {
    const auto diff = [&](std::size_t len) {
      return len > candidate.size() ? len - candidate.size() : candidate.size() - len;
    };
    if (diff(ref.size()) < diff(bc.reference_len) ||
        (diff(ref.size()) == diff(bc.reference_len) && ref.size() < bc.reference_len)) {
      bc.reference_len = ref.size();
    }
  }
  for (std::size_t n = 1; n <= 4; ++n) {
    auto cand_counts = ngram_counts(candidate, n);
    std::map<TokenSeq, std::size_t> max_ref;
    for (const auto& ref : references) {
      for (const auto& [gram, count] : ngram_counts(ref, n)) {
        auto& slot = max_ref[gram];
        slot = std::max(slot, count);
      }
    }
    std::size_t clipped = 0, total = 0;
    for (const auto& [gram, count] : cand_counts) {
      total += count;
      auto it = max_ref.find(gram);
      if (it != max_ref.end()) clipped += std::min(count, it->second);
    }
    bc.clipped[n - 1] = clipped;
    bc.total[n - 1] = total;
  }
  return bc;
}

inline double bleu_from_counts(const BleuCounts& bc) {
  if (bc.candidate_len == 0) return bc.reference_len == 0 ? 1.0 : 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    double clipped = static_cast<double>(bc.clipped[n - 1]);
    double total = static_cast<double>(bc.total[n - 1]);
    double p;
    if (n == 1) {
      if (clipped == 0.0) return 0.0;  // no unigram overlap at all
      p = clipped / total;
    } else if (clipped == 0.0) {
      p = (clipped + 1.0) / (total + 1.0);  // add-one smoothing
    } else {
      p = clipped / total;
    }
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(bc.candidate_len);
  const double r = static_cast<double>(bc.reference_len);
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / 4.0);
}

}  // namespace detail

inline double bleu4(const TokenSeq& candidate, const std::vector<TokenSeq>& references) {
  return detail::bleu_from_counts(detail::bleu_counts(candidate, references));
}

inline double bleu4(const TokenSeq& candidate, const TokenSeq& reference) {
  return bleu4(candidate, std::vector<TokenSeq>{reference});
}

// ---------------------------------------------------------------------------
// ROUGE-L (LCS-based precision/recall/F).
// ---------------------------------------------------------------------------

struct RougeScores {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

inline std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  const std::size_t m = a.size(), n = b.size();
  if (m == 0 || n == 0) return 0;
  std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

inline RougeScores rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
  if (candidate.empty() && reference.empty()) return {1.0, 1.0, 1.0};
  if (candidate.empty() || reference.empty()) return {0.0, 0.0, 0.0};
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  RougeScores s;
  s.precision = lcs / static_cast<double>(candidate.size());
  s.recall = lcs / static_cast<double>(reference.size());
  s.f = (s.precision + s.recall) > 0.0
            ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
            : 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// METEOR, exact-match unigram variant. The alignment is greedy left-to-right:
// a candidate token first tries to extend the current chunk (reference index
// prev+1), otherwise takes the leftmost unused match.
// ---------------------------------------------------------------------------

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

inline MeteorAlignment meteor_align(const TokenSeq& candidate, const TokenSeq& reference) {
  MeteorAlignment a;
  std::vector<bool> used(reference.size(), false);
  std::ptrdiff_t prev = -2;  // ref index matched by the previous candidate token
  for (const auto& tok : candidate) {
    std::ptrdiff_t j = -1;
    const std::size_t cont = static_cast<std::size_t>(prev + 1);
    if (prev >= 0 && cont < reference.size() && !used[cont] && reference[cont] == tok) {
      j = prev + 1;
    } else {
      for (std::size_t k = 0; k < reference.size(); ++k) {
        if (!used[k] && reference[k] == tok) {
          j = static_cast<std::ptrdiff_t>(k);
          break;
        }
      }
    }
    if (j >= 0) {
      used[static_cast<std::size_t>(j)] = true;
      ++a.matches;
      if (j != prev + 1 || prev < 0) ++a.chunks;
      prev = j;
    } else {
      prev = -2;
    }
  }
  return a;
}

inline double meteor(const TokenSeq& candidate, const TokenSeq& reference) {
  const MeteorAlignment a = meteor_align(candidate, reference);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(a.chunks) / m;
  const double penalty = 0.5 * frag * frag * frag;
  return f_mean * (1.0 - penalty);
}

// ---------------------------------------------------------------------------
// Per-pair and corpus-level similarity bundles.
// ---------------------------------------------------------------------------

struct SimilarityScores {
  double edit_similarity = 0.0;
  double bleu4 = 0.0;
  double rouge_l_f = 0.0;
  double meteor = 0.0;
};

inline SimilarityScores score_pair(const TokenSeq& candidate, const TokenSeq& reference) {
  SimilarityScores s;
  s.edit_similarity = edit_similarity(candidate, reference);
  s.bleu4 = bleu4(candidate, reference);
  s.rouge_l_f = rouge_l(candidate, reference).f;
  s.meteor = meteor(candidate, reference);
  return s;
}

struct CorpusScores {
  SimilarityScores mean;   // bleu4 here is the mean over pairs
  double bleu4_pooled = 0.0;  // corpus-level BLEU from pooled n-gram counts
  std::size_t pairs = 0;
};

inline CorpusScores corpus_scores(const std::vector<std::pair<TokenSeq, TokenSeq>>& pairs) {
  if (pairs.empty()) throw EmptyInput("corpus_scores: no pairs");
  CorpusScores out;
  out.pairs = pairs.size();
  detail::BleuCounts pooled;
  for (const auto& [cand, ref] : pairs) {
    const SimilarityScores s = score_pair(cand, ref);
    out.mean.edit_similarity += s.edit_similarity;
    out.mean.bleu4 += s.bleu4;
    out.mean.rouge_l_f += s.rouge_l_f;
    out.mean.meteor += s.meteor;
    const auto bc = detail::bleu_counts(cand, {ref});
    for (std::size_t n = 0; n < 4; ++n) {
      pooled.clipped[n] += bc.clipped[n];
      pooled.total[n] += bc.total[n];
    }
    pooled.candidate_len += bc.candidate_len;
    pooled.reference_len += bc.reference_len;
  }
  const double n = static_cast<double>(pairs.size());
  out.mean.edit_similarity /= n;
  out.mean.bleu4 /= n;
  out.mean.rouge_l_f /= n;
  out.mean.meteor /= n;
  out.bleu4_pooled = detail::bleu_from_counts(pooled);
  return out;
}

// ---------------------------------------------------------------------------
// Classification metrics.
// ---------------------------------------------------------------------------

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassificationReport {
  std::vector<std::string> labels;                  // ordered label set
  std::map<std::string, ClassScores> per_class;
  std::vector<std::vector<std::size_t>> confusion;  // [actual][predicted]
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::vector<std::string> empty_classes;  // zero support and zero predictions
};

inline ClassificationReport classification_report(const std::vector<std::string>& predicted,
                                                  const std::vector<std::string>& actual,
                                                  const std::vector<std::string>& labels) {
  if (predicted.size() != actual.size())
    throw LengthMismatch("classification_report: predicted/actual length mismatch");
  if (predicted.empty()) throw EmptyInput("classification_report: no samples");

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index[labels[i]] = i;
  const std::size_t k = labels.size();

  ClassificationReport rep;
  rep.labels = labels;
  rep.confusion.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    auto ai = index.find(actual[i]);
    auto pi = index.find(predicted[i]);
    if (ai == index.end()) throw UnknownLabel("unknown actual label: " + actual[i]);
    if (pi == index.end()) throw UnknownLabel("unknown predicted label: " + predicted[i]);
    rep.confusion[ai->second][pi->second]++;
  }

  const double total = static_cast<double>(predicted.size());
  double trace = 0.0, macro_sum = 0.0, weighted_sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = rep.confusion[c][c];
    std::size_t actual_count = 0, predicted_count = 0;
    for (std::size_t j = 0; j < k; ++j) {
      actual_count += rep.confusion[c][j];
      predicted_count += rep.confusion[j][c];
    }
    ClassScores s;
    s.support = actual_count;
    s.precision = predicted_count ? static_cast<double>(tp) / static_cast<double>(predicted_count) : 0.0;
    s.recall = actual_count ? static_cast<double>(tp) / static_cast<double>(actual_count) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    if (actual_count == 0 && predicted_count == 0) rep.empty_classes.push_back(labels[c]);
    trace += static_cast<double>(tp);
    macro_sum += s.f1;
    weighted_sum += static_cast<double>(s.support) * s.f1;
    rep.per_class[labels[c]] = s;
  }
  rep.accuracy = trace / total;
  rep.macro_f1 = k ? macro_sum / static_cast<double>(k) : 0.0;
  rep.weighted_f1 = weighted_sum / total;
  return rep;
}

}  // namespace bindecomp::metrics
