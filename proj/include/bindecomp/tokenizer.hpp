#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bindecomp/common.hpp"
#include "json.hpp"

namespace bindecomp::bpe {

// Whitespace pre-tokenization; the normalized corpus text is already
// single-space separated, so this is a plain split.
inline std::vector<std::string> pretokenize(std::string_view text) {
  return split_whitespace(text);
}

// Split a UTF-8 string into codepoint-sized chunks. Invalid bytes come back
// as single-byte chunks so encoding never fails.
inline std::vector<std::string> utf8_chunks(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const unsigned char c = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if ((c & 0x80) == 0x00) len = 1;
    else if ((c & 0xe0) == 0xc0) len = 2;
    else if ((c & 0xf0) == 0xe0) len = 3;
    else if ((c & 0xf8) == 0xf0) len = 4;
    if (i + len > word.size()) len = 1;
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

struct Specials {
  std::string pad = "<pad>";
  std::string unk = "<unk>";
  std::string bos = "<bos>";
  std::string eos = "<eos>";
  std::string func_boundary = "<func>";
};

struct TokenSeq {
  std::vector<int> ids;
  std::size_t length() const { return ids.size(); }
};

class Model {
 public:
  std::vector<std::pair<std::string, std::string>> merges;
  std::map<std::string, int> vocab;       // symbol -> id, ids dense from 0
  std::vector<std::string> id_to_symbol;  // inverse, indexed by id
  Specials specials;
  std::string end_of_word_marker = "</w>";

  int pad_id() const { return 0; }
  int unk_id() const { return 1; }
  int bos_id() const { return 2; }
  int eos_id() const { return 3; }
  int func_id() const { return 4; }
  std::size_t vocab_size() const { return id_to_symbol.size(); }

  bool is_special_word(const std::string& w) const {
    return w == specials.pad || w == specials.unk || w == specials.bos ||
           w == specials.eos || w == specials.func_boundary;
  }

  int special_id(const std::string& w) const {
    if (w == specials.pad) return pad_id();
    if (w == specials.unk) return unk_id();
    if (w == specials.bos) return bos_id();
    if (w == specials.eos) return eos_id();
    return func_id();
  }
};

namespace detail {

inline std::vector<std::string> word_symbols(const Model& model, std::string_view word) {
  std::vector<std::string> sym = utf8_chunks(word);
  if (!sym.empty()) sym.back() += model.end_of_word_marker;
  return sym;
}

// One left-to-right pass per merge, restarting at the merge position so runs
// like "aaaa" reduce the standard way.
inline void apply_merge(std::vector<std::string>& sym, const std::string& a, const std::string& b) {
  std::size_t i = 0;
  while (sym.size() >= 2 && i + 1 < sym.size()) {
    if (sym[i] == a && sym[i + 1] == b) {
      sym[i] += sym[i + 1];
      sym.erase(sym.begin() + static_cast<std::ptrdiff_t>(i + 1));
    } else {
      ++i;
    }
  }
}

}  // namespace detail

// Train on a word multiset. Counting is recomputed per iteration; the corpus
// sizes this runs on make that a non-issue and it keeps the tie-break
// (lexicographic on the pair) easy to audit.
inline Model train(const std::map<std::string, std::size_t>& word_counts, std::size_t num_merges) {
  if (word_counts.empty()) throw EmptyTrainingSet("bpe::train: empty training set");

  Model model;

  std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
  words.reserve(word_counts.size());
  std::map<std::string, std::size_t> alphabet;
  for (const auto& [word, count] : word_counts) {
    if (word.empty()) continue;
    if (model.is_special_word(word)) continue;  // specials never feed merges
    auto sym = detail::word_symbols(model, word);
    for (const auto& s : sym) alphabet[s]++;
    words.emplace_back(std::move(sym), count);
  }
  if (words.empty()) throw EmptyTrainingSet("bpe::train: no trainable words");

  for (std::size_t step = 0; step < num_merges; ++step) {
    std::map<std::pair<std::string, std::string>, std::size_t> pair_counts;
    for (const auto& [sym, count] : words) {
      for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
        pair_counts[{sym[i], sym[i + 1]}] += count;
      }
    }
    if (pair_counts.empty()) break;
    // Highest count wins; ties fall back to lexicographic order of the pair,
    // which std::map iteration already provides.
    std::pair<std::string, std::string> best;
    std::size_t best_count = 0;
    for (const auto& [pair, count] : pair_counts) {
      if (count > best_count) {
        best = pair;
        best_count = count;
      }
    }
    model.merges.push_back(best);
    for (auto& [sym, count] : words) detail::apply_merge(sym, best.first, best.second);
  }

  // Vocabulary: specials first (lowest ids), then the initial alphabet in
  // lexicographic order, then merge products in merge order.
  auto add_symbol = [&model](const std::string& s) {
    if (model.vocab.emplace(s, static_cast<int>(model.id_to_symbol.size())).second) {
      model.id_to_symbol.push_back(s);
    }
  };
  add_symbol(model.specials.pad);
  add_symbol(model.specials.unk);
  add_symbol(model.specials.bos);
  add_symbol(model.specials.eos);
  add_symbol(model.specials.func_boundary);
  for (const auto& [sym, count] : alphabet) add_symbol(sym);
  for (const auto& [a, b] : model.merges) add_symbol(a + b);
  return model;
}

inline Model train(const std::vector<std::string>& words, std::size_t num_merges) {
  std::map<std::string, std::size_t> counts;
  for (const auto& w : words) counts[w]++;
  return train(counts, num_merges);
}

inline std::vector<int> encode_word(const Model& model, const std::string& word) {
  if (word.empty()) return {};
  if (model.is_special_word(word)) return {model.special_id(word)};
  auto sym = detail::word_symbols(model, word);
  for (const auto& [a, b] : model.merges) detail::apply_merge(sym, a, b);
  std::vector<int> ids;
  ids.reserve(sym.size());
  for (const auto& s : sym) {
    auto it = model.vocab.find(s);
    ids.push_back(it == model.vocab.end() ? model.unk_id() : it->second);
  }
  return ids;
}

inline TokenSeq encode(const Model& model, const std::vector<std::string>& words) {
  TokenSeq seq;
  for (const auto& w : words) {
    auto ids = encode_word(model, w);
    seq.ids.insert(seq.ids.end(), ids.begin(), ids.end());
  }
  return seq;
}

inline TokenSeq encode_text(const Model& model, std::string_view text) {
  return encode(model, pretokenize(text));
}

// Inverts encode up to unk substitutions. pad/bos/eos decode to their glyphs
// as standalone words, as does the function boundary marker.
inline std::string decode(const Model& model, const TokenSeq& seq) {
  std::vector<std::string> words;
  std::string current;
  const std::string& marker = model.end_of_word_marker;
  for (int id : seq.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.vocab_size()) {
      throw IdOutOfRange("bpe::decode: id out of range");
    }
    if (id <= model.func_id()) {  // specials occupy the lowest ids
      if (!current.empty()) {
        words.push_back(current);
        current.clear();
      }
      words.push_back(model.id_to_symbol[static_cast<std::size_t>(id)]);
      continue;
    }
    const std::string& sym = model.id_to_symbol[static_cast<std::size_t>(id)];
    if (sym.size() >= marker.size() &&
        sym.compare(sym.size() - marker.size(), marker.size(), marker) == 0) {
      current += sym.substr(0, sym.size() - marker.size());
      words.push_back(current);
      current.clear();
    } else {
      current += sym;
    }
  }
  if (!current.empty()) words.push_back(current);
  return join(words, " ");
}

// ---------------------------------------------------------------------------
// Serialization. Loading a dump reproduces identical encodings.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const Model& model) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["end_of_word_marker"] = model.end_of_word_marker;
  j["specials"] = {{"pad", model.specials.pad},
                   {"unk", model.specials.unk},
                   {"bos", model.specials.bos},
                   {"eos", model.specials.eos},
                   {"func_boundary", model.specials.func_boundary}};
  nlohmann::ordered_json merges = nlohmann::ordered_json::array();
  for (const auto& [a, b] : model.merges) merges.push_back({a, b});
  j["merges"] = std::move(merges);
  nlohmann::ordered_json vocab = nlohmann::ordered_json::object();
  for (std::size_t id = 0; id < model.id_to_symbol.size(); ++id) {
    vocab[model.id_to_symbol[id]] = id;
  }
  j["vocab"] = std::move(vocab);
  return j;
}

inline Model from_json(const nlohmann::json& j) {
  Model model;
  model.end_of_word_marker = j.at("end_of_word_marker").get<std::string>();
  const auto& sp = j.at("specials");
  model.specials.pad = sp.at("pad").get<std::string>();
  model.specials.unk = sp.at("unk").get<std::string>();
  model.specials.bos = sp.at("bos").get<std::string>();
  model.specials.eos = sp.at("eos").get<std::string>();
  model.specials.func_boundary = sp.at("func_boundary").get<std::string>();
  for (const auto& m : j.at("merges")) {
    model.merges.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
  }
  const auto& vocab = j.at("vocab");
  model.id_to_symbol.resize(vocab.size());
  for (auto it = vocab.begin(); it != vocab.end(); ++it) {
    const int id = it.value().get<int>();
    if (id < 0 || static_cast<std::size_t>(id) >= model.id_to_symbol.size()) {
      throw IoError("bpe model: non-dense vocab ids");
    }
    model.vocab[it.key()] = id;
    model.id_to_symbol[static_cast<std::size_t>(id)] = it.key();
  }
  return model;
}

inline void save(const Model& model, const std::filesystem::path& path) {
  write_file(path, to_json(model).dump(2) + "\n");
}

inline Model load(const std::filesystem::path& path) {
  return from_json(nlohmann::json::parse(read_file(path)));
}

// ---------------------------------------------------------------------------
// Length percentiles and toss reduction.
// ---------------------------------------------------------------------------

// Nearest-rank percentile: value at rank ceil(p*n/100), 1-indexed; p = 0
// yields the minimum. p*n is computed before dividing so integer percentiles
// stay exact in floating point.
inline std::size_t length_percentile(std::vector<std::size_t> lengths, double p) {
  if (lengths.empty()) throw EmptyInput("length_percentile: empty input");
  if (p < 0.0 || p > 100.0) throw UsageError("length_percentile: p outside [0,100]");
  std::sort(lengths.begin(), lengths.end());
  if (p == 0.0) return lengths.front();
  const double n = static_cast<double>(lengths.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, lengths.size());
  return lengths[rank - 1];
}

struct TossBounds {
  std::size_t low = 0;
  std::size_t high = 0;

  bool contains(std::size_t len) const { return len >= low && len <= high; }
};

inline TossBounds toss_bounds(const std::vector<std::size_t>& lengths, double low_p, double high_p) {
  return {length_percentile(lengths, low_p), length_percentile(lengths, high_p)};
}

// Which side's token length gates a pair's survival.
enum class TossSide { source_lang, target_lang, both };

inline TossSide toss_side_from_string(std::string_view s) {
  if (s == "source_lang" || s == "source") return TossSide::source_lang;
  if (s == "target_lang" || s == "target") return TossSide::target_lang;
  if (s == "both") return TossSide::both;
  throw UsageError("unknown toss side: " + std::string(s));
}

struct TossResult {
  std::vector<std::size_t> kept_indices;  // ascending positions into the input
  std::size_t dropped = 0;
  TossBounds source_bounds;
  TossBounds target_bounds;
};

// Percentile bounds are computed per selected side over the whole corpus,
// then pairs survive only if every selected side lies inside its inclusive
// band.
inline TossResult toss_reduce(const std::vector<std::size_t>& source_lengths,
                              const std::vector<std::size_t>& target_lengths,
                              double low_p = 5.0, double high_p = 95.0,
                              TossSide side = TossSide::both) {
  if (source_lengths.size() != target_lengths.size()) {
    throw LengthMismatch("toss_reduce: side length vectors differ");
  }
  if (source_lengths.empty()) throw EmptyInput("toss_reduce: empty corpus");
  const bool use_source = side != TossSide::target_lang;
  const bool use_target = side != TossSide::source_lang;

  TossResult result;
  if (use_source) result.source_bounds = toss_bounds(source_lengths, low_p, high_p);
  if (use_target) result.target_bounds = toss_bounds(target_lengths, low_p, high_p);

  for (std::size_t i = 0; i < source_lengths.size(); ++i) {
    const bool ok_source = !use_source || result.source_bounds.contains(source_lengths[i]);
    const bool ok_target = !use_target || result.target_bounds.contains(target_lengths[i]);
    if (ok_source && ok_target) {
      result.kept_indices.push_back(i);
    } else {
      ++result.dropped;
    }
  }
  if (result.kept_indices.empty()) throw EverythingDropped("toss_reduce: no pairs survive");
  return result;
}

}  // namespace bindecomp::bpe
