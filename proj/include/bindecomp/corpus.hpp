#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bindecomp/common.hpp"
#include "json.hpp"

namespace bindecomp::corpus {

struct CweId {
  int value = 0;
  friend bool operator==(const CweId&, const CweId&) = default;
  friend auto operator<=>(const CweId&, const CweId&) = default;
};

enum class Variant { good, bad };

inline std::string to_string(Variant v) { return v == Variant::good ? "good" : "bad"; }

inline Variant variant_from_string(std::string_view s) {
  if (s == "good") return Variant::good;
  if (s == "bad") return Variant::bad;
  throw UsageError("unknown variant: " + std::string(s));
}

struct FunctionPair {
  std::string id;
  CweId cwe;
  Variant variant = Variant::bad;
  std::string asm_raw;
  std::string src_raw;
  std::optional<std::string> asm_norm;
  std::optional<std::string> src_norm;
  std::optional<std::size_t> asm_token_len;
  std::optional<std::size_t> src_token_len;
};

struct Corpus {
  std::vector<FunctionPair> pairs;
  std::map<std::string, std::string> provenance;
  Diagnostics warnings;
};

// ---------------------------------------------------------------------------
// Label parsing.
// ---------------------------------------------------------------------------

struct VariantMarkers {
  std::string good = ".good";
  std::string bad = ".bad";
};

struct CaseLabel {
  CweId cwe;
  Variant variant = Variant::bad;
};

// Pulls the first `CWE<digits>_` group out of a basename and decides the
// variant from the marker substrings.
inline CaseLabel parse_case_label(const std::string& filename,
                                  const VariantMarkers& markers = {}) {
  CaseLabel label;

  std::size_t pos = 0;
  bool found = false;
  while ((pos = filename.find("CWE", pos)) != std::string::npos) {
    std::size_t d = pos + 3;
    std::size_t end = d;
    while (end < filename.size() && filename[end] >= '0' && filename[end] <= '9') ++end;
    if (end > d && end < filename.size() && filename[end] == '_') {
      label.cwe.value = std::stoi(filename.substr(d, end - d));
      found = true;
      break;
    }
    pos += 3;
  }
  if (!found || label.cwe.value <= 0) {
    throw MalformedName("no CWE<digits>_ prefix in: " + filename);
  }

  const bool has_good = filename.find(markers.good) != std::string::npos;
  const bool has_bad = filename.find(markers.bad) != std::string::npos;
  if (has_good == has_bad) {
    throw AmbiguousVariant((has_good ? "both variant markers in: "
                                     : "no variant marker in: ") +
                           filename);
  }
  label.variant = has_good ? Variant::good : Variant::bad;
  return label;
}

// ---------------------------------------------------------------------------
// Guarded-source splitting (Juliet OMITGOOD / OMITBAD convention).
// ---------------------------------------------------------------------------

// Reduce a guarded Juliet-style source to one variant's view by evaluating
// only the OMITBAD / OMITGOOD / INCLUDEMAIN conditionals; everything else,
// including other preprocessor lines, passes through verbatim. INCLUDEMAIN
// is treated as defined so the view matches a linked build.
inline std::string filter_variant_source(const std::string& text, Variant keep) {
  const std::string omit = keep == Variant::bad ? "OMITGOOD" : "OMITBAD";
  const std::set<std::string, std::less<>> defined = {omit, "INCLUDEMAIN"};
  const std::set<std::string, std::less<>> guards = {"OMITBAD", "OMITGOOD",
                                                     "INCLUDEMAIN"};

  struct Frame {
    bool ours;
    bool active;
  };
  std::vector<Frame> stack;
  auto emitting = [&] {
    for (const auto& f : stack) {
      if (f.ours && !f.active) return false;
    }
    return true;
  };

  // First significant word of a directive line, e.g. ("ifdef", "OMITBAD").
  auto directive = [](std::string_view line) -> std::pair<std::string, std::string> {
    std::string_view t = trim(line);
    if (t.empty() || t[0] != '#') return {"", ""};
    t.remove_prefix(1);
    t = trim(t);
    const auto words = split_whitespace(t);
    if (words.empty()) return {"", ""};
    return {words[0], words.size() > 1 ? words[1] : ""};
  };

  std::string out;
  bool last_blank = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    const bool final_piece = eol == std::string::npos;
    std::string line = text.substr(pos, final_piece ? text.size() - pos : eol - pos);
    pos = final_piece ? text.size() + 1 : eol + 1;
    if (final_piece && line.empty()) break;

    const auto [word, arg] = directive(line);
    if ((word == "ifdef" || word == "ifndef") && guards.count(arg)) {
      bool active = defined.count(arg) != 0;
      if (word == "ifndef") active = !active;
      stack.push_back({true, active});
      continue;
    }
    if (word.rfind("if", 0) == 0 && !word.empty()) {
      stack.push_back({false, true});
    } else if (word == "else" && !stack.empty()) {
      if (stack.back().ours) {
        stack.back().active = !stack.back().active;
        continue;
      }
    } else if (word == "endif" && !stack.empty()) {
      const bool ours = stack.back().ours;
      stack.pop_back();
      if (ours) continue;
    }

    if (!emitting()) continue;
    const bool blank = trim(line).empty();
    if (blank && last_blank) continue;  // collapse holes left by removed blocks
    last_blank = blank;
    out += line;
    if (!final_piece) out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ingestion.
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_asm_ext(const std::string& ext) {
  return ext == ".asm" || ext == ".s" || ext == ".dis" || ext == ".objdump";
}

inline bool is_src_ext(const std::string& ext) {
  return ext == ".c" || ext == ".cpp" || ext == ".cc" || ext == ".cxx";
}

inline std::set<std::string> read_id_manifest(const std::string& path) {
  std::set<std::string> ids;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const std::string id{trim(line)};
    if (id.empty() || id[0] == '#') continue;
    ids.insert(id);
  }
  return ids;
}

}  // namespace detail

// Walk `root`, pair assembly and source files by stem, and label each pair
// from its stem. An optional manifest restricts ingestion to the listed ids.
// Unmatched files become warnings, never silent drops.
inline Corpus ingest_pairs(const std::string& root,
                           const std::optional<std::string>& manifest = std::nullopt,
                           const VariantMarkers& markers = {}) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) {
    throw IoError("ingest_pairs: not a directory: " + root);
  }

  std::optional<std::set<std::string>> keep;
  if (manifest) keep = detail::read_id_manifest(*manifest);

  std::map<std::string, fs::path> asm_files;
  std::map<std::string, fs::path> src_files;
  Corpus out;

  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  for (const auto& path : files) {
    const std::string ext = path.extension().string();
    const std::string stem = path.stem().string();
    auto* bucket = detail::is_asm_ext(ext)   ? &asm_files
                   : detail::is_src_ext(ext) ? &src_files
                                             : nullptr;
    if (!bucket) continue;
    if (keep && !keep->count(stem)) continue;
    if (bucket->count(stem)) {
      throw DuplicateId("two " + std::string(bucket == &asm_files ? "assembly" : "source") +
                        " files share the stem '" + stem + "': " +
                        bucket->at(stem).string() + " and " + path.string());
    }
    (*bucket)[stem] = path;
  }

  for (const auto& [stem, asm_path] : asm_files) {
    const auto src = src_files.find(stem);
    if (src == src_files.end()) {
      out.warnings.push_back({0, "unmatched assembly file: " + asm_path.string()});
      continue;
    }
    const CaseLabel label = parse_case_label(stem, markers);
    FunctionPair pair;
    pair.id = stem;
    pair.cwe = label.cwe;
    pair.variant = label.variant;
    pair.asm_raw = read_file(asm_path.string());
    pair.src_raw = read_file(src->second.string());
    if (pair.asm_raw.empty() || pair.src_raw.empty()) {
      throw IoError("ingest_pairs: empty input file for id '" + stem + "'");
    }
    out.pairs.push_back(std::move(pair));
  }
  for (const auto& [stem, src_path] : src_files) {
    if (!asm_files.count(stem)) {
      out.warnings.push_back({0, "unmatched source file: " + src_path.string()});
    }
  }

  if (out.pairs.empty()) {
    throw EmptyCorpus("ingest_pairs: no matched stems under " + root);
  }
  out.provenance["root"] = root;
  if (manifest) out.provenance["manifest"] = *manifest;
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: JSON lines, fixed field order.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json pair_to_json(const FunctionPair& p) {
  nlohmann::ordered_json j;
  j["id"] = p.id;
  j["cwe"] = p.cwe.value;
  j["variant"] = to_string(p.variant);
  j["asm_raw"] = p.asm_raw;
  j["src_raw"] = p.src_raw;
  j["asm_norm"] = p.asm_norm ? nlohmann::ordered_json(*p.asm_norm) : nullptr;
  j["src_norm"] = p.src_norm ? nlohmann::ordered_json(*p.src_norm) : nullptr;
  if (p.asm_token_len) j["asm_token_len"] = *p.asm_token_len;
  if (p.src_token_len) j["src_token_len"] = *p.src_token_len;
  return j;
}

inline FunctionPair pair_from_json(const nlohmann::json& j) {
  FunctionPair p;
  p.id = j.at("id").get<std::string>();
  p.cwe.value = j.at("cwe").get<int>();
  p.variant = variant_from_string(j.at("variant").get<std::string>());
  p.asm_raw = j.at("asm_raw").get<std::string>();
  p.src_raw = j.at("src_raw").get<std::string>();
  if (j.contains("asm_norm") && !j["asm_norm"].is_null()) {
    p.asm_norm = j["asm_norm"].get<std::string>();
  }
  if (j.contains("src_norm") && !j["src_norm"].is_null()) {
    p.src_norm = j["src_norm"].get<std::string>();
  }
  if (j.contains("asm_token_len") && !j["asm_token_len"].is_null()) {
    p.asm_token_len = j["asm_token_len"].get<std::size_t>();
  }
  if (j.contains("src_token_len") && !j["src_token_len"].is_null()) {
    p.src_token_len = j["src_token_len"].get<std::size_t>();
  }
  if (p.id.empty()) throw IoError("corpus line with empty id");
  if (p.asm_raw.empty() || p.src_raw.empty()) {
    throw IoError("corpus line '" + p.id + "' has an empty code field");
  }
  return p;
}

inline std::string to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& p : corpus.pairs) {
    out += pair_to_json(p).dump();
    out += '\n';
  }
  return out;
}

inline Corpus from_jsonl(const std::string& text) {
  Corpus corpus;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    FunctionPair p = pair_from_json(j);
    if (!seen.insert(p.id).second) {
      throw DuplicateId("corpus line " + std::to_string(line_no) + ": id '" + p.id +
                        "' appears twice");
    }
    corpus.pairs.push_back(std::move(p));
  }
  if (corpus.pairs.empty()) throw EmptyCorpus("corpus stream holds no pairs");
  return corpus;
}

// ---------------------------------------------------------------------------
// Stratified splitting.
// ---------------------------------------------------------------------------

enum class SplitKey { variant, cwe, cwe_and_variant };

inline SplitKey split_key_from_string(std::string_view s) {
  if (s == "variant") return SplitKey::variant;
  if (s == "cwe") return SplitKey::cwe;
  if (s == "cwe_and_variant" || s == "cwe+variant") return SplitKey::cwe_and_variant;
  throw UsageError("unknown split key: " + std::string(s));
}

inline std::string stratum_of(const FunctionPair& p, SplitKey key) {
  switch (key) {
    case SplitKey::variant:
      return to_string(p.variant);
    case SplitKey::cwe:
      return "CWE" + std::to_string(p.cwe.value);
    case SplitKey::cwe_and_variant:
    default:
      return "CWE" + std::to_string(p.cwe.value) + "/" + to_string(p.variant);
  }
}

enum class SplitSide { train, test };

using SplitPins = std::map<std::string, SplitSide>;

struct SplitResult {
  Corpus train;
  Corpus test;
  std::map<std::string, std::size_t> test_quota;  // stratum -> assigned test count
};

// Largest-remainder allocation: the global test size is fraction*N rounded
// half up, each stratum gets the floor of its share, and the leftover seats
// go to the largest fractional remainders (ties broken by stratum name).
inline std::map<std::string, std::size_t> largest_remainder_quotas(
    const std::map<std::string, std::size_t>& stratum_sizes, double fraction) {
  double total_exact = 0;
  for (const auto& [name, n] : stratum_sizes) total_exact += fraction * static_cast<double>(n);
  const auto total = static_cast<std::size_t>(total_exact + 0.5);

  std::map<std::string, std::size_t> quota;
  std::vector<std::pair<double, std::string>> remainders;
  std::size_t assigned = 0;
  for (const auto& [name, n] : stratum_sizes) {
    const double exact = fraction * static_cast<double>(n);
    const auto base = static_cast<std::size_t>(exact);
    quota[name] = base;
    assigned += base;
    remainders.emplace_back(exact - static_cast<double>(base), name);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; i < remainders.size() && assigned < total; ++i) {
    const std::string& name = remainders[i].second;
    if (quota[name] < stratum_sizes.at(name)) {
      ++quota[name];
      ++assigned;
    }
  }
  return quota;
}

// Strata may come from a built-in key or from any caller-supplied labeling.
using StratumFn = std::function<std::string(const FunctionPair&)>;

inline SplitResult stratified_split(const Corpus& corpus, double test_fraction,
                                    const StratumFn& stratum, std::uint64_t seed,
                                    const SplitPins& pins = {}) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw UsageError("test fraction must lie strictly between 0 and 1");
  }

  std::map<std::string, std::vector<std::size_t>> strata;  // name -> pair indices
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    strata[stratum(corpus.pairs[i])].push_back(i);
  }
  for (const auto& [name, members] : strata) {
    if (members.size() < 2) {
      throw StratumTooSmall("stratum '" + name + "' has only " +
                            std::to_string(members.size()) + " member(s)");
    }
  }

  std::map<std::string, std::size_t> sizes;
  for (const auto& [name, members] : strata) sizes[name] = members.size();
  const auto quota = largest_remainder_quotas(sizes, test_fraction);

  std::vector<bool> in_test(corpus.pairs.size(), false);
  for (const auto& [name, members] : strata) {
    std::size_t want = quota.at(name);

    std::vector<std::size_t> pool;
    for (std::size_t idx : members) {
      const auto pin = pins.find(corpus.pairs[idx].id);
      if (pin == pins.end()) {
        pool.push_back(idx);
      } else if (pin->second == SplitSide::test) {
        in_test[idx] = true;
        want = want > 0 ? want - 1 : 0;
      }
    }

    Rng rng(derive_seed(seed, name));
    rng.shuffle(pool);
    for (std::size_t i = 0; i < pool.size() && i < want; ++i) in_test[pool[i]] = true;
  }

  SplitResult out;
  out.test_quota = quota;
  out.train.provenance = corpus.provenance;
  out.test.provenance = corpus.provenance;
  out.train.provenance["split"] = "train";
  out.test.provenance["split"] = "test";
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    (in_test[i] ? out.test : out.train).pairs.push_back(corpus.pairs[i]);
  }
  return out;
}

inline SplitResult stratified_split(const Corpus& corpus, double test_fraction,
                                    SplitKey key, std::uint64_t seed,
                                    const SplitPins& pins = {}) {
  return stratified_split(
      corpus, test_fraction,
      [key](const FunctionPair& p) { return stratum_of(p, key); }, seed, pins);
}

}  // namespace bindecomp::corpus
