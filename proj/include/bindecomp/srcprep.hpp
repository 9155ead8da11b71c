#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "bindecomp/common.hpp"

namespace bindecomp::srcprep {

enum class TokKind {
  identifier,
  keyword,
  number,
  string_literal,
  char_literal,
  comment,
  punctuator,
  preprocessor,
  whitespace,
};

struct SrcToken {
  TokKind kind = TokKind::punctuator;
  std::string text;
  int line = 1;
};

struct LexResult {
  std::vector<SrcToken> tokens;
  Diagnostics diagnostics;
};

namespace detail {

inline const std::set<std::string>& keyword_set() {
  static const std::set<std::string> kws = {
      // C
      "auto", "break", "case", "char", "const", "continue", "default", "do",
      "double", "else", "enum", "extern", "float", "for", "goto", "if",
      "inline", "int", "long", "register", "restrict", "return", "short",
      "signed", "sizeof", "static", "struct", "switch", "typedef", "union",
      "unsigned", "void", "volatile", "while", "_Bool", "_Complex",
      "_Imaginary",
      // C++
      "alignas", "alignof", "asm", "bool", "catch", "char8_t", "char16_t",
      "char32_t", "class", "concept", "consteval", "constexpr", "constinit",
      "const_cast", "co_await", "co_return", "co_yield", "decltype", "delete",
      "dynamic_cast", "explicit", "export", "false", "friend", "mutable",
      "namespace", "new", "noexcept", "nullptr", "operator", "private",
      "protected", "public", "reinterpret_cast", "requires", "static_assert",
      "static_cast", "template", "this", "thread_local", "throw", "true",
      "try", "typeid", "typename", "using", "virtual", "wchar_t",
  };
  return kws;
}

inline bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

inline bool is_ident_char(char c) {
  return is_ident_start(c) || (c >= '0' && c <= '9');
}

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline bool is_space_char(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Longest-match punctuator table, longest first.
inline const std::vector<std::string>& punctuators() {
  static const std::vector<std::string> table = {
      "<<=", ">>=", "...", "->*", "<=>",
      "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||",
      "+=", "-=", "*=", "/=", "%=", "&=", "^=", "|=", "::", "##", ".*",
  };
  return table;
}

// Encoding prefixes that may precede a string or character literal.
inline bool literal_prefix(std::string_view s, std::size_t i, bool& raw, std::size_t& len) {
  static const std::array<std::pair<const char*, bool>, 9> prefixes = {{
      {"u8R", true}, {"uR", true}, {"UR", true}, {"LR", true}, {"R", true},
      {"u8", false}, {"u", false}, {"U", false}, {"L", false},
  }};
  for (const auto& [p, is_raw] : prefixes) {
    const std::size_t n = std::char_traits<char>::length(p);
    if (s.compare(i, n, p) == 0 && i + n < s.size() &&
        (s[i + n] == '"' || (!is_raw && s[i + n] == '\''))) {
      raw = is_raw;
      len = n;
      return true;
    }
  }
  raw = false;
  len = 0;
  return false;
}

}  // namespace detail

// Lossless lexer: concatenating the token texts reproduces the input
// byte-for-byte. Never fails; ill-formed constructs degrade to diagnostics
// or single-byte punctuators.
inline LexResult lex_c(std::string_view text) {
  LexResult out;
  std::size_t i = 0;
  int line = 1;
  bool at_line_start = true;

  auto count_lines = [&line](std::string_view chunk) {
    for (char c : chunk) {
      if (c == '\n') ++line;
    }
  };
  auto push = [&](TokKind kind, std::size_t begin, std::size_t end) {
    SrcToken tok;
    tok.kind = kind;
    tok.text = std::string(text.substr(begin, end - begin));
    tok.line = line;
    count_lines(tok.text);
    out.tokens.push_back(std::move(tok));
    if (kind != TokKind::whitespace) at_line_start = false;
    i = end;
  };

  while (i < text.size()) {
    const char c = text[i];

    if (detail::is_space_char(c)) {
      std::size_t j = i;
      bool saw_newline = false;
      while (j < text.size() && detail::is_space_char(text[j])) {
        if (text[j] == '\n') saw_newline = true;
        ++j;
      }
      push(TokKind::whitespace, i, j);
      if (saw_newline) at_line_start = true;
      continue;
    }

    // Preprocessor directive: '#' first on its line, through end of line with
    // backslash continuations.
    if (c == '#' && at_line_start) {
      std::size_t j = i + 1;
      while (j < text.size() && text[j] != '\n') {
        if (text[j] == '\\') {
          if (j + 1 < text.size() && text[j + 1] == '\n') {
            j += 2;
            continue;
          }
          if (j + 2 < text.size() && text[j + 1] == '\r' && text[j + 2] == '\n') {
            j += 3;
            continue;
          }
        }
        ++j;
      }
      push(TokKind::preprocessor, i, j);
      continue;
    }

    if (c == '/' && i + 1 < text.size() && text[i + 1] == '/') {
      std::size_t j = i + 2;
      while (j < text.size() && text[j] != '\n') ++j;
      push(TokKind::comment, i, j);
      continue;
    }

    if (c == '/' && i + 1 < text.size() && text[i + 1] == '*') {
      std::size_t j = i + 2;
      bool closed = false;
      while (j + 1 < text.size()) {
        if (text[j] == '*' && text[j + 1] == '/') {
          j += 2;
          closed = true;
          break;
        }
        ++j;
      }
      if (!closed) {
        j = text.size();
        out.diagnostics.push_back({line, "unterminated block comment"});
      }
      push(TokKind::comment, i, j);
      continue;
    }

    // String/char literals, with optional encoding prefix and raw strings.
    {
      bool raw = false;
      std::size_t plen = 0;
      const bool has_prefix = detail::literal_prefix(text, i, raw, plen);
      const bool quote_here = c == '"' || c == '\'';
      if (has_prefix || quote_here) {
        const std::size_t qpos = i + plen;
        const char quote = text[qpos];
        if (raw) {
          // R"delim( ... )delim"
          std::size_t dstart = qpos + 1;
          std::size_t dend = dstart;
          while (dend < text.size() && text[dend] != '(' && dend - dstart < 16) ++dend;
          if (dend < text.size() && text[dend] == '(') {
            const std::string closer =
                ")" + std::string(text.substr(dstart, dend - dstart)) + "\"";
            const std::size_t close = text.find(closer, dend + 1);
            if (close != std::string_view::npos) {
              push(TokKind::string_literal, i, close + closer.size());
            } else {
              out.diagnostics.push_back({line, "unterminated raw string literal"});
              push(TokKind::string_literal, i, text.size());
            }
            continue;
          }
          // No '(' found: fall through and treat as ordinary tokens.
        } else {
          std::size_t j = qpos + 1;
          bool closed = false;
          while (j < text.size() && text[j] != '\n') {
            if (text[j] == '\\' && j + 1 < text.size()) {
              j += 2;
              continue;
            }
            if (text[j] == quote) {
              ++j;
              closed = true;
              break;
            }
            ++j;
          }
          if (!closed) {
            out.diagnostics.push_back(
                {line, quote == '"' ? "unterminated string literal"
                                    : "unterminated character literal"});
          }
          push(quote == '"' ? TokKind::string_literal : TokKind::char_literal, i, j);
          continue;
        }
      }
    }

    if (detail::is_ident_start(c)) {
      std::size_t j = i + 1;
      while (j < text.size() && detail::is_ident_char(text[j])) ++j;
      const std::string word(text.substr(i, j - i));
      push(detail::keyword_set().count(word) ? TokKind::keyword : TokKind::identifier,
           i, j);
      continue;
    }

    // pp-number: digits, or '.' followed by a digit; swallows suffixes,
    // exponents, hex, and digit separators.
    if (detail::is_digit(c) ||
        (c == '.' && i + 1 < text.size() && detail::is_digit(text[i + 1]))) {
      std::size_t j = i + 1;
      while (j < text.size()) {
        const char d = text[j];
        if (detail::is_ident_char(d) || d == '.') {
          if ((d == 'e' || d == 'E' || d == 'p' || d == 'P') && j + 1 < text.size() &&
              (text[j + 1] == '+' || text[j + 1] == '-')) {
            j += 2;
            continue;
          }
          ++j;
          continue;
        }
        if (d == '\'' && j + 1 < text.size() && detail::is_ident_char(text[j + 1])) {
          j += 2;
          continue;
        }
        break;
      }
      push(TokKind::number, i, j);
      continue;
    }

    // Multi-character punctuators, longest first; anything else is a
    // single-byte punctuator (including unknown bytes).
    {
      bool matched = false;
      for (const auto& p : detail::punctuators()) {
        if (text.compare(i, p.size(), p) == 0) {
          push(TokKind::punctuator, i, i + p.size());
          matched = true;
          break;
        }
      }
      if (!matched) push(TokKind::punctuator, i, i + 1);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization.
// ---------------------------------------------------------------------------

struct NormalizeOptions {
  std::string string_payload = "STR";   // every string literal becomes "STR"
  bool anonymize_char_literals = false; // off: char literals kept verbatim
  std::string char_payload = "C";
};

struct NormalizeResult {
  std::string text;
  std::map<std::string, std::string> name_map;  // original -> canonical
  Diagnostics diagnostics;
};

namespace detail {

inline bool is_sig(const SrcToken& t) {
  return t.kind != TokKind::whitespace && t.kind != TokKind::comment;
}

inline std::string pp_directive_name(const std::string& pp_text) {
  std::size_t i = 1;  // skip '#'
  while (i < pp_text.size() && (pp_text[i] == ' ' || pp_text[i] == '\t')) ++i;
  std::size_t j = i;
  while (j < pp_text.size() && is_ident_char(pp_text[j])) ++j;
  return pp_text.substr(i, j - i);
}

// Flatten to significant tokens: drop whitespace/comments, drop #include
// lines, and splice the remaining preprocessor directives back in as a '#'
// punctuator plus their re-lexed content.
inline std::vector<SrcToken> significant_stream(const std::vector<SrcToken>& tokens,
                                                Diagnostics& diags) {
  std::vector<SrcToken> sig;
  for (const auto& tok : tokens) {
    if (!is_sig(tok)) continue;
    if (tok.kind != TokKind::preprocessor) {
      sig.push_back(tok);
      continue;
    }
    const std::string directive = pp_directive_name(tok.text);
    if (directive == "include" || directive == "include_next" || directive == "import") {
      continue;
    }
    SrcToken hash;
    hash.kind = TokKind::punctuator;
    hash.text = "#";
    hash.line = tok.line;
    sig.push_back(hash);
    auto inner = lex_c(std::string_view(tok.text).substr(1));
    for (auto& d : inner.diagnostics) diags.push_back({tok.line, d.message});
    for (auto& t : inner.tokens) {
      if (!is_sig(t)) continue;
      if (t.kind == TokKind::preprocessor) {
        // Cannot recurse meaningfully; decompose into '#' + rest.
        auto deeper = lex_c(std::string_view(t.text).substr(1));
        SrcToken inner_hash{TokKind::punctuator, "#", tok.line};
        sig.push_back(inner_hash);
        for (auto& dt : deeper.tokens) {
          if (is_sig(dt)) {
            dt.line = tok.line;
            sig.push_back(dt);
          }
        }
        continue;
      }
      t.line = tok.line;
      sig.push_back(t);
    }
  }
  return sig;
}

// Map each '{' index to its matching '}' index; unmatched braces tolerated.
inline std::map<std::size_t, std::size_t> brace_matches(const std::vector<SrcToken>& sig) {
  std::map<std::size_t, std::size_t> match;
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < sig.size(); ++i) {
    if (sig[i].kind != TokKind::punctuator) continue;
    if (sig[i].text == "{") stack.push_back(i);
    if (sig[i].text == "}" && !stack.empty()) {
      match[stack.back()] = i;
      stack.pop_back();
    }
  }
  for (std::size_t open : stack) match[open] = sig.size();  // runaway brace
  return match;
}

struct FunctionDef {
  std::size_t name_index = 0;   // identifier token position
  std::size_t start_index = 0;  // first token of the definition (specifiers)
  std::size_t open_brace = 0;
  std::size_t close_brace = 0;  // may be sig.size() when unbalanced
  std::string name;
};

inline bool is_punct(const SrcToken& t, std::string_view s) {
  return t.kind == TokKind::punctuator && t.text == s;
}

inline bool is_kw(const SrcToken& t, std::string_view s) {
  return t.kind == TokKind::keyword && t.text == s;
}

// Token-level function definition scan: identifier '(' ... ')' [qualifiers]
// [ctor-initializer] '{'. Control flow never matches because its introducers
// are keywords, not identifiers.
inline std::vector<FunctionDef> find_definitions(const std::vector<SrcToken>& sig) {
  std::vector<FunctionDef> defs;
  const auto match = brace_matches(sig);
  for (std::size_t i = 0; i + 1 < sig.size(); ++i) {
    if (sig[i].kind != TokKind::identifier) continue;
    if (!is_punct(sig[i + 1], "(")) continue;

    // Find the matching ')'.
    std::size_t depth = 0;
    std::size_t k = i + 1;
    for (; k < sig.size(); ++k) {
      if (is_punct(sig[k], "(")) ++depth;
      if (is_punct(sig[k], ")")) {
        if (--depth == 0) break;
      }
    }
    if (k >= sig.size()) continue;

    // Skip trailing qualifiers that may sit between ')' and '{'.
    std::size_t m = k + 1;
    while (m < sig.size()) {
      const auto& t = sig[m];
      if (is_kw(t, "const") || is_kw(t, "noexcept") || is_kw(t, "volatile") ||
          (t.kind == TokKind::identifier && (t.text == "override" || t.text == "final"))) {
        ++m;
        continue;
      }
      if (is_kw(t, "throw") && m + 1 < sig.size() && is_punct(sig[m + 1], "(")) {
        std::size_t d2 = 0;
        std::size_t q = m + 1;
        for (; q < sig.size(); ++q) {
          if (is_punct(sig[q], "(")) ++d2;
          if (is_punct(sig[q], ")") && --d2 == 0) break;
        }
        m = q + 1;
        continue;
      }
      break;
    }
    // Constructor initializer list: ':' followed by member initializers
    // (identifier then '(' or '{'), up to the body brace. The shape check
    // keeps case labels such as `case F(1): {` from matching.
    if (m + 2 < sig.size() && is_punct(sig[m], ":") &&
        !is_punct(sig[m + 1], ":") && sig[m + 1].kind == TokKind::identifier &&
        (is_punct(sig[m + 2], "(") || is_punct(sig[m + 2], "{"))) {
      std::size_t d2 = 0;
      std::size_t q = m + 1;
      for (; q < sig.size(); ++q) {
        if (is_punct(sig[q], "(") || is_punct(sig[q], "[")) ++d2;
        if (is_punct(sig[q], ")") || is_punct(sig[q], "]")) --d2;
        if (is_punct(sig[q], "{")) {
          // A brace right after an identifier is a member brace-init; one in
          // any other position at depth zero opens the body.
          if (q > 0 && sig[q - 1].kind == TokKind::identifier) {
            ++d2;
          } else if (d2 == 0) {
            break;
          } else {
            ++d2;
          }
        }
        if (is_punct(sig[q], "}") && d2 > 0) --d2;
        if (d2 == 0 && is_punct(sig[q], ";")) {
          q = sig.size();
          break;
        }
      }
      m = q;
    }
    if (m >= sig.size() || !is_punct(sig[m], "{")) continue;

    FunctionDef def;
    def.name_index = i;
    def.name = sig[i].text;
    def.open_brace = m;
    auto it = match.find(m);
    def.close_brace = it == match.end() ? sig.size() : it->second;

    // Back up over the declaration specifiers (return type, storage class,
    // template header fragments).
    std::size_t start = i;
    while (start > 0) {
      const auto& t = sig[start - 1];
      const bool spec =
          t.kind == TokKind::identifier || t.kind == TokKind::keyword ||
          is_punct(t, "*") || is_punct(t, "&") || is_punct(t, "::") ||
          is_punct(t, "<") || is_punct(t, ">");
      if (!spec) break;
      --start;
    }
    def.start_index = start;
    defs.push_back(def);

    i = m;  // resume after the body opens; nested definitions are not a thing
  }
  return defs;
}

inline void erase_marked(std::vector<SrcToken>& sig, const std::vector<bool>& kill) {
  std::vector<SrcToken> kept;
  kept.reserve(sig.size());
  for (std::size_t i = 0; i < sig.size(); ++i) {
    if (!kill[i]) kept.push_back(std::move(sig[i]));
  }
  sig = std::move(kept);
}

// Remove `using namespace ...;` statements and namespace wrapper syntax
// (braces and header), keeping wrapper bodies. Namespace aliases are left
// alone.
inline void remove_namespace_syntax(std::vector<SrcToken>& sig) {
  std::vector<bool> kill(sig.size(), false);
  const auto match = brace_matches(sig);
  for (std::size_t i = 0; i < sig.size(); ++i) {
    if (!is_kw(sig[i], "using")) continue;
    if (i + 1 < sig.size() && is_kw(sig[i + 1], "namespace")) {
      std::size_t j = i;
      while (j < sig.size() && !is_punct(sig[j], ";")) kill[j] = true, ++j;
      if (j < sig.size()) kill[j] = true;
      i = j;
    }
  }
  for (std::size_t i = 0; i < sig.size(); ++i) {
    if (!is_kw(sig[i], "namespace") || kill[i]) continue;
    if (i > 0 && is_kw(sig[i - 1], "using")) continue;
    std::size_t j = i + 1;
    while (j < sig.size() &&
           (sig[j].kind == TokKind::identifier || is_punct(sig[j], "::"))) {
      ++j;
    }
    if (j >= sig.size() || !is_punct(sig[j], "{")) continue;  // alias or ill-formed
    std::size_t begin = i;
    if (i > 0 && is_kw(sig[i - 1], "inline")) begin = i - 1;
    for (std::size_t k = begin; k <= j; ++k) kill[k] = true;
    auto it = match.find(j);
    if (it != match.end() && it->second < sig.size()) kill[it->second] = true;
  }
  erase_marked(sig, kill);
}

// Remove every definition of `main`, including its specifiers and body.
inline void remove_main_definitions(std::vector<SrcToken>& sig, Diagnostics& diags) {
  for (;;) {
    const auto defs = find_definitions(sig);
    const FunctionDef* main_def = nullptr;
    for (const auto& d : defs) {
      if (d.name == "main") {
        main_def = &d;
        break;
      }
    }
    if (!main_def) break;
    std::vector<bool> kill(sig.size(), false);
    const std::size_t last = std::min(main_def->close_brace, sig.size() - 1);
    for (std::size_t k = main_def->start_index; k <= last; ++k) kill[k] = true;
    erase_marked(sig, kill);
  }
  for (const auto& t : sig) {
    if (t.kind == TokKind::identifier && t.text == "main") {
      diags.push_back({t.line, "reference to main retained"});
    }
  }
}

inline bool is_canonical_name(std::string_view s) {
  if (s.size() < 6 || s.substr(0, 5) != "funct") return false;
  for (char c : s.substr(5)) {
    if (!is_digit(c)) return false;
  }
  return true;
}

// Rename defined functions to funct0, funct1, ... in definition order.
// `existing` seeds the mapping (so two views of one sample stay consistent);
// identifiers that collide with a name about to be assigned to a different
// function are alpha-renamed first.
inline std::map<std::string, std::string> rename_functions(
    std::vector<SrcToken>& sig, const std::map<std::string, std::string>& existing,
    Diagnostics& diags) {
  const auto defs = find_definitions(sig);

  std::vector<std::string> order;
  std::set<std::string> seen;
  for (const auto& d : defs) {
    if (d.name == "main") continue;
    if (seen.insert(d.name).second) order.push_back(d.name);
  }

  std::map<std::string, std::string> mapping = existing;
  std::size_t next = 0;
  for (const auto& [from, to] : existing) {
    if (is_canonical_name(to)) {
      const std::size_t idx = static_cast<std::size_t>(std::stoul(to.substr(5)));
      next = std::max(next, idx + 1);
    }
  }
  for (const auto& name : order) {
    if (mapping.count(name)) continue;
    mapping[name] = "funct" + std::to_string(next++);
  }

  // Collision pass: an identifier that already looks like an assigned
  // canonical name, but is not the function receiving it, gets underscores
  // appended until it is out of the way.
  std::set<std::string> assigned;
  for (const auto& [from, to] : mapping) assigned.insert(to);
  std::set<std::string> all_idents;
  for (const auto& t : sig) {
    if (t.kind == TokKind::identifier) all_idents.insert(t.text);
  }
  std::map<std::string, std::string> collisions;
  for (const auto& ident : all_idents) {
    if (!assigned.count(ident)) continue;
    auto it = mapping.find(ident);
    if (it != mapping.end() && it->second == ident) continue;  // already canonical
    if (it != mapping.end()) continue;  // being renamed anyway
    std::string fresh = ident + "_";
    while (assigned.count(fresh) || all_idents.count(fresh)) fresh += "_";
    collisions[ident] = fresh;
    diags.push_back({0, "identifier " + ident + " renamed to " + fresh +
                            " to free a canonical name"});
  }

  for (auto& t : sig) {
    if (t.kind != TokKind::identifier) continue;
    auto cit = collisions.find(t.text);
    if (cit != collisions.end()) {
      t.text = cit->second;
      continue;
    }
    auto mit = mapping.find(t.text);
    if (mit != mapping.end()) t.text = mit->second;
  }

  // Report only the names that actually occur, keeping the audit map tight.
  std::map<std::string, std::string> used;
  for (const auto& name : order) used[name] = mapping[name];
  for (const auto& [from, to] : collisions) used[from] = to;
  return used;
}

inline std::string join_tokens(const std::vector<SrcToken>& sig) {
  std::string out;
  for (const auto& t : sig) {
    if (!out.empty()) out += ' ';
    out += t.text;
  }
  return out;
}

}  // namespace detail

// Full pipeline: comments and includes dropped, string payloads masked,
// namespace syntax and `main` removed, functions renamed, single-space
// separated output.
inline NormalizeResult normalize_source(const std::string& text,
                                        const NormalizeOptions& options = {}) {
  NormalizeResult result;
  auto lexed = lex_c(text);
  result.diagnostics = std::move(lexed.diagnostics);

  auto sig = detail::significant_stream(lexed.tokens, result.diagnostics);
  detail::remove_namespace_syntax(sig);
  detail::remove_main_definitions(sig, result.diagnostics);

  for (auto& t : sig) {
    if (t.kind == TokKind::string_literal) {
      t.text = "\"" + options.string_payload + "\"";
    } else if (t.kind == TokKind::char_literal && options.anonymize_char_literals) {
      t.text = "'" + options.char_payload + "'";
    }
  }

  result.name_map = detail::rename_functions(sig, {}, result.diagnostics);
  if (detail::find_definitions(sig).empty()) {
    throw NoFunctionsLeft("normalize_source: no function definitions remain");
  }
  result.text = detail::join_tokens(sig);
  return result;
}

inline std::string normalize_source_text(const std::string& text,
                                         const NormalizeOptions& options = {}) {
  return normalize_source(text, options).text;
}

struct CanonicalizeResult {
  std::string text;
  std::map<std::string, std::string> name_map;
};

// Stand-alone renaming pass that preserves the original spacing; used when
// one side of a sample has already fixed part of the name order.
inline CanonicalizeResult canonicalize_src_names(
    const std::string& text,
    const std::map<std::string, std::string>& existing = {}) {
  auto lexed = lex_c(text);
  Diagnostics diags;
  CanonicalizeResult result;

  // Run the rename over significant tokens, then mirror the text changes
  // back onto the lossless stream so spacing and comments survive.
  std::vector<SrcToken> sig;
  std::vector<std::size_t> origin;
  for (std::size_t i = 0; i < lexed.tokens.size(); ++i) {
    if (detail::is_sig(lexed.tokens[i])) {
      sig.push_back(lexed.tokens[i]);
      origin.push_back(i);
    }
  }
  result.name_map = detail::rename_functions(sig, existing, diags);
  for (std::size_t i = 0; i < sig.size(); ++i) {
    lexed.tokens[origin[i]].text = sig[i].text;
  }
  std::string out;
  for (const auto& t : lexed.tokens) out += t.text;
  result.text = std::move(out);
  return result;
}

}  // namespace bindecomp::srcprep
