#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "bindecomp/common.hpp"

namespace bindecomp::asmprep {

struct AsmInstruction {
  std::string address;   // hex offset as printed, no colon
  std::string bytes;     // raw byte column text, trimmed
  std::string mnemonic;
  std::string operands;  // possibly empty, annotation comments stripped
};

struct AsmFunction {
  std::string symbol;
  std::string canonical;  // assigned later; funct<N>
  std::vector<AsmInstruction> instructions;
};

struct AsmDocument {
  std::string format;  // e.g. "elf64-x86-64"
  std::vector<std::pair<std::string, std::vector<AsmFunction>>> sections;
  Diagnostics diagnostics;
  std::size_t instruction_lines = 0;  // lines parsed into an instruction

  const std::vector<AsmFunction>* find_section(std::string_view name) const {
    for (const auto& [sec, funcs] : sections) {
      if (sec == name) return &funcs;
    }
    return nullptr;
  }
};

namespace detail {

inline bool is_hex_digit(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
}

inline bool all_hex(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!is_hex_digit(c)) return false;
  }
  return true;
}

inline bool is_byte_pair(std::string_view s) { return s.size() == 2 && all_hex(s); }

// `   1000:` -> `1000`; empty when the line is not address-led.
inline std::string leading_address(std::string_view field) {
  std::string_view t = field;
  while (!t.empty() && (t.front() == ' ' || t.front() == '\t')) t.remove_prefix(1);
  while (!t.empty() && (t.back() == ' ' || t.back() == '\t')) t.remove_suffix(1);
  if (t.size() < 2 || t.back() != ':') return "";
  t.remove_suffix(1);
  return all_hex(t) ? std::string(t) : "";
}

inline void split_mnemonic(std::string_view text, AsmInstruction& ins) {
  // Drop the disassembler's `# ...` annotation; it repeats resolved
  // addresses that must not reach the token stream.
  const std::size_t hash = text.find('#');
  if (hash != std::string_view::npos) text = text.substr(0, hash);
  const auto words = split_whitespace(text);
  if (words.empty()) return;
  ins.mnemonic = words[0];
  std::string rest;
  for (std::size_t i = 1; i < words.size(); ++i) {
    if (i > 1) rest += ' ';
    rest += words[i];
  }
  ins.operands = rest;
}

}  // namespace detail

// Parse a `-d`-style disassembly listing. Never throws on malformed lines;
// they land in diagnostics. Throws NotADisassembly when no section header is
// present at all.
inline AsmDocument parse_objdump(std::string_view text) {
  AsmDocument doc;
  std::vector<AsmFunction>* section = nullptr;
  AsmFunction* current = nullptr;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    const std::string trimmed{trim(line)};
    if (trimmed.empty()) continue;

    // `foo:  file format elf64-x86-64`
    if (const std::size_t ff = trimmed.find("file format ");
        ff != std::string::npos && doc.format.empty()) {
      doc.format = trim(trimmed.substr(ff + 12));
      continue;
    }

    // `Disassembly of section .text:`
    if (trimmed.rfind("Disassembly of section ", 0) == 0) {
      std::string name = trimmed.substr(23);
      if (!name.empty() && name.back() == ':') name.pop_back();
      section = nullptr;
      for (auto& [sec, funcs] : doc.sections) {
        if (sec == name) section = &funcs;
      }
      if (!section) {
        doc.sections.emplace_back(name, std::vector<AsmFunction>{});
        section = &doc.sections.back().second;
      }
      current = nullptr;
      continue;
    }

    // `0000000000001129 <main>:`
    if (trimmed.size() > 3 && trimmed.back() == ':' && trimmed.find('<') != std::string::npos) {
      const std::size_t lt = trimmed.find('<');
      const std::size_t gt = trimmed.rfind(">:");
      const std::string addr{trim(trimmed.substr(0, lt))};
      if (gt != std::string::npos && gt > lt && detail::all_hex(addr)) {
        if (!section) {
          doc.diagnostics.push_back({line_no, "symbol outside any section: " + trimmed});
          continue;
        }
        AsmFunction fn;
        fn.symbol = trimmed.substr(lt + 1, gt - lt - 1);
        section->push_back(std::move(fn));
        current = &section->back();
        continue;
      }
    }

    // Instruction or byte-continuation line. The reference layout is
    // tab-separated: `  addr:\tbytes \tmnemonic operands`; a space-only
    // variant is tolerated.
    {
      std::vector<std::string> fields;
      std::size_t start = 0;
      const std::string raw(line);
      while (true) {
        const std::size_t tab = raw.find('\t', start);
        if (tab == std::string::npos) {
          fields.push_back(raw.substr(start));
          break;
        }
        fields.push_back(raw.substr(start, tab - start));
        start = tab + 1;
      }

      std::string address = detail::leading_address(fields[0]);
      std::string space_rest;
      if (address.empty() && fields.size() == 1) {
        // Space layout: `    1000: f3 0f 1e fa endbr64 ...`. The first word
        // must still be a colon-terminated hex offset.
        const std::size_t colon = raw.find(':');
        if (colon != std::string::npos) {
          const std::string head{trim(raw.substr(0, colon))};
          if (detail::all_hex(head)) {
            address = head;
            space_rest = raw.substr(colon + 1);
          }
        }
      }
      if (!address.empty()) {
        AsmInstruction ins;
        ins.address = address;
        if (fields.size() >= 2) {
          // Tab layout: field 1 is the byte column, field 2 the mnemonic.
          ins.bytes = trim(fields[1]);
          if (fields.size() >= 3) detail::split_mnemonic(fields[2], ins);
        } else {
          // Space layout: consume byte pairs, then mnemonic and operands.
          const auto words = split_whitespace(space_rest);
          std::size_t w = 0;
          std::string bytes;
          while (w < words.size() && detail::is_byte_pair(words[w])) {
            if (!bytes.empty()) bytes += ' ';
            bytes += words[w++];
          }
          ins.bytes = bytes;
          if (w < words.size()) {
            std::string rest;
            for (std::size_t k = w; k < words.size(); ++k) {
              if (k > w) rest += ' ';
              rest += words[k];
            }
            detail::split_mnemonic(rest, ins);
          }
        }

        if (!current) {
          doc.diagnostics.push_back({line_no, "instruction outside any function"});
          continue;
        }
        if (ins.mnemonic.empty()) {
          // Byte continuation of the previous instruction.
          if (!current->instructions.empty() && !ins.bytes.empty()) {
            auto& prev = current->instructions.back();
            if (!prev.bytes.empty()) prev.bytes += ' ';
            prev.bytes += ins.bytes;
          }
          continue;
        }
        current->instructions.push_back(std::move(ins));
        ++doc.instruction_lines;
        continue;
      }
    }

    if (trimmed == "...") {
      doc.diagnostics.push_back({line_no, "elided bytes marker"});
      continue;
    }
    doc.diagnostics.push_back({line_no, "unparseable line: " + trimmed});
  }

  if (doc.sections.empty()) {
    throw NotADisassembly("parse_objdump: no 'Disassembly of section' header found");
  }

  // Functions with no instructions carry no signal; drop with a note.
  for (auto& [sec, funcs] : doc.sections) {
    std::vector<AsmFunction> kept;
    for (auto& fn : funcs) {
      if (fn.instructions.empty()) {
        doc.diagnostics.push_back({0, "empty function dropped: " + fn.symbol});
      } else {
        kept.push_back(std::move(fn));
      }
    }
    funcs = std::move(kept);
  }
  return doc;
}

inline std::vector<AsmFunction> extract_text_section(const AsmDocument& doc) {
  const auto* funcs = doc.find_section(".text");
  if (!funcs) throw MissingTextSection("extract_text_section: no .text section");
  return *funcs;
}

// ---------------------------------------------------------------------------
// Pruning.
// ---------------------------------------------------------------------------

struct PrunePolicy {
  std::set<std::string> deny_exact = {
      "main",           "_start",
      "_init",          "_fini",
      "frame_dummy",    "register_tm_clones",
      "deregister_tm_clones", "__do_global_dtors_aux",
  };
  std::vector<std::string> deny_prefixes = {"__libc_csu_"};
  std::vector<std::string> deny_substrings = {"@plt", ".cold", ".part"};

  bool denies(const std::string& symbol) const {
    if (deny_exact.count(symbol)) return true;
    for (const auto& p : deny_prefixes) {
      if (symbol.rfind(p, 0) == 0) return true;
    }
    for (const auto& s : deny_substrings) {
      if (symbol.find(s) != std::string::npos) return true;
    }
    return false;
  }
};

inline std::vector<AsmFunction> prune_functions(const std::vector<AsmFunction>& funcs,
                                                const PrunePolicy& policy = {}) {
  std::vector<AsmFunction> kept;
  for (const auto& fn : funcs) {
    if (!policy.denies(fn.symbol)) kept.push_back(fn);
  }
  if (kept.empty()) throw NothingLeft("prune_functions: every function was pruned");
  return kept;
}

// ---------------------------------------------------------------------------
// Canonicalization to the normalized token stream.
// ---------------------------------------------------------------------------

struct CanonicalAsm {
  std::string text;
  std::map<std::string, std::string> name_map;  // symbol -> funct<N>
  Diagnostics diagnostics;
};

namespace detail {

// `printf@plt` / `memset@GLIBC_2.2.5` / `foo@Base` -> plain symbol.
inline std::string strip_symbol_version(const std::string& symbol) {
  const std::size_t at = symbol.find('@');
  return at == std::string::npos ? symbol : symbol.substr(0, at);
}

struct TargetRef {
  std::string address;  // bare hex, may be empty for plain <sym> refs
  std::string symbol;   // may be empty for bare targets
  std::string offset;   // `0x...` tail of <sym+0x...>, empty when absent
};

// Matches `1149 <goodG2B>`, `116c <main+0x43>`, `1050 <puts@plt>`, `1180`.
inline std::optional<TargetRef> parse_target(const std::string& operands) {
  if (operands.empty()) return std::nullopt;
  const auto words = split_whitespace(operands);
  TargetRef ref;
  std::size_t sym_word = 0;
  if (words.size() == 1 && all_hex(words[0])) {
    ref.address = words[0];
    return ref;
  }
  if (words.size() == 2 && all_hex(words[0])) {
    ref.address = words[0];
    sym_word = 1;
  } else if (words.size() == 1) {
    sym_word = 0;
  } else {
    return std::nullopt;
  }
  const std::string& w = words[sym_word];
  if (w.size() < 3 || w.front() != '<' || w.back() != '>') return std::nullopt;
  std::string inner = w.substr(1, w.size() - 2);
  const std::size_t plus = inner.rfind('+');
  if (plus != std::string::npos && plus + 1 < inner.size() &&
      inner.compare(plus + 1, 2, "0x") == 0) {
    ref.offset = inner.substr(plus + 1);
    inner = inner.substr(0, plus);
  }
  ref.symbol = inner;
  return ref;
}

inline void append_token(std::string& out, std::string_view tok) {
  if (!out.empty()) out += ' ';
  out += tok;
}

// Operand tokenization: split on whitespace and depth-zero commas, emitting
// commas as their own tokens so memory operands stay intact.
inline void append_operand_tokens(std::string& out, const std::string& operands) {
  std::string cur;
  int depth = 0;
  auto flush = [&] {
    if (!cur.empty()) {
      append_token(out, cur);
      cur.clear();
    }
  };
  for (char c : operands) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ' ' || c == '\t') {
      flush();
      continue;
    }
    if (c == ',' && depth <= 0) {
      flush();
      append_token(out, ",");
      continue;
    }
    cur += c;
  }
  flush();
}

}  // namespace detail

// Renames functions funct0.. in order, rewrites call/jump targets, inserts
// `.L<k>:` labels for intra-function jump targets, drops address and byte
// columns, and joins everything into one `<func>`-separated token stream.
inline CanonicalAsm canonicalize_asm(const std::vector<AsmFunction>& funcs) {
  CanonicalAsm out;
  std::size_t next = 0;
  for (const auto& fn : funcs) {
    if (!out.name_map.count(fn.symbol)) {
      out.name_map[fn.symbol] = "funct" + std::to_string(next++);
    }
  }

  bool first = true;
  for (const auto& fn : funcs) {
    if (!first) detail::append_token(out.text, "<func>");
    first = false;
    detail::append_token(out.text, out.name_map.at(fn.symbol) + ":");

    // Instruction index per address, for local label resolution.
    std::map<std::string, std::size_t> addr_index;
    for (std::size_t i = 0; i < fn.instructions.size(); ++i) {
      if (!fn.instructions[i].address.empty()) {
        addr_index[fn.instructions[i].address] = i;
      }
    }

    // First pass: which instructions are local jump targets?
    std::map<std::size_t, std::string> labels;  // instruction index -> .L<k>
    std::set<std::size_t> target_indices;
    for (const auto& ins : fn.instructions) {
      const auto ref = detail::parse_target(ins.operands);
      if (!ref || ref->address.empty()) continue;
      const bool intra =
          (ref->symbol == fn.symbol && !ref->offset.empty()) || ref->symbol.empty();
      if (intra) {
        const auto it = addr_index.find(ref->address);
        if (it != addr_index.end()) target_indices.insert(it->second);
      }
    }
    std::size_t label_counter = 0;
    for (std::size_t idx : target_indices) {
      labels[idx] = ".L" + std::to_string(label_counter++);
    }

    for (std::size_t i = 0; i < fn.instructions.size(); ++i) {
      const auto& ins = fn.instructions[i];
      const auto lit = labels.find(i);
      if (lit != labels.end()) detail::append_token(out.text, lit->second + ":");
      detail::append_token(out.text, ins.mnemonic);

      const auto ref = detail::parse_target(ins.operands);
      if (!ref) {
        detail::append_operand_tokens(out.text, ins.operands);
        continue;
      }

      // Own-body target: emit the local label.
      if (!ref->address.empty()) {
        const bool intra =
            (ref->symbol == fn.symbol && !ref->offset.empty()) || ref->symbol.empty();
        if (intra) {
          const auto it = addr_index.find(ref->address);
          if (it != addr_index.end()) {
            detail::append_token(out.text, labels.at(it->second));
            continue;
          }
          if (ref->symbol.empty()) {
            // Bare target that resolves nowhere we know; keep the value but
            // never as a bare hex token.
            detail::append_token(out.text, "0x" + ref->address);
            out.diagnostics.push_back({0, "unresolved jump target 0x" + ref->address +
                                              " in " + fn.symbol});
            continue;
          }
        }
      }

      if (!ref->symbol.empty()) {
        const auto mapped = out.name_map.find(ref->symbol);
        if (mapped != out.name_map.end()) {
          detail::append_token(out.text, mapped->second);
          if (!ref->offset.empty()) {
            out.diagnostics.push_back(
                {0, "offset into " + ref->symbol + " dropped in " + fn.symbol});
          }
        } else {
          const std::string clean = detail::strip_symbol_version(ref->symbol);
          detail::append_token(out.text, clean);
          out.diagnostics.push_back({0, "external symbol retained: " + clean});
        }
        continue;
      }

      detail::append_operand_tokens(out.text, ins.operands);
    }
  }
  return out;
}

// Re-run canonicalization over an already-normalized token stream: function
// header tokens are renamed funct0.. in order of appearance, references
// follow, and `.L<k>:` labels are renumbered per function. Canonical input
// is a fixed point.
inline CanonicalAsm recanonicalize(const std::string& text) {
  const auto tokens = split_whitespace(text);

  // Chunk boundaries and header discovery.
  auto is_header = [](const std::string& tok) {
    if (tok.size() < 2 || tok.back() != ':') return false;
    const std::string name = tok.substr(0, tok.size() - 1);
    if (name.empty() || name[0] == '.') return false;
    for (char c : name) {
      if (!(detail::is_hex_digit(c) || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
            (c >= '0' && c <= '9') || c == '_' || c == '@' || c == '.')) {
        return false;
      }
    }
    return true;
  };
  auto is_local_label = [](const std::string& tok) {
    return tok.size() > 3 && tok.rfind(".L", 0) == 0 && tok.back() == ':';
  };

  CanonicalAsm out;
  std::size_t next = 0;
  for (const auto& tok : tokens) {
    if (is_header(tok)) {
      const std::string name = tok.substr(0, tok.size() - 1);
      if (!out.name_map.count(name)) {
        out.name_map[name] = "funct" + std::to_string(next++);
      }
    }
  }

  // Work chunk by chunk so label renumbering restarts per function and
  // forward references resolve.
  std::vector<std::vector<std::string>> chunks(1);
  for (const auto& tok : tokens) {
    if (tok == "<func>") {
      chunks.emplace_back();
    } else {
      chunks.back().push_back(tok);
    }
  }

  bool first_chunk = true;
  for (const auto& chunk : chunks) {
    if (!first_chunk) detail::append_token(out.text, "<func>");
    first_chunk = false;

    std::map<std::string, std::string> label_map;
    std::size_t label_counter = 0;
    for (const auto& tok : chunk) {
      if (is_local_label(tok)) {
        const std::string name = tok.substr(0, tok.size() - 1);
        if (!label_map.count(name)) {
          label_map[name] = ".L" + std::to_string(label_counter++);
        }
      }
    }

    for (const auto& tok : chunk) {
      if (is_header(tok)) {
        detail::append_token(out.text,
                             out.name_map.at(tok.substr(0, tok.size() - 1)) + ":");
        continue;
      }
      if (is_local_label(tok)) {
        detail::append_token(out.text, label_map.at(tok.substr(0, tok.size() - 1)) + ":");
        continue;
      }
      auto mapped = out.name_map.find(tok);
      if (mapped != out.name_map.end()) {
        detail::append_token(out.text, mapped->second);
        continue;
      }
      auto lmapped = label_map.find(tok);
      if (lmapped != label_map.end()) {
        detail::append_token(out.text, lmapped->second);
        continue;
      }
      detail::append_token(out.text, tok);
    }
  }
  return out;
}

// Full pipeline for one raw objdump listing: parse, keep the .text section,
// drop runtime scaffolding, canonicalize. Parser diagnostics are prepended to
// the canonicalizer's own.
inline CanonicalAsm normalize_listing(std::string_view objdump_text,
                                      const PrunePolicy& policy = {}) {
  const AsmDocument doc = parse_objdump(objdump_text);
  const auto funcs = prune_functions(extract_text_section(doc), policy);
  CanonicalAsm out = canonicalize_asm(funcs);
  out.diagnostics.insert(out.diagnostics.begin(), doc.diagnostics.begin(),
                         doc.diagnostics.end());
  return out;
}

}  // namespace bindecomp::asmprep
