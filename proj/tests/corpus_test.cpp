#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bindecomp/common.hpp"
#include "bindecomp/corpus.hpp"
#include "support/reference_split.hpp"

using namespace bindecomp;
using namespace bindecomp::corpus;

namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = fs::path(BINDECOMP_FIXTURES_DIR);

// Scratch directory that cleans up after itself.
struct TempTree {
  fs::path root;
  TempTree() {
    root = fs::temp_directory_path() /
           ("bindecomp_test_" + std::to_string(std::rand()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this) & 0xffff));
    fs::create_directories(root);
  }
  ~TempTree() { fs::remove_all(root); }
  void put(const std::string& rel, const std::string& content) {
    const fs::path p = root / rel;
    fs::create_directories(p.parent_path());
    write_file(p.string(), content);
  }
};

Corpus tiny_corpus(const std::vector<std::pair<int, Variant>>& specs) {
  Corpus c;
  int k = 0;
  for (const auto& [cwe, variant] : specs) {
    FunctionPair p;
    p.id = "CWE" + std::to_string(cwe) + "_case_" + std::to_string(k++) + "." +
           to_string(variant);
    p.cwe.value = cwe;
    p.variant = variant;
    p.asm_raw = "funct0: ret";
    p.src_raw = "void funct0 ( ) { }";
    c.pairs.push_back(std::move(p));
  }
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Label parsing.
// ---------------------------------------------------------------------------

TEST_CASE("case labels come from the filename", "[corpus]") {
  const auto a = parse_case_label("CWE190_Integer_Overflow__int_fgets_add_01.bad.c");
  CHECK(a.cwe.value == 190);
  CHECK(a.variant == Variant::bad);

  const auto b = parse_case_label("CWE78_OS_Command_Injection__char_console_execl_02.good.c");
  CHECK(b.cwe.value == 78);
  CHECK(b.variant == Variant::good);

  CHECK_THROWS_AS(parse_case_label("main_helper.c"), MalformedName);
  CHECK_THROWS_AS(parse_case_label("CWEfoo_bar.bad.c"), MalformedName);
  CHECK_THROWS_AS(parse_case_label("CWE0_zero.bad.c"), MalformedName);
}

TEST_CASE("the first CWE number in the name wins", "[corpus]") {
  const auto label = parse_case_label("CWE121_CWE129_fgets_01.bad.c");
  CHECK(label.cwe.value == 121);
}

TEST_CASE("variant markers must match exactly once", "[corpus]") {
  CHECK_THROWS_AS(parse_case_label("CWE190_plain_01.c"), AmbiguousVariant);
  CHECK_THROWS_AS(parse_case_label("CWE190_x.good.bad.c"), AmbiguousVariant);

  VariantMarkers markers;
  markers.good = "_GOOD";
  markers.bad = "_BAD";
  const auto label = parse_case_label("CWE416_use_after_free_BAD.c", markers);
  CHECK(label.cwe.value == 416);
  CHECK(label.variant == Variant::bad);
}

// ---------------------------------------------------------------------------
// Guarded-source filtering.
// ---------------------------------------------------------------------------

TEST_CASE("guard filtering keeps exactly one variant", "[corpus]") {
  const std::string guarded =
      "#include <stdio.h>\n"
      "\n"
      "#ifndef OMITBAD\n"
      "void f_bad() { }\n"
      "#endif /* OMITBAD */\n"
      "\n"
      "#ifndef OMITGOOD\n"
      "void f_good() { }\n"
      "#endif /* OMITGOOD */\n"
      "\n"
      "#ifdef INCLUDEMAIN\n"
      "int main() {\n"
      "#ifndef OMITGOOD\n"
      "    f_good();\n"
      "#endif\n"
      "#ifndef OMITBAD\n"
      "    f_bad();\n"
      "#endif\n"
      "    return 0;\n"
      "}\n"
      "#endif\n";

  const std::string bad = filter_variant_source(guarded, Variant::bad);
  CHECK(bad.find("f_bad") != std::string::npos);
  CHECK(bad.find("f_good") == std::string::npos);
  CHECK(bad.find("OMITBAD") == std::string::npos);
  CHECK(bad.find("int main") != std::string::npos);

  const std::string good = filter_variant_source(guarded, Variant::good);
  CHECK(good.find("f_good") != std::string::npos);
  CHECK(good.find("f_bad") == std::string::npos);
}

TEST_CASE("foreign preprocessor conditionals pass through", "[corpus]") {
  const std::string text =
      "#ifdef _WIN32\n"
      "#define SEP '\\\\'\n"
      "#else\n"
      "#define SEP '/'\n"
      "#endif\n"
      "#ifndef OMITBAD\n"
      "void f() { }\n"
      "#endif\n";
  const std::string bad = filter_variant_source(text, Variant::bad);
  CHECK(bad.find("_WIN32") != std::string::npos);
  CHECK(bad.find("#else") != std::string::npos);
  CHECK(bad.find("void f") != std::string::npos);
}

TEST_CASE("guard filtering matches the committed corpus views", "[corpus]") {
  std::size_t checked = 0;
  for (const auto& entry : fs::directory_iterator(kFixtures / "cases")) {
    const auto ext = entry.path().extension().string();
    if (ext != ".c" && ext != ".cpp") continue;
    const std::string guarded = read_file(entry.path().string());
    const std::string stem = entry.path().stem().string();
    for (Variant v : {Variant::bad, Variant::good}) {
      const fs::path view =
          kFixtures / "corpus" / (stem + "." + to_string(v) + ext);
      INFO(view.string());
      REQUIRE(fs::exists(view));
      CHECK(filter_variant_source(guarded, v) == read_file(view.string()));
      ++checked;
    }
  }
  CHECK(checked == 32);
}

// ---------------------------------------------------------------------------
// Ingestion.
// ---------------------------------------------------------------------------

TEST_CASE("ingestion pairs files by stem and labels them", "[corpus]") {
  const Corpus c = ingest_pairs((kFixtures / "corpus").string());
  CHECK(c.pairs.size() == 32);
  CHECK(c.warnings.empty());
  CHECK(c.provenance.at("root") == (kFixtures / "corpus").string());

  std::size_t good = 0, bad = 0;
  std::set<std::string> ids;
  std::string prev;
  for (const auto& p : c.pairs) {
    CHECK(!p.asm_raw.empty());
    CHECK(!p.src_raw.empty());
    CHECK(p.asm_raw.find("Disassembly of section") != std::string::npos);
    CHECK(ids.insert(p.id).second);
    CHECK(prev < p.id);  // sorted, hence deterministic
    prev = p.id;
    (p.variant == Variant::good ? good : bad)++;
  }
  CHECK(good == 16);
  CHECK(bad == 16);

  const auto& first = c.pairs.front();
  CHECK(first.id == "CWE121_Stack_Based_Buffer_Overflow__char_memcpy_01.bad");
  CHECK(first.cwe.value == 121);
  CHECK(first.variant == Variant::bad);
  CHECK(!first.asm_norm.has_value());
}

TEST_CASE("orphan files become warnings", "[corpus]") {
  TempTree tree;
  tree.put("CWE190_a_01.bad.asm", "Disassembly of section .text:\n");
  tree.put("CWE190_a_01.bad.c", "void f() { }\n");
  tree.put("CWE190_b_01.good.asm", "Disassembly of section .text:\n");  // no source
  tree.put("CWE78_c_01.good.c", "void g() { }\n");                      // no assembly

  const Corpus c = ingest_pairs(tree.root.string());
  CHECK(c.pairs.size() == 1);
  REQUIRE(c.warnings.size() == 2);
  CHECK(c.warnings[0].message.find("unmatched assembly") != std::string::npos);
  CHECK(c.warnings[1].message.find("unmatched source") != std::string::npos);
}

TEST_CASE("empty and colliding trees raise", "[corpus]") {
  TempTree tree;
  CHECK_THROWS_AS(ingest_pairs(tree.root.string()), EmptyCorpus);

  tree.put("notes.txt", "not code\n");
  CHECK_THROWS_AS(ingest_pairs(tree.root.string()), EmptyCorpus);

  tree.put("CWE190_a_01.bad.asm", "x\n");
  tree.put("CWE190_a_01.bad.c", "y\n");
  tree.put("sub/CWE190_a_01.bad.s", "z\n");  // same stem, second asm file
  CHECK_THROWS_AS(ingest_pairs(tree.root.string()), DuplicateId);
}

TEST_CASE("a manifest restricts ingestion to listed ids", "[corpus]") {
  TempTree tree;
  tree.put("CWE190_a_01.bad.asm", "x\n");
  tree.put("CWE190_a_01.bad.c", "y\n");
  tree.put("CWE190_a_01.good.asm", "x\n");
  tree.put("CWE190_a_01.good.c", "y\n");
  tree.put("ids.txt", "# comment\nCWE190_a_01.good\n");

  const Corpus c =
      ingest_pairs(tree.root.string(), (tree.root / "ids.txt").string());
  REQUIRE(c.pairs.size() == 1);
  CHECK(c.pairs[0].id == "CWE190_a_01.good");
  CHECK(c.provenance.count("manifest") == 1);
}

// ---------------------------------------------------------------------------
// Serialization.
// ---------------------------------------------------------------------------

TEST_CASE("jsonl keeps field order and survives a round trip", "[corpus]") {
  Corpus c = tiny_corpus({{190, Variant::bad}, {78, Variant::good}});
  c.pairs[0].asm_norm = "funct0: nop";
  c.pairs[0].asm_token_len = 3;

  const std::string text = to_jsonl(c);
  const auto lines_end = text.find('\n');
  const std::string first = text.substr(0, lines_end);
  CHECK(first.rfind("{\"id\":", 0) == 0);
  CHECK(first.find("\"cwe\":190") < first.find("\"variant\""));
  CHECK(first.find("\"variant\"") < first.find("\"asm_raw\""));
  CHECK(first.find("\"asm_raw\"") < first.find("\"src_raw\""));
  CHECK(first.find("\"src_raw\"") < first.find("\"asm_norm\""));
  CHECK(first.find("\"asm_norm\"") < first.find("\"src_norm\""));
  CHECK(first.find("\"src_norm\":null") != std::string::npos);
  CHECK(first.find("\"asm_token_len\":3") != std::string::npos);

  const Corpus back = from_jsonl(text);
  REQUIRE(back.pairs.size() == 2);
  CHECK(back.pairs[0].id == c.pairs[0].id);
  CHECK(back.pairs[0].cwe.value == 190);
  CHECK(back.pairs[0].asm_norm == c.pairs[0].asm_norm);
  CHECK(back.pairs[0].asm_token_len == c.pairs[0].asm_token_len);
  CHECK(!back.pairs[1].asm_norm.has_value());
  CHECK(to_jsonl(back) == text);
}

TEST_CASE("corrupt corpus streams are rejected", "[corpus]") {
  CHECK_THROWS_AS(from_jsonl(""), EmptyCorpus);
  CHECK_THROWS_AS(from_jsonl("not json\n"), IoError);

  const Corpus c = tiny_corpus({{190, Variant::bad}});
  const std::string line = to_jsonl(c);
  CHECK_THROWS_AS(from_jsonl(line + line), DuplicateId);

  std::string no_src = line;
  const std::string needle = "\"src_raw\":\"void funct0 ( ) { }\"";
  const auto pos = no_src.find(needle);
  REQUIRE(pos != std::string::npos);
  no_src.replace(pos, needle.size(), "\"src_raw\":\"\"");
  CHECK_THROWS_AS(from_jsonl(no_src), IoError);
}

// ---------------------------------------------------------------------------
// Stratified splitting.
// ---------------------------------------------------------------------------

TEST_CASE("an exactly divisible split is exact", "[corpus]") {
  std::vector<std::pair<int, Variant>> specs;
  for (int i = 0; i < 50; ++i) specs.emplace_back(190, Variant::good);
  for (int i = 0; i < 50; ++i) specs.emplace_back(190, Variant::bad);
  const Corpus c = tiny_corpus(specs);

  const SplitResult r = stratified_split(c, 0.2, SplitKey::variant, 7);
  CHECK(r.test.pairs.size() == 20);
  CHECK(r.train.pairs.size() == 80);

  std::size_t good = 0, bad = 0;
  for (const auto& p : r.test.pairs) (p.variant == Variant::good ? good : bad)++;
  CHECK(good == 10);
  CHECK(bad == 10);
}

TEST_CASE("a half seat rounds up through the global total", "[corpus]") {
  std::vector<std::pair<int, Variant>> specs(10, {190, Variant::bad});
  const Corpus c = tiny_corpus(specs);
  const SplitResult r = stratified_split(c, 0.25, SplitKey::variant, 3);
  CHECK(r.test.pairs.size() == 3);

  const SplitResult again = stratified_split(c, 0.25, SplitKey::variant, 3);
  CHECK(to_jsonl(again.test) == to_jsonl(r.test));
  CHECK(to_jsonl(again.train) == to_jsonl(r.train));
}

TEST_CASE("singleton strata are refused by name", "[corpus]") {
  const Corpus c = tiny_corpus({{190, Variant::bad}, {190, Variant::bad}, {78, Variant::good}});
  try {
    stratified_split(c, 0.2, SplitKey::cwe, 1);
    FAIL("expected StratumTooSmall");
  } catch (const StratumTooSmall& e) {
    CHECK(std::string(e.what()).find("CWE78") != std::string::npos);
  }
}

TEST_CASE("splits partition the corpus for every key and seed", "[corpus]") {
  std::vector<std::pair<int, Variant>> specs;
  const int cwes[] = {190, 78, 121, 369};
  for (int cwe : cwes) {
    for (int i = 0; i < 7; ++i) specs.emplace_back(cwe, Variant::bad);
    for (int i = 0; i < 5; ++i) specs.emplace_back(cwe, Variant::good);
  }
  const Corpus c = tiny_corpus(specs);

  for (SplitKey key : {SplitKey::variant, SplitKey::cwe, SplitKey::cwe_and_variant}) {
    for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 999999ULL}) {
      const SplitResult r = stratified_split(c, 0.2, key, seed);

      std::set<std::string> train_ids, test_ids;
      for (const auto& p : r.train.pairs) train_ids.insert(p.id);
      for (const auto& p : r.test.pairs) test_ids.insert(p.id);
      CHECK(train_ids.size() + test_ids.size() == c.pairs.size());
      for (const auto& id : test_ids) CHECK(!train_ids.count(id));

      // per-stratum deviation bound
      std::map<std::string, std::size_t> sizes, test_counts;
      for (const auto& p : c.pairs) sizes[stratum_of(p, key)]++;
      for (const auto& p : r.test.pairs) test_counts[stratum_of(p, key)]++;
      for (const auto& [name, n] : sizes) {
        const double share = static_cast<double>(test_counts[name]) / static_cast<double>(n);
        CHECK(std::abs(share - 0.2) < 1.0 / static_cast<double>(n));
      }

      // stable order: both halves preserve corpus order
      auto ordered = [&](const Corpus& half) {
        std::size_t cursor = 0;
        for (const auto& p : half.pairs) {
          while (cursor < c.pairs.size() && c.pairs[cursor].id != p.id) ++cursor;
          if (cursor == c.pairs.size()) return false;
          ++cursor;
        }
        return true;
      };
      CHECK(ordered(r.train));
      CHECK(ordered(r.test));
    }
  }
}

TEST_CASE("seat allocation matches the reference on random inputs", "[corpus]") {
  Rng rng(20240817);
  for (int round = 0; round < 200; ++round) {
    std::map<std::string, std::size_t> sizes;
    const int strata = 1 + static_cast<int>(rng.next_below(6));
    for (int s = 0; s < strata; ++s) {
      sizes["s" + std::to_string(s)] = 2 + rng.next_below(40);
    }
    const double fraction = 0.05 + 0.9 * rng.next_double();

    const auto fast = largest_remainder_quotas(sizes, fraction);
    const auto slow = refimpl::largest_remainder_quota(sizes, fraction);
    INFO("round " << round << " fraction " << fraction);
    CHECK(fast == slow);
  }
}

TEST_CASE("remainder ties go to the lexicographically first stratum", "[corpus]") {
  const std::map<std::string, std::size_t> sizes = {{"a", 5}, {"b", 5}};
  const auto quota = largest_remainder_quotas(sizes, 0.3);
  CHECK(quota.at("a") == 2);
  CHECK(quota.at("b") == 1);
}

TEST_CASE("different seeds move members, not counts", "[corpus]") {
  std::vector<std::pair<int, Variant>> specs;
  for (int i = 0; i < 30; ++i) specs.emplace_back(190, Variant::bad);
  for (int i = 0; i < 30; ++i) specs.emplace_back(190, Variant::good);
  const Corpus c = tiny_corpus(specs);

  const SplitResult a = stratified_split(c, 0.2, SplitKey::variant, 1);
  const SplitResult b = stratified_split(c, 0.2, SplitKey::variant, 2);
  CHECK(a.test.pairs.size() == b.test.pairs.size());

  std::set<std::string> ids_a, ids_b;
  for (const auto& p : a.test.pairs) ids_a.insert(p.id);
  for (const auto& p : b.test.pairs) ids_b.insert(p.id);
  CHECK(ids_a != ids_b);
}

TEST_CASE("pinned ids land where the manifest says", "[corpus]") {
  std::vector<std::pair<int, Variant>> specs(20, {190, Variant::bad});
  const Corpus c = tiny_corpus(specs);

  SplitPins pins;
  pins[c.pairs[0].id] = SplitSide::test;
  pins[c.pairs[1].id] = SplitSide::train;

  const SplitResult r = stratified_split(c, 0.2, SplitKey::variant, 5, pins);
  std::set<std::string> test_ids;
  for (const auto& p : r.test.pairs) test_ids.insert(p.id);
  CHECK(test_ids.count(c.pairs[0].id) == 1);
  CHECK(test_ids.count(c.pairs[1].id) == 0);
  CHECK(r.test.pairs.size() == 4);  // pinning shifts membership, not the quota
}

TEST_CASE("split of the real fixture corpus is reproducible", "[corpus]") {
  const Corpus c = ingest_pairs((kFixtures / "corpus").string());
  const SplitResult r = stratified_split(c, 0.2, SplitKey::variant, 11);
  CHECK(r.test.pairs.size() == 6);  // round(0.2 * 32) with 16/16 strata
  const SplitResult again = stratified_split(c, 0.2, SplitKey::variant, 11);
  CHECK(to_jsonl(r.test) == to_jsonl(again.test));
}
