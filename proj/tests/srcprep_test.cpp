#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "bindecomp/srcprep.hpp"

namespace sp = bindecomp::srcprep;

namespace {

std::string concat(const std::vector<sp::SrcToken>& tokens) {
  std::string out;
  for (const auto& t : tokens) out += t.text;
  return out;
}

std::string norm(const std::string& text) { return sp::normalize_source_text(text); }

}  // namespace

TEST_CASE("lexer is lossless on representative inputs", "[srcprep]") {
  const std::vector<std::string> inputs = {
      "a /*x*/ = \"s;\";",
      "char c = '\\'';",
      "int main(){ f(); } void f(){ /*c*/ puts(\"hello\"); }",
      "#include <stdio.h>\n#define N 10\nvoid a(){int x[N];}\n",
      "x <<= 2; y ->* z; a <=> b; p--; q... \n",
      "wchar_t* w = L\"wide\"; auto r = R\"(raw \" text)\";",
      "price = 1'000'000; f = .5e-3f; h = 0x1fULL;",
      "weird @ bytes ` $ \x01 here",
      "// line comment to eof",
      "/* unterminated block",
      "\"unterminated string",
      "",
  };
  for (const auto& input : inputs) {
    const auto lexed = sp::lex_c(input);
    REQUIRE(concat(lexed.tokens) == input);
  }
}

TEST_CASE("lexer classifications", "[srcprep]") {
  const auto lexed = sp::lex_c("a /*x*/ = \"s;\";");
  std::vector<sp::TokKind> kinds;
  for (const auto& t : lexed.tokens) kinds.push_back(t.kind);
  CHECK(kinds == std::vector<sp::TokKind>{
                     sp::TokKind::identifier, sp::TokKind::whitespace,
                     sp::TokKind::comment, sp::TokKind::whitespace,
                     sp::TokKind::punctuator, sp::TokKind::whitespace,
                     sp::TokKind::string_literal, sp::TokKind::punctuator});
  CHECK(lexed.diagnostics.empty());

  const auto chr = sp::lex_c("char c = '\\'';");
  int char_literals = 0;
  for (const auto& t : chr.tokens) {
    if (t.kind == sp::TokKind::char_literal) {
      ++char_literals;
      CHECK(t.text == "'\\''");
    }
  }
  CHECK(char_literals == 1);

  const auto unterminated = sp::lex_c("x = \"abc\ny;");
  REQUIRE_FALSE(unterminated.diagnostics.empty());
  CHECK(unterminated.diagnostics[0].message == "unterminated string literal");
  bool found = false;
  for (const auto& t : unterminated.tokens) {
    if (t.kind == sp::TokKind::string_literal) {
      CHECK(t.text == "\"abc");
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("lexer handles preprocessor lines and continuations", "[srcprep]") {
  const std::string input = "#define LONG \\\n  tail\nint x;\n";
  const auto lexed = sp::lex_c(input);
  REQUIRE(concat(lexed.tokens) == input);
  REQUIRE(lexed.tokens[0].kind == sp::TokKind::preprocessor);
  CHECK(lexed.tokens[0].text == "#define LONG \\\n  tail");

  // '#' not at line start is a plain punctuator.
  const auto mid = sp::lex_c("a # b");
  CHECK(mid.tokens[2].kind == sp::TokKind::punctuator);
}

TEST_CASE("normalization golden: spec of behavior on a two-function file", "[srcprep][golden]") {
  CHECK(norm("int main(){ f(); } void f(){ /*c*/ puts(\"hello\"); }") ==
        "void funct0 ( ) { puts ( \"STR\" ) ; }");
}

TEST_CASE("normalization golden: includes dropped, defines kept", "[srcprep][golden]") {
  CHECK(norm("#include <stdio.h>\n#define N 10\nvoid a(){int x[N];}\n") ==
        "# define N 10 void funct0 ( ) { int x [ N ] ; }");
}

TEST_CASE("normalization golden: namespace syntax removed, bodies kept", "[srcprep][golden]") {
  CHECK(norm("using namespace std;\nnamespace ns { void f() { } }\nint main(){}\n") ==
        "void funct0 ( ) { }");
  CHECK(norm("namespace A { namespace B { void f(){} } }") == "void funct0 ( ) { }");
  // Aliases are not wrapper syntax and survive.
  CHECK(norm("namespace q = A::B; void f(){}") == "namespace q = A :: B ; void funct0 ( ) { }");
}

TEST_CASE("normalization golden: string payloads masked", "[srcprep][golden]") {
  CHECK(norm("void f(){ printf(\"a%d\", 1); wprintf(L\"w\"); }") ==
        "void funct0 ( ) { printf ( \"STR\" , 1 ) ; wprintf ( \"STR\" ) ; }");
}

TEST_CASE("normalization golden: char literals kept by default", "[srcprep][golden]") {
  CHECK(norm("void f(){ char c = 'x'; }") == "void funct0 ( ) { char c = 'x' ; }");
  sp::NormalizeOptions opts;
  opts.anonymize_char_literals = true;
  CHECK(sp::normalize_source_text("void f(){ char c = 'x'; }", opts) ==
        "void funct0 ( ) { char c = 'C' ; }");
}

TEST_CASE("normalization golden: rename order and call sites", "[srcprep][golden]") {
  CHECK(norm("void alpha(){} void beta(){ alpha(); } int main(){ beta(); }") ==
        "void funct0 ( ) { } void funct1 ( ) { funct0 ( ) ; }");
}

TEST_CASE("normalization golden: collision with a canonical name", "[srcprep][golden]") {
  CHECK(norm("int funct0; void f(){ funct0 = 1; }") ==
        "int funct0_ ; void funct0 ( ) { funct0_ = 1 ; }");
}

TEST_CASE("normalization golden: main with parameters and specifiers", "[srcprep][golden]") {
  CHECK(norm("static int helper(int v){return v;} int main(int argc, char *argv[]) "
             "{ return helper(argc); }") ==
        "static int funct0 ( int v ) { return v ; }");
}

TEST_CASE("normalization handles unterminated literals without leaking", "[srcprep]") {
  const auto result = sp::normalize_source("void f(){ puts(\"abc");
  CHECK(result.text == "void funct0 ( ) { puts ( \"STR\"");
  REQUIRE_FALSE(result.diagnostics.empty());
  CHECK(result.text.find("abc") == std::string::npos);
}

TEST_CASE("file with only main reports nothing left", "[srcprep]") {
  CHECK_THROWS_AS(sp::normalize_source("int main(){ return 0; }"),
                  bindecomp::NoFunctionsLeft);
  CHECK_THROWS_AS(sp::normalize_source("int x = 3;"), bindecomp::NoFunctionsLeft);
}

TEST_CASE("normalization is idempotent", "[srcprep][property]") {
  const std::vector<std::string> inputs = {
      "int main(){ f(); } void f(){ /*c*/ puts(\"hello\"); }",
      "#include <stdio.h>\n#define N 10\nvoid a(){int x[N];}\n",
      "using namespace std;\nnamespace ns { void f() { } }\nint main(){}\n",
      "void f(){ printf(\"a%d\", 1); wprintf(L\"w\"); }",
      "void alpha(){} void beta(){ alpha(); } int main(){ beta(); }",
      "int funct0; void f(){ funct0 = 1; }",
      "static int helper(int v){return v;} int main(int argc, char *argv[]) "
      "{ return helper(argc); }",
      "namespace q = A::B; void f(){}",
      "#define CHECK(x) if (!(x)) abort()\nvoid g(){ CHECK(1); }\n",
  };
  for (const auto& input : inputs) {
    const std::string once = norm(input);
    const std::string twice = norm(once);
    REQUIRE(twice == once);
  }
}

TEST_CASE("normalized output leaks no comments, includes, or payloads", "[srcprep][property]") {
  const std::vector<std::string> inputs = {
      "int main(){ f(); } void f(){ /*c*/ puts(\"hello\"); }",
      "#include \"local.h\"\nvoid f(){ /* a */ g(\"x\\\"y\"); } // trail\n",
      "void f(){ const char* s = \"multi\\nline\"; }",
      "#define MSG \"macro payload\"\nvoid f(){ puts(MSG); }\n",
  };
  for (const auto& input : inputs) {
    const std::string text = norm(input);
    const auto relexed = sp::lex_c(text);
    for (const auto& t : relexed.tokens) {
      REQUIRE(t.kind != sp::TokKind::comment);
      if (t.kind == sp::TokKind::string_literal) REQUIRE(t.text == "\"STR\"");
    }
    REQUIRE(text.find("#include") == std::string::npos);
    REQUIRE(text.find("include") == std::string::npos);
  }
}

TEST_CASE("normalized braces stay balanced", "[srcprep][property]") {
  const std::vector<std::string> inputs = {
      "int main(){ if (1) { f(); } } void f(){ for(;;) { break; } }",
      "namespace n { void f() { { } } } int main() { }",
  };
  for (const auto& input : inputs) {
    const std::string text = norm(input);
    int depth = 0;
    for (const auto& t : sp::lex_c(text).tokens) {
      if (t.kind != sp::TokKind::punctuator) continue;
      if (t.text == "{") ++depth;
      if (t.text == "}") --depth;
      REQUIRE(depth >= 0);
    }
    REQUIRE(depth == 0);
  }
}

TEST_CASE("standalone renaming preserves spacing and honors a prior map", "[srcprep]") {
  const std::string input = "void goodG2B() {\n  goodG2BSink();\n}\n"
                            "void goodG2BSink() { }\n";
  const auto result = sp::canonicalize_src_names(input);
  CHECK(result.name_map.at("goodG2B") == "funct0");
  CHECK(result.name_map.at("goodG2BSink") == "funct1");
  CHECK(result.text == "void funct0() {\n  funct1();\n}\nvoid funct1() { }\n");

  // Seeding the map shifts fresh assignments past the taken indices.
  const auto seeded = sp::canonicalize_src_names(
      input, {{"goodG2BSink", "funct3"}});
  CHECK(seeded.name_map.at("goodG2BSink") == "funct3");
  CHECK(seeded.name_map.at("goodG2B") == "funct4");

  const auto empty = sp::canonicalize_src_names("");
  CHECK(empty.text.empty());
  CHECK(empty.name_map.empty());
}

TEST_CASE("main is only removed as a definition", "[srcprep]") {
  const auto result = sp::normalize_source(
      "void caller(){ main(); } int main(){ return 0; }");
  CHECK(result.text == "void funct0 ( ) { main ( ) ; }");
  bool flagged = false;
  for (const auto& d : result.diagnostics) {
    if (d.message.find("main") != std::string::npos) flagged = true;
  }
  CHECK(flagged);
}
