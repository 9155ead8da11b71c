#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "bindecomp/common.hpp"
#include "bindecomp/tokenizer.hpp"

namespace bpe = bindecomp::bpe;
using bindecomp::Rng;

namespace {

// The classic four-word corpus; merge order below was frozen from an
// independent reference implementation (tests/oracles/bpe_oracle.py).
std::map<std::string, std::size_t> classic_corpus() {
  return {{"low", 5}, {"lower", 2}, {"newest", 6}, {"widest", 3}};
}

std::vector<std::string> symbols_of(const bpe::Model& model, const std::vector<int>& ids) {
  std::vector<std::string> out;
  for (int id : ids) out.push_back(model.id_to_symbol.at(static_cast<std::size_t>(id)));
  return out;
}

}  // namespace

TEST_CASE("pretokenize splits on whitespace runs", "[tokenizer]") {
  CHECK(bpe::pretokenize("void funct0 ( )") ==
        std::vector<std::string>{"void", "funct0", "(", ")"});
  CHECK(bpe::pretokenize("").empty());
  CHECK(bpe::pretokenize("a  b") == std::vector<std::string>{"a", "b"});
  CHECK(bpe::pretokenize("  a\tb\n") == std::vector<std::string>{"a", "b"});
}

TEST_CASE("training merges most frequent pair with lexicographic ties", "[tokenizer]") {
  const auto model = bpe::train(classic_corpus(), 6);
  REQUIRE(model.merges.size() == 6);
  CHECK(model.merges[0] == std::make_pair(std::string("e"), std::string("s")));
  CHECK(model.merges[1] == std::make_pair(std::string("es"), std::string("t</w>")));
  CHECK(model.merges[2] == std::make_pair(std::string("l"), std::string("o")));
  CHECK(model.merges[3] == std::make_pair(std::string("e"), std::string("w")));
  CHECK(model.merges[4] == std::make_pair(std::string("ew"), std::string("est</w>")));
  CHECK(model.merges[5] == std::make_pair(std::string("n"), std::string("ewest</w>")));
}

TEST_CASE("two-word training example", "[tokenizer]") {
  const auto model = bpe::train(std::map<std::string, std::size_t>{{"aaab", 1}, {"aab", 1}}, 1);
  REQUIRE(model.merges.size() == 1);
  CHECK(model.merges[0] == std::make_pair(std::string("a"), std::string("a")));
  CHECK(symbols_of(model, bpe::encode_word(model, "aaab")) ==
        std::vector<std::string>{"aa", "a", "b</w>"});
}

TEST_CASE("zero merges yields a character-level model", "[tokenizer]") {
  const auto model = bpe::train(classic_corpus(), 0);
  CHECK(model.merges.empty());
  CHECK(symbols_of(model, bpe::encode_word(model, "low")) ==
        std::vector<std::string>{"l", "o", "w</w>"});
}

TEST_CASE("vocab layout: specials lowest, alphabet sorted, merge products appended",
          "[tokenizer]") {
  const auto model = bpe::train(classic_corpus(), 6);
  CHECK(model.vocab.at("<pad>") == 0);
  CHECK(model.vocab.at("<unk>") == 1);
  CHECK(model.vocab.at("<bos>") == 2);
  CHECK(model.vocab.at("<eos>") == 3);
  CHECK(model.vocab.at("<func>") == 4);
  // Initial alphabet in lexicographic order right after the specials.
  CHECK(model.id_to_symbol[5] == "d");
  CHECK(model.id_to_symbol[6] == "e");
  CHECK(model.id_to_symbol[14] == "w");
  CHECK(model.id_to_symbol[15] == "w</w>");
  // Merge products in merge order.
  CHECK(model.id_to_symbol[16] == "es");
  CHECK(model.id_to_symbol[21] == "newest</w>");
  // Dense ids.
  for (std::size_t id = 0; id < model.id_to_symbol.size(); ++id) {
    REQUIRE(model.vocab.at(model.id_to_symbol[id]) == static_cast<int>(id));
  }
}

TEST_CASE("encoding applies merges in training order", "[tokenizer]") {
  const auto model = bpe::train(classic_corpus(), 6);
  CHECK(symbols_of(model, bpe::encode_word(model, "lowest")) ==
        std::vector<std::string>{"lo", "w", "est</w>"});
  CHECK(symbols_of(model, bpe::encode_word(model, "newest")) ==
        std::vector<std::string>{"newest</w>"});
  CHECK(symbols_of(model, bpe::encode_word(model, "low")) ==
        std::vector<std::string>{"lo", "w</w>"});
  CHECK(symbols_of(model, bpe::encode_word(model, "widest")) ==
        std::vector<std::string>{"w", "i", "d", "est</w>"});
}

TEST_CASE("unknown characters map to unk and decode to the unk glyph", "[tokenizer]") {
  const auto model = bpe::train(classic_corpus(), 6);
  const auto ids = bpe::encode_word(model, "zed");
  REQUIRE(ids.size() == 3);
  CHECK(ids[0] == model.unk_id());
  CHECK(ids[1] == model.vocab.at("e"));
  CHECK(ids[2] == model.unk_id());

  bpe::TokenSeq seq{ids};
  CHECK(bpe::decode(model, seq) == "<unk> e <unk>");

  // Multi-byte codepoints stay one symbol wide.
  const auto mu = bpe::encode_word(model, "\xc2\xb5");
  REQUIRE(mu.size() == 1);
  CHECK(mu[0] == model.unk_id());
}

TEST_CASE("special glyph words encode to their reserved ids", "[tokenizer]") {
  const auto model = bpe::train(classic_corpus(), 6);
  CHECK(bpe::encode(model, {"<func>"}).ids == std::vector<int>{4});
  CHECK(bpe::encode(model, {"<pad>"}).ids == std::vector<int>{0});
  const auto seq = bpe::encode(model, {"low", "<func>", "low"});
  CHECK(seq.ids == std::vector<int>{model.vocab.at("lo"), model.vocab.at("w</w>"), 4,
                                    model.vocab.at("lo"), model.vocab.at("w</w>")});
  CHECK(bpe::decode(model, seq) == "low <func> low");
}

TEST_CASE("decode rejects out-of-range ids", "[tokenizer]") {
  const auto model = bpe::train(classic_corpus(), 2);
  bpe::TokenSeq bad{{static_cast<int>(model.vocab_size())}};
  CHECK_THROWS_AS(bpe::decode(model, bad), bindecomp::IdOutOfRange);
  bpe::TokenSeq neg{{-1}};
  CHECK_THROWS_AS(bpe::decode(model, neg), bindecomp::IdOutOfRange);
}

TEST_CASE("roundtrip over the training alphabet", "[tokenizer][property]") {
  Rng rng(411);
  const std::vector<std::string> alphabet = {"a", "b", "c", "x"};
  std::vector<std::string> corpus_words;
  for (int i = 0; i < 60; ++i) {
    std::string w;
    const std::size_t len = 1 + rng.next_below(7);
    for (std::size_t k = 0; k < len; ++k) w += alphabet[rng.next_below(alphabet.size())];
    corpus_words.push_back(w);
  }
  const auto model = bpe::train(corpus_words, 24);

  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> words;
    const std::size_t n = rng.next_below(10);
    for (std::size_t k = 0; k < n; ++k) {
      std::string w;
      const std::size_t len = 1 + rng.next_below(7);
      for (std::size_t j = 0; j < len; ++j) w += alphabet[rng.next_below(alphabet.size())];
      words.push_back(w);
    }
    const std::string text = bindecomp::join(words, " ");
    const auto seq = bpe::encode_text(model, text);
    REQUIRE(bpe::decode(model, seq) == text);
    REQUIRE(seq.length() == seq.ids.size());
    for (int id : seq.ids) {
      REQUIRE(id >= 0);
      REQUIRE(static_cast<std::size_t>(id) < model.vocab_size());
    }
  }
}

TEST_CASE("encoding length is non-increasing in merge count", "[tokenizer][property]") {
  const auto corpus = classic_corpus();
  const std::vector<std::string> probes = {"lowest", "newest", "widest", "low", "lower"};
  std::vector<std::size_t> previous(probes.size(), SIZE_MAX);
  for (std::size_t merges = 0; merges <= 8; ++merges) {
    const auto model = bpe::train(corpus, merges);
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const auto len = bpe::encode_word(model, probes[i]).size();
      REQUIRE(len <= previous[i]);
      previous[i] = len;
    }
  }
}

TEST_CASE("training is deterministic and serialization reproduces encodings",
          "[tokenizer]") {
  const auto a = bpe::train(classic_corpus(), 6);
  const auto b = bpe::train(classic_corpus(), 6);
  CHECK(bpe::to_json(a).dump() == bpe::to_json(b).dump());

  const auto reloaded = bpe::from_json(bpe::to_json(a));
  for (const std::string w : {"lowest", "newest", "zed", "widest"}) {
    CHECK(bpe::encode_word(reloaded, w) == bpe::encode_word(a, w));
  }
}

TEST_CASE("empty training input is rejected", "[tokenizer]") {
  CHECK_THROWS_AS(bpe::train(std::map<std::string, std::size_t>{}, 4),
                  bindecomp::EmptyTrainingSet);
}

TEST_CASE("length percentile frozen cases", "[tokenizer]") {
  std::vector<std::size_t> lengths;
  for (std::size_t v = 1; v <= 100; ++v) lengths.push_back(v);
  CHECK(bpe::length_percentile(lengths, 95.0) == 95);
  CHECK(bpe::length_percentile(lengths, 5.0) == 5);
  CHECK(bpe::length_percentile(lengths, 0.0) == 1);
  CHECK(bpe::length_percentile(lengths, 100.0) == 100);
  CHECK(bpe::length_percentile(lengths, 50.0) == 50);
  CHECK(bpe::length_percentile({7}, 33.0) == 7);
  CHECK_THROWS_AS(bpe::length_percentile({}, 50.0), bindecomp::EmptyInput);
}

TEST_CASE("length percentile matches integer-arithmetic oracle", "[tokenizer][oracle]") {
  Rng rng(9090);
  const std::vector<std::size_t> ps = {0, 1, 5, 10, 25, 50, 75, 90, 95, 99, 100};
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.next_below(200);
    std::vector<std::size_t> lengths;
    for (std::size_t i = 0; i < n; ++i) lengths.push_back(1 + rng.next_below(1000));
    auto sorted = lengths;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t p : ps) {
      // Integer ceiling of p*n/100, never below rank 1.
      std::size_t rank = p == 0 ? 1 : (p * n + 99) / 100;
      if (rank < 1) rank = 1;
      REQUIRE(bpe::length_percentile(lengths, static_cast<double>(p)) == sorted[rank - 1]);
    }
  }
}

TEST_CASE("toss reduction keeps the inclusive percentile band", "[tokenizer]") {
  std::vector<std::size_t> lengths;
  for (std::size_t v = 1; v <= 100; ++v) lengths.push_back(v);
  Rng rng(5);
  rng.shuffle(lengths);

  const auto result = bpe::toss_reduce(lengths, lengths, 5.0, 95.0, bpe::TossSide::both);
  CHECK(result.source_bounds.low == 5);
  CHECK(result.source_bounds.high == 95);
  CHECK(result.kept_indices.size() == 91);
  CHECK(result.dropped == 9);
  for (std::size_t idx : result.kept_indices) {
    REQUIRE(lengths[idx] >= 5);
    REQUIRE(lengths[idx] <= 95);
  }
}

TEST_CASE("toss reduction side selection", "[tokenizer]") {
  // Source lengths are uniform; target lengths have one extreme outlier.
  std::vector<std::size_t> source, target;
  for (std::size_t v = 1; v <= 50; ++v) {
    source.push_back(25);
    target.push_back(v == 50 ? 10000 : v);
  }
  const auto src_only = bpe::toss_reduce(source, target, 5.0, 95.0,
                                         bpe::TossSide::source_lang);
  CHECK(src_only.kept_indices.size() == 50);  // all equal, nothing dropped

  const auto tgt_only = bpe::toss_reduce(source, target, 5.0, 95.0,
                                         bpe::TossSide::target_lang);
  CHECK(tgt_only.kept_indices.size() < 50);
  for (std::size_t idx : tgt_only.kept_indices) {
    REQUIRE(target[idx] >= tgt_only.target_bounds.low);
    REQUIRE(target[idx] <= tgt_only.target_bounds.high);
  }
}

TEST_CASE("toss reduction degenerate cases", "[tokenizer]") {
  // All lengths equal: bounds collapse onto the single value, nothing dropped.
  std::vector<std::size_t> equal(40, 12);
  const auto result = bpe::toss_reduce(equal, equal);
  CHECK(result.kept_indices.size() == 40);
  CHECK(result.dropped == 0);

  // Disjoint survivors per side can empty the corpus.
  std::vector<std::size_t> src, tgt;
  for (std::size_t v = 1; v <= 10; ++v) {
    src.push_back(v);
    tgt.push_back(11 - v);
  }
  CHECK_THROWS_AS(bpe::toss_reduce(src, tgt, 50.0, 50.0, bpe::TossSide::both),
                  bindecomp::EverythingDropped);

  CHECK_THROWS_AS(bpe::toss_reduce({}, {}), bindecomp::EmptyInput);
  CHECK_THROWS_AS(bpe::toss_reduce({1, 2}, {1}), bindecomp::LengthMismatch);
}

TEST_CASE("second toss pass drops at most the boundary ranks", "[tokenizer][property]") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 20 + rng.next_below(400);
    std::vector<std::size_t> lengths;
    for (std::size_t i = 0; i < n; ++i) lengths.push_back(1 + rng.next_below(500));
    const auto first = bpe::toss_reduce(lengths, lengths);
    std::vector<std::size_t> survivors;
    for (std::size_t idx : first.kept_indices) survivors.push_back(lengths[idx]);

    const std::size_t m = survivors.size();
    const std::size_t rank_low = (5 * m + 99) / 100 ? (5 * m + 99) / 100 : 1;
    const std::size_t rank_high = (95 * m + 99) / 100;
    const auto second = bpe::toss_reduce(survivors, survivors);
    REQUIRE(second.dropped <= (rank_low - 1) + (m - rank_high));
  }
}
