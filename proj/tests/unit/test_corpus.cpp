#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fixpoint/corpus.hpp"

using namespace fixpoint;

namespace {

Sentences parse(const std::string& text) {
  std::istringstream in(text);
  return read_sentences(in);
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("vocabulary enumeration and threshold") {
    const auto text = parse("a a b\n");
    const Vocabulary v1 = build_vocab(text, 1);
    CHECK(v1.size() == 4);
    CHECK(v1.tokens() == std::vector<std::string>{"<eos>", "<unk>", "a", "b"});
    const Vocabulary v2 = build_vocab(text, 2);
    CHECK(v2.size() == 3);
    CHECK(v2.contains("a"));
    CHECK_FALSE(v2.contains("b"));
    CHECK(v2.id("b") == v2.unk_id());
  }

  TEST_CASE("frequency order with lexicographic ties") {
    const Vocabulary v = build_vocab(parse("c b a\nb c\nc\n"));
    CHECK(v.tokens() == std::vector<std::string>{"<eos>", "<unk>", "c", "b", "a"});
  }

  TEST_CASE("literal <unk> and <eos> are not duplicated") {
    const Vocabulary v = build_vocab(parse("x <unk> y <unk>\n"));
    CHECK(v.size() == 4);
    const auto enc = encode(v, parse("<unk> x\n"));
    CHECK(enc.sentences[0] == std::vector<TokenId>{v.unk_id(), v.id("x"), v.eos_id()});
  }

  TEST_CASE("empty stream is rejected") {
    CHECK_THROWS_AS(build_vocab(parse("")), DataError);
    CHECK_THROWS_AS(build_vocab(parse("\n\n")), DataError);
  }

  TEST_CASE("encode examples") {
    const Vocabulary v = build_vocab(parse("a c\n"));
    const auto enc = encode(v, parse("a b\n\nc\n"));
    REQUIRE(enc.sentences.size() == 3);
    CHECK(enc.sentences[0] == std::vector<TokenId>{v.id("a"), v.unk_id(), v.eos_id()});
    CHECK(enc.sentences[1] == std::vector<TokenId>{v.eos_id()});
    CHECK(enc.word_count == 6);
    CHECK(enc.vocab_size == v.size());
    CHECK(oov_rate(v, parse("a b\n")) == 0.5);
  }

  TEST_CASE("decode inverts encode on in-vocabulary text") {
    const auto text = parse("the cat sat\non the mat\n");
    const Vocabulary v = build_vocab(text);
    CHECK(decode(v, encode(v, text)) == text);
  }

  TEST_CASE("vocabulary save/load roundtrip and byte determinism") {
    const Vocabulary v = build_vocab(parse("z y y x x x\n"));
    std::ostringstream a, b;
    v.save(a);
    build_vocab(parse("z y y x x x\n")).save(b);
    CHECK(a.str() == b.str());
    std::istringstream in(a.str());
    CHECK(Vocabulary::load(in).tokens() == v.tokens());
    std::istringstream bad("fixpoint-vocab v1 2\nfoo\n<unk>\n");
    CHECK_THROWS_AS(Vocabulary::load(bad), DataError);
  }

  TEST_CASE("unreadable file") {
    CHECK_THROWS_AS(read_sentences(std::filesystem::path("/nonexistent/file.txt")), DataError);
  }

  TEST_CASE("shift_inputs") {
    CHECK(shift_inputs(std::vector<TokenId>{5, 6, 0}, 0) == std::vector<TokenId>{0, 5, 6});
    CHECK(shift_inputs(std::vector<TokenId>{0}, 0) == std::vector<TokenId>{0});
  }

  TEST_CASE("batchify sizes, conservation and determinism") {
    const Vocabulary v = build_vocab(parse("a b c d e\n"));
    const auto enc3 = encode(v, parse("a b\nc\nd e a\n"));
    const auto batches = batchify(enc3, 2, 1);
    REQUIRE(batches.size() == 2);
    CHECK(batches[0].rows == 2);
    CHECK(batches[1].rows == 1);

    std::ostringstream text;
    for (int i = 0; i < 37; ++i) {
      for (int j = 0; j <= i % 7; ++j) text << "abcde"[(i + j) % 5] << ' ';
      text << '\n';
    }
    const auto enc = encode(v, parse(text.str()));
    for (std::size_t bs : {1u, 3u, 8u, 100u}) {
      const auto b1 = batchify(enc, bs, 42);
      std::size_t masked = 0, rows = 0;
      for (const auto& b : b1) {
        masked += std::accumulate(b.mask.begin(), b.mask.end(), std::size_t{0});
        CHECK(b.word_count() == std::accumulate(b.lengths.begin(), b.lengths.end(), std::size_t{0}));
        rows += b.rows;
        for (std::size_t r = 0; r < b.rows; ++r) {
          for (std::size_t t = b.lengths[r]; t < b.max_len; ++t) {
            CHECK(b.mask[r * b.max_len + t] == 0);
            CHECK(b.targets[r * b.max_len + t] == b.bos);
          }
        }
      }
      CHECK(masked == enc.word_count);
      CHECK(rows == enc.sentences.size());
      const auto b2 = batchify(enc, bs, 42);
      REQUIRE(b1.size() == b2.size());
      for (std::size_t i = 0; i < b1.size(); ++i) CHECK(b1[i].targets == b2[i].targets);
    }
    CHECK_THROWS(batchify(enc, 0, 1));
  }

  TEST_CASE("take_words prefix") {
    const Vocabulary v = build_vocab(parse("a b c\n"));
    const auto enc = encode(v, parse("a b\nc\na a a\nb\n"));
    const auto sub = take_words(enc, 4);
    CHECK(sub.sentences.size() == 2);
    CHECK(sub.word_count == 5);
    CHECK(sub.vocab_size == enc.vocab_size);
  }
}
