#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace fixpoint {

using TokenId = std::uint32_t;

/// Raised for malformed or empty input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One whitespace-tokenized sentence per element.
using Sentences = std::vector<std::vector<std::string>>;

Sentences read_sentences(std::istream& in);
Sentences read_sentences(const std::filesystem::path& path);

inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr std::string_view kUnkToken = "<unk>";

/// Bijective token <-> id map. `<eos>` is id 0 and `<unk>` is id 1; the
/// remaining ids follow descending training frequency, ties broken
/// lexicographically.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId eos_id() const { return 0; }
  TokenId unk_id() const { return 1; }

  /// Id of `token`, or unk_id() when out of vocabulary.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(std::istream& in);
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

Vocabulary build_vocab(const Sentences& training_text, std::size_t min_count = 1);

/// Sentences as token ids, each terminated by `eos_id`.
struct EncodedCorpus {
  std::vector<std::vector<TokenId>> sentences;
  std::size_t word_count = 0;
  TokenId eos_id = 0;
  std::size_t vocab_size = 0;

  bool empty() const { return word_count == 0; }
};

EncodedCorpus encode(const Vocabulary& vocab, const Sentences& text);

/// Inverse of encode for in-vocabulary text; trailing `<eos>` is dropped.
Sentences decode(const Vocabulary& vocab, const EncodedCorpus& corpus);

/// Fraction of non-`<eos>` tokens in `text` that map to `<unk>` (literal
/// `<unk>` tokens included).
double oov_rate(const Vocabulary& vocab, const Sentences& text);

/// Leading sentences of `corpus` until at least `words` tokens are covered.
EncodedCorpus take_words(const EncodedCorpus& corpus, std::size_t words);

/// Input tokens for a target sentence: `bos` followed by all but the last
/// target.
std::vector<TokenId> shift_inputs(std::span<const TokenId> targets, TokenId bos);

/// Padded batch of target sentences. `<eos>` doubles as the beginning-of-
/// sentence input token.
struct Batch {
  std::size_t rows = 0;
  std::size_t max_len = 0;
  std::vector<TokenId> targets;  // rows x max_len, padded with bos
  std::vector<std::size_t> lengths;
  std::vector<std::uint8_t> mask;  // rows x max_len
  TokenId bos = 0;

  std::span<const TokenId> row(std::size_t r) const {
    return {targets.data() + r * max_len, lengths[r]};
  }
  std::size_t word_count() const;
};

Batch make_batch(std::span<const std::vector<TokenId>* const> sentences, TokenId bos);

/// Shuffle sentences with `seed` and group them into padded batches of at
/// most `batch_size` rows.
std::vector<Batch> batchify(const EncodedCorpus& corpus, std::size_t batch_size,
                            std::uint64_t seed);

}  // namespace fixpoint
