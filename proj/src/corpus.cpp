#include "fixpoint/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace fixpoint {

Sentences read_sentences(std::istream& in) {
  Sentences out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<std::string> sentence;
    std::string tok;
    while (ls >> tok) sentence.push_back(std::move(tok));
    out.push_back(std::move(sentence));
  }
  // A trailing newline yields no extra line with getline, but files often end
  // with a blank line; drop those.
  while (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

Sentences read_sentences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  return read_sentences(in);
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  tokens_.reserve(tokens.size() + 2);
  tokens_.emplace_back(kEosToken);
  tokens_.emplace_back(kUnkToken);
  for (auto& t : tokens) {
    if (t == kEosToken || t == kUnkToken) continue;
    tokens_.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk_id() : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

void Vocabulary::save(std::ostream& out) const {
  out << "fixpoint-vocab v1 " << tokens_.size() << '\n';
  for (const auto& t : tokens_) out << t << '\n';
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  save(out);
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::string magic, version;
  std::size_t size = 0;
  if (!(in >> magic >> version >> size) || magic != "fixpoint-vocab" || version != "v1") {
    throw DataError("not a fixpoint-vocab v1 file");
  }
  std::string line;
  std::getline(in, line);
  std::vector<std::string> tokens;
  tokens.reserve(size);
  while (tokens.size() < size && std::getline(in, line)) tokens.push_back(line);
  if (tokens.size() != size) throw DataError("vocabulary file truncated");
  if (size < 2 || tokens[0] != kEosToken || tokens[1] != kUnkToken) {
    throw DataError("vocabulary file must start with <eos> and <unk>");
  }
  return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return load(in);
}

Vocabulary build_vocab(const Sentences& training_text, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& s : training_text) {
    for (const auto& t : s) {
      ++counts[t];
      ++total;
    }
  }
  if (total == 0) throw DataError("cannot build a vocabulary from an empty token stream");

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  // std::map iteration is already lexicographic; stable sort keeps it for ties.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return Vocabulary(std::move(tokens));
}

EncodedCorpus encode(const Vocabulary& vocab, const Sentences& text) {
  EncodedCorpus out;
  out.eos_id = vocab.eos_id();
  out.vocab_size = vocab.size();
  out.sentences.reserve(text.size());
  for (const auto& s : text) {
    std::vector<TokenId> ids;
    ids.reserve(s.size() + 1);
    for (const auto& t : s) ids.push_back(vocab.id(t));
    ids.push_back(vocab.eos_id());
    out.word_count += ids.size();
    out.sentences.push_back(std::move(ids));
  }
  return out;
}

Sentences decode(const Vocabulary& vocab, const EncodedCorpus& corpus) {
  Sentences out;
  out.reserve(corpus.sentences.size());
  for (const auto& ids : corpus.sentences) {
    std::vector<std::string> s;
    const std::size_t n = (!ids.empty() && ids.back() == corpus.eos_id) ? ids.size() - 1 : ids.size();
    for (std::size_t i = 0; i < n; ++i) s.push_back(vocab.token(ids[i]));
    out.push_back(std::move(s));
  }
  return out;
}

double oov_rate(const Vocabulary& vocab, const Sentences& text) {
  std::size_t total = 0, unk = 0;
  for (const auto& s : text) {
    for (const auto& t : s) {
      ++total;
      if (vocab.id(t) == vocab.unk_id()) ++unk;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(unk) / static_cast<double>(total);
}

EncodedCorpus take_words(const EncodedCorpus& corpus, std::size_t words) {
  EncodedCorpus out;
  out.eos_id = corpus.eos_id;
  out.vocab_size = corpus.vocab_size;
  for (const auto& s : corpus.sentences) {
    if (out.word_count >= words) break;
    out.sentences.push_back(s);
    out.word_count += s.size();
  }
  return out;
}

std::vector<TokenId> shift_inputs(std::span<const TokenId> targets, TokenId bos) {
  std::vector<TokenId> inputs;
  if (targets.empty()) return inputs;
  inputs.reserve(targets.size());
  inputs.push_back(bos);
  inputs.insert(inputs.end(), targets.begin(), targets.end() - 1);
  return inputs;
}

std::size_t Batch::word_count() const {
  return std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
}

Batch make_batch(std::span<const std::vector<TokenId>* const> sentences, TokenId bos) {
  Batch b;
  b.rows = sentences.size();
  b.bos = bos;
  for (const auto* s : sentences) b.max_len = std::max(b.max_len, s->size());
  b.targets.assign(b.rows * b.max_len, bos);
  b.mask.assign(b.rows * b.max_len, 0);
  b.lengths.reserve(b.rows);
  for (std::size_t r = 0; r < b.rows; ++r) {
    const auto& s = *sentences[r];
    b.lengths.push_back(s.size());
    std::copy(s.begin(), s.end(), b.targets.begin() + static_cast<std::ptrdiff_t>(r * b.max_len));
    std::fill_n(b.mask.begin() + static_cast<std::ptrdiff_t>(r * b.max_len), s.size(), 1);
  }
  return b;
}

std::vector<Batch> batchify(const EncodedCorpus& corpus, std::size_t batch_size,
                            std::uint64_t seed) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<const std::vector<TokenId>*> order;
  order.reserve(corpus.sentences.size());
  for (const auto& s : corpus.sentences) order.push_back(&s);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - i);
    batches.push_back(make_batch(std::span(order).subspan(i, n), corpus.eos_id));
  }
  return batches;
}

}  // namespace fixpoint
