#include "fixpoint/perplexity.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

#include "fixpoint/fpi.hpp"
#include "fixpoint/parallel.hpp"

namespace fixpoint {

ForwardSpec ForwardSpec::parse(std::string_view text) {
  if (text == "sequential") return sequential();
  if (text.starts_with("fpi:")) {
    const auto digits = text.substr(4);
    std::size_t rho = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), rho);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && rho >= 1) return fpi(rho);
  }
  throw std::invalid_argument("forward must be 'sequential' or 'fpi:<rho>' with rho >= 1, got '" +
                              std::string(text) + "'");
}

std::string ForwardSpec::to_string() const {
  return kind == Kind::sequential ? "sequential" : "fpi:" + std::to_string(rho);
}

HistoryBlock history_states(std::span<const TokenId> inputs, std::span<const double> h0,
                            const ModelParams& p, const ForwardSpec& forward) {
  if (forward.kind == ForwardSpec::Kind::sequential) return sequential_forward(inputs, h0, p);
  return fpi_solve(inputs, h0, forward.rho, p).block;
}

NllResult corpus_nll(const EncodedCorpus& corpus, const ModelParams& p, const ForwardSpec& forward,
                     int workers) {
  std::vector<double> per_sentence(corpus.sentences.size(), 0.0);
  const Vector h0(p.hidden(), 0.0);
  parallel_for(corpus.sentences.size(), workers, [&](std::size_t i) {
    const auto& targets = corpus.sentences[i];
    const auto inputs = shift_inputs(targets, corpus.eos_id);
    per_sentence[i] = block_nll(history_states(inputs, h0, p, forward), targets, p).nll;
  });
  NllResult total;
  for (double v : per_sentence) total.nll += v;
  total.words = corpus.word_count;
  return total;
}

double perplexity(const EncodedCorpus& corpus, const ModelParams& p, const ForwardSpec& forward,
                  int workers) {
  if (corpus.word_count == 0) throw DataError("perplexity of an empty corpus is undefined");
  const auto r = corpus_nll(corpus, p, forward, workers);
  return std::exp(r.nll / static_cast<double>(r.words));
}

}  // namespace fixpoint
