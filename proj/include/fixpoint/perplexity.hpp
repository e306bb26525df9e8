#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "fixpoint/corpus.hpp"
#include "fixpoint/elman.hpp"

namespace fixpoint {

/// Which engine produces the history states: the sequential recurrence or
/// `rho` fixed-point iterations from a zero block.
struct ForwardSpec {
  enum class Kind { sequential, fpi };
  Kind kind = Kind::sequential;
  std::size_t rho = 0;

  static ForwardSpec sequential() { return {}; }
  static ForwardSpec fpi(std::size_t rho) { return {Kind::fpi, rho}; }

  /// "sequential" or "fpi:<rho>".
  static ForwardSpec parse(std::string_view text);
  std::string to_string() const;
};

HistoryBlock history_states(std::span<const TokenId> inputs, std::span<const double> h0,
                            const ModelParams& p, const ForwardSpec& forward);

/// Total NLL over every sentence with h0 = 0 at each sentence start.
/// Sentences are scored concurrently; the total is summed in corpus order.
NllResult corpus_nll(const EncodedCorpus& corpus, const ModelParams& p, const ForwardSpec& forward,
                     int workers = 1);

/// exp(total NLL / |D|). Throws DataError on an empty corpus.
double perplexity(const EncodedCorpus& corpus, const ModelParams& p, const ForwardSpec& forward,
                  int workers = 1);

}  // namespace fixpoint
