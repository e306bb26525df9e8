#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "fixpoint/corpus.hpp"
#include "fixpoint/elman.hpp"

namespace fixpoint {

/// Gradient accumulators shaped like ModelParams, plus the summed NLL and
/// word count they were accumulated over.
struct GradientSet {
  Matrix dW, dV, dU;
  Vector db_hidden, db_out;
  Matrix dembedding;
  double loss = 0.0;
  std::size_t words = 0;

  static GradientSet zeros_like(const ModelParams& p);

  /// Same order as ModelParams::tensors().
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  void zero();
  void add(const GradientSet& other);
  void scale(double s);
  double norm() const;
  bool finite() const;
};

/// bptt: exact gradient through the sequential recurrence.
/// fpi_full: differentiate through every unrolled fixed-point iteration.
/// fpi_detached: each iteration's input block is a constant.
struct GradMode {
  enum class Kind { bptt, fpi_full, fpi_detached };
  Kind kind = Kind::bptt;
  std::size_t rho = 0;

  static GradMode bptt() { return {}; }
  static GradMode fpi(std::size_t rho, bool detach);

  /// name in {bptt, fpi, fpi-detach}; rho is ignored for bptt.
  static GradMode parse(std::string_view name, std::size_t rho);
  std::string name() const;
  bool is_fpi() const { return kind != Kind::bptt; }
};

/// Adds the gradient of -sum_t log P(targets[t-1] | h_t) for one sentence to
/// `g`, with h_0 = 0 and inputs = bos followed by targets[0..T-2].
void accumulate_sequence_gradients(std::span<const TokenId> targets, TokenId bos,
                                   const ModelParams& p, const GradMode& mode, GradientSet& g);

/// Loss of one sentence under the forward pass that `mode` trains.
double sequence_loss(std::span<const TokenId> targets, TokenId bos, const ModelParams& p,
                     const GradMode& mode);

/// Reusable per-sequence accumulators for batch_gradients.
class GradWorkspace {
 public:
  std::vector<GradientSet>& slots(const ModelParams& p, std::size_t n);

 private:
  std::vector<GradientSet> slots_;
};

/// Gradient of the summed masked NLL of a batch. Sequences run concurrently
/// on `workers` threads, each into a private GradientSet; the sets are then
/// summed pairwise in a fixed tree order, so the result is independent of
/// the worker count.
GradientSet batch_gradients(const Batch& batch, const ModelParams& p, const GradMode& mode,
                            int workers = 1, GradWorkspace* workspace = nullptr);

GradientSet bptt_gradients(const Batch& batch, const ModelParams& p, int workers = 1);
GradientSet fpi_gradients(const Batch& batch, const ModelParams& p, std::size_t rho, bool detach,
                          int workers = 1);

/// Summed masked NLL of a batch under `mode`'s forward pass.
double batch_loss(const Batch& batch, const ModelParams& p, const GradMode& mode);

/// sets[0] += sets[1] + ... in a fixed pairwise tree order.
void tree_reduce(std::vector<GradientSet>& sets, std::size_t count, int workers = 1);

using LossFn = std::function<double(const ModelParams&)>;

/// Maximum entrywise relative error |a - d| / max(|a|, |d|, 1e-8) between
/// `analytic` and central differences of `loss_fn` with the given step.
/// When the model has more than `max_entries` entries (0 = no limit) a
/// seeded random subset of that size is checked.
double finite_difference_check(const LossFn& loss_fn, const ModelParams& params,
                               const GradientSet& analytic, double step,
                               std::size_t max_entries = 0, std::uint64_t seed = 0);

}  // namespace fixpoint
