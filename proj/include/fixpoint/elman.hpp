#pragma once

// Elman recurrence h_t = phi(W h_{t-1} + V x_{t-1} [+ b]) with a softmax
// output layer log P(w_t | h_t) = log_softmax(U h_t [+ c]).

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "fixpoint/corpus.hpp"
#include "fixpoint/numerics.hpp"

namespace fixpoint {

/// Trainable parameters. In one-hot mode (no embedding) V is H x |V| and
/// V x_{t-1} is column x_{t-1} of V. With an embedding, V is H x E and the
/// input vector is column x_{t-1} of the E x |V| embedding.
struct ModelParams {
  Activation activation = Activation::tanh;
  Matrix W;          // H x H
  Matrix V;          // H x E
  Matrix U;          // |V| x H
  Vector b_hidden;   // H, empty unless biases are enabled
  Vector b_out;      // |V|, empty unless biases are enabled
  Matrix embedding;  // E x |V|, empty in one-hot mode

  static ModelParams zeros(std::size_t hidden, std::size_t vocab, Activation act = Activation::tanh,
                           bool bias = false, std::size_t embedding_dim = 0);

  std::size_t hidden() const { return W.rows; }
  std::size_t input_dim() const { return V.cols; }
  std::size_t vocab() const { return U.rows; }
  bool has_bias() const { return !b_hidden.empty(); }
  bool one_hot() const { return embedding.empty(); }

  /// Throws ShapeError if the parameter shapes are inconsistent.
  void validate() const;

  /// Every trainable tensor in a fixed order: W, V, U, b_hidden, b_out,
  /// embedding. Absent tensors are omitted.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::vector<std::string_view> tensor_names() const;
  std::size_t parameter_count() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// The (T+1) x H stack of history states; row t is h_t.
struct HistoryBlock {
  Matrix states;

  HistoryBlock() = default;
  HistoryBlock(std::size_t length, std::size_t hidden) : states(length + 1, hidden) {}

  std::size_t length() const { return states.rows == 0 ? 0 : states.rows - 1; }
  std::size_t hidden() const { return states.cols; }
  std::span<double> row(std::size_t t) { return states.row(t); }
  std::span<const double> row(std::size_t t) const { return states.row(t); }

  friend bool operator==(const HistoryBlock&, const HistoryBlock&) = default;
};

/// Pre-activation z = W h_prev + V x + b written to `z`. This is the only
/// place the recurrence arithmetic lives; the sequential and fixed-point
/// engines both call it so their results agree bit for bit.
void preactivation_into(const ModelParams& p, std::span<const double> h_prev, TokenId x,
                        std::span<double> z);

/// h = phi(z) for z from preactivation_into.
void step_into(const ModelParams& p, std::span<const double> h_prev, TokenId x,
               std::span<double> z, std::span<double> h);

Vector forward_step(std::span<const double> h_prev, TokenId x, const ModelParams& p);

/// Dense-input variant: x is an E-dimensional vector (the one-hot vector
/// itself in one-hot mode).
Vector forward_step(std::span<const double> h_prev, std::span<const double> x,
                    const ModelParams& p);

/// Runs the recurrence over `inputs` from h0. Row 0 is h0.
HistoryBlock sequential_forward(std::span<const TokenId> inputs, std::span<const double> h0,
                                const ModelParams& p);

/// log_softmax(U h [+ c]).
Vector predict_log_probs(std::span<const double> h, const ModelParams& p);
void predict_log_probs_into(std::span<const double> h, const ModelParams& p,
                            std::span<double> logits, std::span<double> log_probs);

struct NllResult {
  double nll = 0.0;  // nats
  std::size_t words = 0;
};

/// -sum_t log P(targets[t-1] | row t of `block`).
NllResult block_nll(const HistoryBlock& block, std::span<const TokenId> targets,
                    const ModelParams& p);

/// Negative log-likelihood of `targets` under the sequential recurrence with
/// inputs = bos followed by targets[0..T-2].
NllResult sequence_nll(std::span<const TokenId> targets, TokenId bos, std::span<const double> h0,
                       const ModelParams& p);

/// Checkpoint format: text header line
/// `fixpoint-model v1 H E |V| activation bias_flag` followed by W, V, U,
/// [b_hidden, b_out], [embedding] as little-endian float64, row-major.
/// An embedding is present exactly when E != |V|.
void save_model(std::ostream& out, const ModelParams& p);
void save_model(const std::filesystem::path& path, const ModelParams& p);
ModelParams load_model(std::istream& in);
ModelParams load_model(const std::filesystem::path& path);

/// Raw float64 layout shared by the model and optimizer files.
void write_tensors(std::ostream& out, const std::vector<std::span<const double>>& tensors);
void read_tensors(std::istream& in, const std::vector<std::span<double>>& tensors);

/// Write to `path` via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer);

}  // namespace fixpoint
