#include "fixpoint/elman.hpp"

#include <string>

namespace fixpoint {

ModelParams ModelParams::zeros(std::size_t hidden, std::size_t vocab, Activation act, bool bias,
                               std::size_t embedding_dim) {
  if (embedding_dim == vocab) {
    throw ShapeError("embedding dimension must differ from the vocabulary size (E == |V| is one-hot mode)");
  }
  ModelParams p;
  p.activation = act;
  const std::size_t e = embedding_dim == 0 ? vocab : embedding_dim;
  p.W = Matrix(hidden, hidden);
  p.V = Matrix(hidden, e);
  p.U = Matrix(vocab, hidden);
  if (bias) {
    p.b_hidden.assign(hidden, 0.0);
    p.b_out.assign(vocab, 0.0);
  }
  if (embedding_dim != 0) p.embedding = Matrix(embedding_dim, vocab);
  return p;
}

void ModelParams::validate() const {
  const std::size_t h = hidden();
  auto fail = [](const std::string& what) { throw ShapeError("model parameters: " + what); };
  if (W.cols != h) fail("W " + W.shape() + " is not square");
  if (V.rows != h) fail("V " + V.shape() + " does not match W " + W.shape());
  if (U.cols != h) fail("U " + U.shape() + " does not match W " + W.shape());
  if (has_bias()) {
    if (b_hidden.size() != h) fail("b_hidden has dim " + std::to_string(b_hidden.size()));
    if (b_out.size() != vocab()) fail("b_out has dim " + std::to_string(b_out.size()));
  } else if (!b_out.empty()) {
    fail("b_out present without b_hidden");
  }
  if (one_hot()) {
    if (V.cols != vocab()) fail("one-hot V " + V.shape() + " needs |V| = " + std::to_string(vocab()) + " columns");
  } else {
    if (embedding.rows != V.cols || embedding.cols != vocab()) {
      fail("embedding " + embedding.shape() + " does not match V " + V.shape() + " and U " + U.shape());
    }
  }
}

std::vector<std::span<double>> ModelParams::tensors() {
  std::vector<std::span<double>> out{W.data, V.data, U.data};
  if (has_bias()) {
    out.emplace_back(b_hidden);
    out.emplace_back(b_out);
  }
  if (!one_hot()) out.emplace_back(embedding.data);
  return out;
}

std::vector<std::span<const double>> ModelParams::tensors() const {
  std::vector<std::span<const double>> out{W.data, V.data, U.data};
  if (has_bias()) {
    out.emplace_back(b_hidden);
    out.emplace_back(b_out);
  }
  if (!one_hot()) out.emplace_back(embedding.data);
  return out;
}

std::vector<std::string_view> ModelParams::tensor_names() const {
  std::vector<std::string_view> out{"W", "V", "U"};
  if (has_bias()) {
    out.emplace_back("b_hidden");
    out.emplace_back("b_out");
  }
  if (!one_hot()) out.emplace_back("embedding");
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (auto t : tensors()) n += t.size();
  return n;
}

void preactivation_into(const ModelParams& p, std::span<const double> h_prev, TokenId x,
                        std::span<double> z) {
  matvec_into(p.W, h_prev, z);
  const std::size_t h = p.hidden();
  if (p.one_hot()) {
    for (std::size_t i = 0; i < h; ++i) z[i] += p.V(i, x);
  } else {
    const std::size_t e = p.input_dim();
    for (std::size_t i = 0; i < h; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < e; ++k) acc += p.V(i, k) * p.embedding(k, x);
      z[i] += acc;
    }
  }
  if (p.has_bias()) {
    for (std::size_t i = 0; i < h; ++i) z[i] += p.b_hidden[i];
  }
}

void step_into(const ModelParams& p, std::span<const double> h_prev, TokenId x,
               std::span<double> z, std::span<double> h) {
  preactivation_into(p, h_prev, x, z);
  for (std::size_t i = 0; i < z.size(); ++i) h[i] = activate(p.activation, z[i]);
}

namespace {

void check_history(const ModelParams& p, std::size_t dim) {
  if (dim != p.hidden()) {
    throw ShapeError("history vector of dim " + std::to_string(dim) + " incompatible with W " +
                     p.W.shape());
  }
}

void check_token(const ModelParams& p, TokenId x) {
  if (x >= p.vocab()) {
    throw ShapeError("token id " + std::to_string(x) + " out of range for |V| = " +
                     std::to_string(p.vocab()));
  }
}

}  // namespace

Vector forward_step(std::span<const double> h_prev, TokenId x, const ModelParams& p) {
  check_history(p, h_prev.size());
  check_token(p, x);
  Vector z(p.hidden()), h(p.hidden());
  step_into(p, h_prev, x, z, h);
  return h;
}

Vector forward_step(std::span<const double> h_prev, std::span<const double> x,
                    const ModelParams& p) {
  check_history(p, h_prev.size());
  if (x.size() != p.input_dim()) {
    throw ShapeError("input vector of dim " + std::to_string(x.size()) + " incompatible with V " +
                     p.V.shape());
  }
  const std::size_t h = p.hidden();
  Vector z(h), vx(h);
  matvec_into(p.W, h_prev, z);
  matvec_into(p.V, x, vx);
  for (std::size_t i = 0; i < h; ++i) {
    z[i] += vx[i];
    if (p.has_bias()) z[i] += p.b_hidden[i];
  }
  return activation(p.activation, z);
}

HistoryBlock sequential_forward(std::span<const TokenId> inputs, std::span<const double> h0,
                                const ModelParams& p) {
  check_history(p, h0.size());
  for (TokenId x : inputs) check_token(p, x);
  HistoryBlock block(inputs.size(), p.hidden());
  std::copy(h0.begin(), h0.end(), block.row(0).begin());
  Vector z(p.hidden());
  for (std::size_t t = 1; t <= inputs.size(); ++t) {
    step_into(p, block.row(t - 1), inputs[t - 1], z, block.row(t));
  }
  return block;
}

void predict_log_probs_into(std::span<const double> h, const ModelParams& p,
                            std::span<double> logits, std::span<double> log_probs) {
  matvec_into(p.U, h, logits);
  if (p.has_bias()) {
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += p.b_out[i];
  }
  log_softmax_into(logits, log_probs);
}

Vector predict_log_probs(std::span<const double> h, const ModelParams& p) {
  check_history(p, h.size());
  Vector logits(p.vocab()), out(p.vocab());
  predict_log_probs_into(h, p, logits, out);
  return out;
}

NllResult block_nll(const HistoryBlock& block, std::span<const TokenId> targets,
                    const ModelParams& p) {
  if (block.length() != targets.size()) {
    throw ShapeError("history block of length " + std::to_string(block.length()) +
                     " does not match " + std::to_string(targets.size()) + " targets");
  }
  NllResult r;
  Vector logits(p.vocab()), lp(p.vocab());
  for (std::size_t t = 1; t <= targets.size(); ++t) {
    check_token(p, targets[t - 1]);
    predict_log_probs_into(block.row(t), p, logits, lp);
    r.nll -= lp[targets[t - 1]];
  }
  r.words = targets.size();
  return r;
}

NllResult sequence_nll(std::span<const TokenId> targets, TokenId bos, std::span<const double> h0,
                       const ModelParams& p) {
  const auto inputs = shift_inputs(targets, bos);
  return block_nll(sequential_forward(inputs, h0, p), targets, p);
}

}  // namespace fixpoint
