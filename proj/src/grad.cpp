#include "fixpoint/grad.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "fixpoint/fpi.hpp"
#include "fixpoint/parallel.hpp"

namespace fixpoint {

GradientSet GradientSet::zeros_like(const ModelParams& p) {
  GradientSet g;
  g.dW = Matrix(p.W.rows, p.W.cols);
  g.dV = Matrix(p.V.rows, p.V.cols);
  g.dU = Matrix(p.U.rows, p.U.cols);
  g.db_hidden.assign(p.b_hidden.size(), 0.0);
  g.db_out.assign(p.b_out.size(), 0.0);
  g.dembedding = Matrix(p.embedding.rows, p.embedding.cols);
  return g;
}

std::vector<std::span<double>> GradientSet::tensors() {
  std::vector<std::span<double>> out{dW.data, dV.data, dU.data};
  if (!db_hidden.empty()) {
    out.emplace_back(db_hidden);
    out.emplace_back(db_out);
  }
  if (!dembedding.empty()) out.emplace_back(dembedding.data);
  return out;
}

std::vector<std::span<const double>> GradientSet::tensors() const {
  std::vector<std::span<const double>> out{dW.data, dV.data, dU.data};
  if (!db_hidden.empty()) {
    out.emplace_back(db_hidden);
    out.emplace_back(db_out);
  }
  if (!dembedding.empty()) out.emplace_back(dembedding.data);
  return out;
}

void GradientSet::zero() {
  for (auto t : tensors()) std::fill(t.begin(), t.end(), 0.0);
  loss = 0.0;
  words = 0;
}

void GradientSet::add(const GradientSet& other) {
  auto mine = tensors();
  auto theirs = other.tensors();
  if (mine.size() != theirs.size()) throw ShapeError("gradient sets have different layouts");
  for (std::size_t k = 0; k < mine.size(); ++k) {
    if (mine[k].size() != theirs[k].size()) throw ShapeError("gradient tensor size mismatch");
    for (std::size_t j = 0; j < mine[k].size(); ++j) mine[k][j] += theirs[k][j];
  }
  loss += other.loss;
  words += other.words;
}

void GradientSet::scale(double s) {
  for (auto t : tensors()) {
    for (double& v : t) v *= s;
  }
}

double GradientSet::norm() const {
  double sq = 0.0;
  for (auto t : tensors()) {
    for (double v : t) sq += v * v;
  }
  return std::sqrt(sq);
}

bool GradientSet::finite() const {
  for (auto t : tensors()) {
    if (!all_finite(t)) return false;
  }
  return std::isfinite(loss);
}

GradMode GradMode::fpi(std::size_t rho, bool detach) {
  if (rho == 0) throw std::invalid_argument("fixed-point gradient modes need rho >= 1");
  return {detach ? Kind::fpi_detached : Kind::fpi_full, rho};
}

GradMode GradMode::parse(std::string_view name, std::size_t rho) {
  if (name == "bptt") return bptt();
  if (name == "fpi") return fpi(rho, false);
  if (name == "fpi-detach") return fpi(rho, true);
  throw std::invalid_argument("grad mode must be bptt, fpi or fpi-detach, got '" +
                              std::string(name) + "'");
}

std::string GradMode::name() const {
  switch (kind) {
    case Kind::bptt:
      return "bptt";
    case Kind::fpi_full:
      return "fpi";
    case Kind::fpi_detached:
      return "fpi-detach";
  }
  return "bptt";
}

namespace {

double deriv_from_output(Activation kind, double y) {
  return kind == Activation::tanh ? 1.0 - y * y : y * (1.0 - y);
}

struct OutputScratch {
  Vector logits, log_probs, dlogits;
  explicit OutputScratch(std::size_t vocab) : logits(vocab), log_probs(vocab), dlogits(vocab) {}
};

/// NLL of target `y` at history `h`; adds output-layer gradients to `g` and
/// writes dL/dh to `dh`.
double output_backward(const ModelParams& p, std::span<const double> h, TokenId y,
                       GradientSet& g, std::span<double> dh, OutputScratch& s) {
  predict_log_probs_into(h, p, s.logits, s.log_probs);
  for (std::size_t i = 0; i < s.dlogits.size(); ++i) s.dlogits[i] = std::exp(s.log_probs[i]);
  s.dlogits[y] -= 1.0;
  outer_accumulate(g.dU, s.dlogits, h);
  if (p.has_bias()) {
    for (std::size_t i = 0; i < s.dlogits.size(); ++i) g.db_out[i] += s.dlogits[i];
  }
  std::fill(dh.begin(), dh.end(), 0.0);
  matvec_transpose_accumulate(p.U, s.dlogits, dh);
  return -s.log_probs[y];
}

/// dz = dh * phi'(z), using h = phi(z).
void preactivation_grad(const ModelParams& p, std::span<const double> dh,
                        std::span<const double> h, std::span<double> dz) {
  for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = dh[i] * deriv_from_output(p.activation, h[i]);
}

/// Gradients of one application of W h_prev + V x + b given dz.
void recurrence_param_grads(const ModelParams& p, std::span<const double> dz,
                            std::span<const double> h_prev, TokenId x, GradientSet& g) {
  outer_accumulate(g.dW, dz, h_prev);
  const std::size_t hdim = p.hidden();
  if (p.one_hot()) {
    for (std::size_t i = 0; i < hdim; ++i) g.dV(i, x) += dz[i];
  } else {
    const std::size_t e = p.input_dim();
    for (std::size_t i = 0; i < hdim; ++i) {
      for (std::size_t k = 0; k < e; ++k) g.dV(i, k) += dz[i] * p.embedding(k, x);
    }
    for (std::size_t k = 0; k < e; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < hdim; ++i) acc += p.V(i, k) * dz[i];
      g.dembedding(k, x) += acc;
    }
  }
  if (p.has_bias()) {
    for (std::size_t i = 0; i < hdim; ++i) g.db_hidden[i] += dz[i];
  }
}

void bptt_sequence(std::span<const TokenId> targets, std::span<const TokenId> inputs,
                   const ModelParams& p, GradientSet& g) {
  const std::size_t T = targets.size();
  const std::size_t hdim = p.hidden();
  const Vector h0(hdim, 0.0);
  const HistoryBlock block = sequential_forward(inputs, h0, p);

  OutputScratch s(p.vocab());
  Matrix dh_out(T + 1, hdim);
  double loss = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    loss += output_backward(p, block.row(t), targets[t - 1], g, dh_out.row(t), s);
  }

  Vector carry(hdim, 0.0), dh(hdim), dz(hdim);
  for (std::size_t t = T; t >= 1; --t) {
    for (std::size_t i = 0; i < hdim; ++i) dh[i] = dh_out(t, i) + carry[i];
    preactivation_grad(p, dh, block.row(t), dz);
    recurrence_param_grads(p, dz, block.row(t - 1), inputs[t - 1], g);
    std::fill(carry.begin(), carry.end(), 0.0);
    matvec_transpose_accumulate(p.W, dz, carry);
  }
  g.loss += loss;
  g.words += T;
}

void fpi_sequence(std::span<const TokenId> targets, std::span<const TokenId> inputs,
                  const ModelParams& p, std::size_t rho, bool detach, GradientSet& g) {
  const std::size_t T = targets.size();
  const std::size_t hdim = p.hidden();
  const Vector h0(hdim, 0.0);
  // Iterates past T reproduce iterate T exactly, both as values and as
  // functions of the parameters, so unrolling min(rho, T) iterations gives
  // the same loss and gradient in either mode.
  const std::size_t n_iter = std::min(rho, T);

  std::vector<HistoryBlock> iterates;
  iterates.reserve(n_iter + 1);
  iterates.push_back(fpi_start(T, h0, FpiInit::zeros).block);
  for (std::size_t n = 1; n <= n_iter; ++n) {
    HistoryBlock next(T, hdim);
    fpi_update_serial(iterates.back(), inputs, p, next);
    iterates.push_back(std::move(next));
  }
  const HistoryBlock& final_block = iterates.back();

  OutputScratch s(p.vocab());
  Matrix adj(T + 1, hdim);
  double loss = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    loss += output_backward(p, final_block.row(t), targets[t - 1], g, adj.row(t), s);
  }

  Matrix adj_prev(T + 1, hdim);
  Vector dz(hdim);
  for (std::size_t n = n_iter; n >= 1; --n) {
    const bool propagate = !detach && n > 1;
    if (propagate) adj_prev.fill(0.0);
    const HistoryBlock& out = iterates[n];
    const HistoryBlock& in = iterates[n - 1];
    for (std::size_t t = 1; t <= T; ++t) {
      preactivation_grad(p, adj.row(t), out.row(t), dz);
      recurrence_param_grads(p, dz, in.row(t - 1), inputs[t - 1], g);
      // Row 0 of every iterate is the constant h0.
      if (propagate && t >= 2) matvec_transpose_accumulate(p.W, dz, adj_prev.row(t - 1));
    }
    if (!propagate) break;
    std::swap(adj, adj_prev);
  }
  g.loss += loss;
  g.words += T;
}

}  // namespace

void accumulate_sequence_gradients(std::span<const TokenId> targets, TokenId bos,
                                   const ModelParams& p, const GradMode& mode, GradientSet& g) {
  if (targets.empty()) return;
  const auto inputs = shift_inputs(targets, bos);
  for (TokenId y : targets) {
    if (y >= p.vocab()) throw ShapeError("target id " + std::to_string(y) + " out of range");
  }
  if (bos >= p.vocab()) throw ShapeError("bos id out of range");
  if (mode.kind == GradMode::Kind::bptt) {
    bptt_sequence(targets, inputs, p, g);
  } else {
    fpi_sequence(targets, inputs, p, mode.rho, mode.kind == GradMode::Kind::fpi_detached, g);
  }
}

double sequence_loss(std::span<const TokenId> targets, TokenId bos, const ModelParams& p,
                     const GradMode& mode) {
  const Vector h0(p.hidden(), 0.0);
  if (mode.kind == GradMode::Kind::bptt) return sequence_nll(targets, bos, h0, p).nll;
  const auto inputs = shift_inputs(targets, bos);
  return block_nll(fpi_solve(inputs, h0, mode.rho, p).block, targets, p).nll;
}

std::vector<GradientSet>& GradWorkspace::slots(const ModelParams& p, std::size_t n) {
  if (slots_.size() < n) slots_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = slots_[i];
    if (s.dW.size() != p.W.size() || s.dV.size() != p.V.size() || s.dU.size() != p.U.size() ||
        s.db_hidden.size() != p.b_hidden.size() || s.dembedding.size() != p.embedding.size()) {
      s = GradientSet::zeros_like(p);
    }
  }
  return slots_;
}

void tree_reduce(std::vector<GradientSet>& sets, std::size_t count, int workers) {
  for (std::size_t stride = 1; stride < count; stride *= 2) {
    const std::size_t pairs = (count + 2 * stride - 1) / (2 * stride);
    parallel_for(pairs, workers, [&](std::size_t k) {
      const std::size_t i = k * 2 * stride;
      if (i + stride < count) sets[i].add(sets[i + stride]);
    });
  }
}

GradientSet batch_gradients(const Batch& batch, const ModelParams& p, const GradMode& mode,
                            int workers, GradWorkspace* workspace) {
  if (batch.rows == 0) return GradientSet::zeros_like(p);
  GradWorkspace local;
  GradWorkspace& ws = workspace ? *workspace : local;
  auto& slots = ws.slots(p, batch.rows);
  parallel_for(batch.rows, workers, [&](std::size_t r) {
    slots[r].zero();
    accumulate_sequence_gradients(batch.row(r), batch.bos, p, mode, slots[r]);
  });
  tree_reduce(slots, batch.rows, workers);
  return slots[0];
}

GradientSet bptt_gradients(const Batch& batch, const ModelParams& p, int workers) {
  return batch_gradients(batch, p, GradMode::bptt(), workers);
}

GradientSet fpi_gradients(const Batch& batch, const ModelParams& p, std::size_t rho, bool detach,
                          int workers) {
  return batch_gradients(batch, p, GradMode::fpi(rho, detach), workers);
}

double batch_loss(const Batch& batch, const ModelParams& p, const GradMode& mode) {
  double total = 0.0;
  for (std::size_t r = 0; r < batch.rows; ++r) total += sequence_loss(batch.row(r), batch.bos, p, mode);
  return total;
}

double finite_difference_check(const LossFn& loss_fn, const ModelParams& params,
                               const GradientSet& analytic, double step, std::size_t max_entries,
                               std::uint64_t seed) {
  if (!(step > 0.0)) throw std::invalid_argument("finite difference step must be positive");
  ModelParams theta = params;
  auto tensors = theta.tensors();
  const auto grads = analytic.tensors();
  if (tensors.size() != grads.size()) throw ShapeError("gradient layout does not match parameters");

  std::vector<std::pair<std::size_t, std::size_t>> entries;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    if (tensors[k].size() != grads[k].size()) throw ShapeError("gradient tensor size mismatch");
    for (std::size_t j = 0; j < tensors[k].size(); ++j) entries.emplace_back(k, j);
  }
  if (max_entries != 0 && entries.size() > max_entries) {
    std::vector<std::pair<std::size_t, std::size_t>> subset;
    std::mt19937_64 rng(seed);
    std::sample(entries.begin(), entries.end(), std::back_inserter(subset), max_entries, rng);
    entries = std::move(subset);
  }

  auto eval = [&]() {
    const double f = loss_fn(theta);
    if (!std::isfinite(f)) throw std::domain_error("finite difference check: non-finite loss");
    return f;
  };
  eval();

  double worst = 0.0;
  for (auto [k, j] : entries) {
    double& x = tensors[k][j];
    const double orig = x;
    x = orig + step;
    const double fp = eval();
    x = orig - step;
    const double fm = eval();
    x = orig;
    const double numeric = (fp - fm) / (2.0 * step);
    const double a = grads[k][j];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace fixpoint
