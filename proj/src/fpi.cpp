#include "fixpoint/fpi.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <string>

namespace fixpoint {

namespace {

void check_block(const HistoryBlock& b, std::span<const TokenId> inputs, const ModelParams& p) {
  if (b.length() != inputs.size() || b.hidden() != p.hidden()) {
    throw ShapeError("history block " + b.states.shape() + " incompatible with " +
                     std::to_string(inputs.size()) + " inputs and H = " +
                     std::to_string(p.hidden()));
  }
  for (TokenId x : inputs) {
    if (x >= p.vocab()) throw ShapeError("token id " + std::to_string(x) + " out of range");
  }
}

double row_update(const HistoryBlock& old, std::span<const TokenId> inputs, const ModelParams& p,
                  HistoryBlock& next, Matrix* z, std::span<double> zbuf, std::size_t t) {
  std::span<double> zt = z ? z->row(t) : zbuf;
  auto out = next.row(t);
  step_into(p, old.row(t - 1), inputs[t - 1], zt, out);
  return max_abs_diff(out, old.row(t));
}

}  // namespace

FpiState fpi_start(std::size_t length, std::span<const double> h0, FpiInit init) {
  FpiState s;
  s.block = HistoryBlock(length, h0.size());
  for (std::size_t t = 0; t <= length; ++t) {
    if (t == 0 || init == FpiInit::copy_h0) std::copy(h0.begin(), h0.end(), s.block.row(t).begin());
  }
  return s;
}

FpiState fpi_start(HistoryBlock init_block, std::span<const double> h0) {
  if (init_block.hidden() != h0.size() || init_block.states.rows == 0) {
    throw ShapeError("initial block " + init_block.states.shape() + " incompatible with h0 of dim " +
                     std::to_string(h0.size()));
  }
  FpiState s;
  s.block = std::move(init_block);
  std::copy(h0.begin(), h0.end(), s.block.row(0).begin());
  return s;
}

double fpi_update_serial(const HistoryBlock& old, std::span<const TokenId> inputs,
                         const ModelParams& p, HistoryBlock& next, Matrix* z) {
  check_block(old, inputs, p);
  if (next.states.rows != old.states.rows || next.hidden() != old.hidden()) next = HistoryBlock(old.length(), old.hidden());
  std::copy(old.row(0).begin(), old.row(0).end(), next.row(0).begin());
  Vector zbuf(p.hidden());
  double residual = 0.0;
  for (std::size_t t = 1; t <= inputs.size(); ++t) {
    residual = std::max(residual, row_update(old, inputs, p, next, z, zbuf, t));
  }
  return residual;
}

double fpi_update_into(const HistoryBlock& old, std::span<const TokenId> inputs,
                       const ModelParams& p, HistoryBlock& next, Matrix* z, int workers) {
  if (workers <= 1) return fpi_update_serial(old, inputs, p, next, z);
  check_block(old, inputs, p);
  if (next.states.rows != old.states.rows || next.hidden() != old.hidden()) next = HistoryBlock(old.length(), old.hidden());
  std::copy(old.row(0).begin(), old.row(0).end(), next.row(0).begin());
  const auto n = static_cast<std::ptrdiff_t>(inputs.size());
  double residual = 0.0;
#pragma omp parallel num_threads(workers) reduction(max : residual)
  {
    Vector zbuf(p.hidden());
#pragma omp for schedule(static)
    for (std::ptrdiff_t t = 1; t <= n; ++t) {
      residual = std::max(residual,
                          row_update(old, inputs, p, next, z, zbuf, static_cast<std::size_t>(t)));
    }
  }
  return residual;
}

FpiState fpi_iterate(const FpiState& state, std::span<const TokenId> inputs, const ModelParams& p,
                     int workers) {
  FpiState next;
  next.block = HistoryBlock(state.block.length(), state.block.hidden());
  next.residual = fpi_update_into(state.block, inputs, p, next.block, nullptr, workers);
  next.iteration = state.iteration + 1;
  return next;
}

namespace {

FpiState solve_from(FpiState state, std::span<const TokenId> inputs, std::size_t rho,
                    const ModelParams& p, int workers) {
  check_block(state.block, inputs, p);
  const std::size_t T = inputs.size();
  HistoryBlock scratch(T, p.hidden());
  const std::size_t start = state.iteration;
  for (std::size_t n = 0; n < rho; ++n) {
    // After T updates every row is exact and further updates reproduce the
    // block bit for bit with residual 0.
    if (n >= T) {
      state.iteration = start + rho;
      state.residual = 0.0;
      break;
    }
    state.residual = fpi_update_into(state.block, inputs, p, scratch, nullptr, workers);
    std::swap(state.block, scratch);
    ++state.iteration;
  }
  return state;
}

}  // namespace

FpiState fpi_solve(std::span<const TokenId> inputs, std::span<const double> h0, std::size_t rho,
                   const ModelParams& p, FpiInit init, int workers) {
  if (h0.size() != p.hidden()) throw ShapeError("h0 dim " + std::to_string(h0.size()) + " != H");
  return solve_from(fpi_start(inputs.size(), h0, init), inputs, rho, p, workers);
}

FpiState fpi_solve(std::span<const TokenId> inputs, std::span<const double> h0, std::size_t rho,
                   const ModelParams& p, HistoryBlock init_block, int workers) {
  if (h0.size() != p.hidden()) throw ShapeError("h0 dim " + std::to_string(h0.size()) + " != H");
  return solve_from(fpi_start(std::move(init_block), h0), inputs, rho, p, workers);
}

std::vector<double> residual_curve(std::span<const TokenId> inputs, std::span<const double> h0,
                                   const ModelParams& p, std::size_t n_max, int workers) {
  if (n_max == 0) throw std::invalid_argument("residual_curve needs n_max >= 1");
  std::vector<double> out;
  out.reserve(n_max);
  FpiState s = fpi_start(inputs.size(), h0, FpiInit::zeros);
  HistoryBlock scratch(inputs.size(), p.hidden());
  for (std::size_t n = 0; n < n_max; ++n) {
    s.residual = fpi_update_into(s.block, inputs, p, scratch, nullptr, workers);
    std::swap(s.block, scratch);
    out.push_back(s.residual);
  }
  return out;
}

double spectral_norm(const Matrix& w, std::size_t iterations) {
  if (w.empty()) return 0.0;
  Vector v(w.cols, 1.0 / std::sqrt(static_cast<double>(w.cols)));
  Vector wv(w.rows);
  double sigma = 0.0;
  for (std::size_t k = 0; k < iterations; ++k) {
    matvec_into(w, v, wv);
    Vector wtwv(w.cols, 0.0);
    matvec_transpose_accumulate(w, wv, wtwv);
    const double norm = std::sqrt(dot(wtwv, wtwv));
    if (norm == 0.0) return 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = wtwv[j] / norm;
    sigma = std::sqrt(norm);
  }
  return sigma;
}

}  // namespace fixpoint
