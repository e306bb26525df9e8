#pragma once

// Fixed-point iteration over the stacked history block.
//
// The recurrence for a sequence of T inputs can be written as one equation
// h_hat = phi_hat(W_hat h_hat + V_hat x_hat) over the (T+1) x H block, where
// W_hat has an identity block in the top-left corner and W on its first
// sub-diagonal, and V_hat is block-diagonal with a zero first block. The
// block matrices are never formed: one iteration maps every row t >= 1 to
// phi(W old[t-1] + V x[t-1]) and copies row 0.
//
// Because W_hat is strictly lower triangular below row 0, iteration n makes
// rows 0..n exact regardless of how rows >= 1 were initialised, and the
// iteration reaches the recurrence's states exactly after T steps.

#include <cstddef>
#include <span>

#include "fixpoint/elman.hpp"

namespace fixpoint {

struct FpiState {
  HistoryBlock block;
  std::size_t iteration = 0;
  double residual = 0.0;  // sup-norm of the last update
};

enum class FpiInit { zeros, copy_h0 };

/// Fresh state for `length` inputs: row 0 is h0, rows >= 1 per `init`.
FpiState fpi_start(std::size_t length, std::span<const double> h0, FpiInit init);

/// State whose rows >= 1 come from `init_block`; row 0 is replaced by h0.
FpiState fpi_start(HistoryBlock init_block, std::span<const double> h0);

/// One Jacobi update of all rows, reading only `old`. Rows are distributed
/// over `workers` OpenMP threads; the result does not depend on the worker
/// count. Writes pre-activations to `z` when non-null. Returns the residual.
double fpi_update_into(const HistoryBlock& old, std::span<const TokenId> inputs,
                       const ModelParams& p, HistoryBlock& next, Matrix* z = nullptr,
                       int workers = 1);

/// Serial reference for fpi_update_into.
double fpi_update_serial(const HistoryBlock& old, std::span<const TokenId> inputs,
                         const ModelParams& p, HistoryBlock& next, Matrix* z = nullptr);

FpiState fpi_iterate(const FpiState& state, std::span<const TokenId> inputs, const ModelParams& p,
                     int workers = 1);

/// Applies `rho` iterations. Once T iterations have run the block is the exact
/// fixed point and further updates are the identity, so they are skipped; the
/// returned state still reports iteration == rho.
FpiState fpi_solve(std::span<const TokenId> inputs, std::span<const double> h0, std::size_t rho,
                   const ModelParams& p, FpiInit init = FpiInit::zeros, int workers = 1);
FpiState fpi_solve(std::span<const TokenId> inputs, std::span<const double> h0, std::size_t rho,
                   const ModelParams& p, HistoryBlock init_block, int workers = 1);

/// Residual after each of `n_max` iterations from a zeros start.
std::vector<double> residual_curve(std::span<const TokenId> inputs, std::span<const double> h0,
                                   const ModelParams& p, std::size_t n_max, int workers = 1);

/// Largest singular value of W by power iteration on W^T W.
double spectral_norm(const Matrix& w, std::size_t iterations = 200);

}  // namespace fixpoint
