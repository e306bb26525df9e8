#pragma once

// Dense linear algebra and activation primitives shared by every module.
//
// All reductions run in a fixed left-to-right order so that two code paths
// performing the same sequence of operations produce bit-identical results.
// The fixed-point solver relies on this to reproduce the sequential
// recurrence exactly.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fixpoint {

using Vector = std::vector<double>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool empty() const { return data.empty(); }
  std::size_t size() const { return data.size(); }
  void fill(double v);
  std::string shape() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

enum class Activation { tanh, sigmoid };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

/// Dot product accumulated strictly left to right.
double dot(std::span<const double> a, std::span<const double> b);

/// out = M v. Each row is reduced left to right; rows are independent.
void matvec_into(const Matrix& m, std::span<const double> v, std::span<double> out);

/// out += M^T g, i.e. out_j += sum_i M_ij g_i, accumulated over i in order.
void matvec_transpose_accumulate(const Matrix& m, std::span<const double> g,
                                 std::span<double> out);

/// M += a b^T.
void outer_accumulate(Matrix& m, std::span<const double> a, std::span<const double> b);

Vector affine(const Matrix& m, std::span<const double> v);
Vector affine(const Matrix& m, std::span<const double> v, std::span<const double> bias);

inline double activate(Activation kind, double z) {
  if (kind == Activation::tanh) return std::tanh(z);
  return 1.0 / (1.0 + std::exp(-z));
}

inline double activate_deriv(Activation kind, double z) {
  const double y = activate(kind, z);
  if (kind == Activation::tanh) return 1.0 - y * y;
  return y * (1.0 - y);
}

Vector activation(Activation kind, std::span<const double> z);
Vector activation_deriv(Activation kind, std::span<const double> z);

/// Max-subtracted log-softmax.
Vector log_softmax(std::span<const double> logits);
void log_softmax_into(std::span<const double> logits, std::span<double> out);

double max_abs_diff(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> v);

}  // namespace fixpoint
