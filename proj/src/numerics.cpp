#include "fixpoint/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fixpoint {

void Matrix::fill(double v) { std::fill(data.begin(), data.end(), v); }

std::string Matrix::shape() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  return a == Activation::tanh ? "tanh" : "sigmoid";
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * b[j];
  return acc;
}

void matvec_into(const Matrix& m, std::span<const double> v, std::span<double> out) {
  const std::size_t n = m.cols;
  const double* x = v.data();
  std::size_t i = 0;
  // Four rows at a time for instruction-level parallelism. Each row keeps its
  // own accumulator and still sums left to right, so the result matches dot().
  for (; i + 4 <= m.rows; i += 4) {
    const double* r0 = m.data.data() + i * n;
    const double* r1 = r0 + n;
    const double* r2 = r1 + n;
    const double* r3 = r2 + n;
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double xj = x[j];
      a0 += r0[j] * xj;
      a1 += r1[j] * xj;
      a2 += r2[j] * xj;
      a3 += r3[j] * xj;
    }
    out[i] = a0;
    out[i + 1] = a1;
    out[i + 2] = a2;
    out[i + 3] = a3;
  }
  for (; i < m.rows; ++i) out[i] = dot(m.row(i), v);
}

void matvec_transpose_accumulate(const Matrix& m, std::span<const double> g,
                                 std::span<double> out) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double gi = g[i];
    if (gi == 0.0) continue;
    const double* r = m.data.data() + i * m.cols;
    for (std::size_t j = 0; j < m.cols; ++j) out[j] += r[j] * gi;
  }
}

void outer_accumulate(Matrix& m, std::span<const double> a, std::span<const double> b) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    double* r = m.data.data() + i * m.cols;
    for (std::size_t j = 0; j < m.cols; ++j) r[j] += ai * b[j];
  }
}

namespace {

void check_matvec(const Matrix& m, std::size_t v_dim) {
  if (m.cols != v_dim) {
    throw ShapeError("affine: matrix " + m.shape() + " incompatible with vector of dim " +
                     std::to_string(v_dim));
  }
}

}  // namespace

Vector affine(const Matrix& m, std::span<const double> v) {
  check_matvec(m, v.size());
  Vector out(m.rows);
  matvec_into(m, v, out);
  return out;
}

Vector affine(const Matrix& m, std::span<const double> v, std::span<const double> bias) {
  check_matvec(m, v.size());
  if (bias.size() != m.rows) {
    throw ShapeError("affine: matrix " + m.shape() + " incompatible with bias of dim " +
                     std::to_string(bias.size()));
  }
  Vector out(m.rows);
  matvec_into(m, v, out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i];
  return out;
}

Vector activation(Activation kind, std::span<const double> z) {
  Vector out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = activate(kind, z[i]);
  return out;
}

Vector activation_deriv(Activation kind, std::span<const double> z) {
  Vector out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = activate_deriv(kind, z[i]);
  return out;
}

void log_softmax_into(std::span<const double> logits, std::span<double> out) {
  if (logits.empty()) return;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - mx);
  const double log_sum = std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = (logits[i] - mx) - log_sum;
}

Vector log_softmax(std::span<const double> logits) {
  Vector out(logits.size());
  log_softmax_into(logits, out);
  return out;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace fixpoint
