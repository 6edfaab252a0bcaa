#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "mobiprice/core/matrix.hpp"

namespace mobiprice::ml {

struct RidgeOptions {
  bool standardize = true;
  bool fit_intercept = true;
};

// Linear model with an L2 penalty on standardized coefficients. The
// intercept is never penalized; coefficients are stored in original units.
struct RidgeModel {
  std::vector<double> coefficients;
  double intercept = 0.0;
  double lambda = 0.0;
  std::vector<double> mean;   // per-feature centering
  std::vector<double> scale;  // per-feature stddev, 1 for constant features

  double predict(std::span<const double> x) const {
    double v = intercept;
    for (std::size_t j = 0; j < coefficients.size(); ++j) v += coefficients[j] * x[j];
    return v;
  }

  double coefficient_norm() const {
    double s = 0.0;
    for (double c : coefficients) s += c * c;
    return std::sqrt(s);
  }

  friend bool operator==(const RidgeModel&, const RidgeModel&) = default;
};

namespace detail {

// In-place Cholesky solve of the SPD system A x = b (A is n x n row-major).
// Returns false when a pivot is not positive relative to the diagonal scale.
inline bool cholesky_solve(std::vector<double>& A, std::vector<double>& b, std::size_t n) {
  double diag_scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) diag_scale = std::max(diag_scale, std::abs(A[i * n + i]));
  const double tol = 1e-12 * std::max(diag_scale, 1e-300);
  for (std::size_t j = 0; j < n; ++j) {
    double d = A[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= A[j * n + k] * A[j * n + k];
    if (!(d > tol)) return false;
    const double l = std::sqrt(d);
    A[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = A[i * n + j];
      for (std::size_t k = 0; k < j; ++k) v -= A[i * n + k] * A[j * n + k];
      A[i * n + j] = v / l;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= A[i * n + k] * b[k];
    b[i] = v / A[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double v = b[i];
    for (std::size_t k = i + 1; k < n; ++k) v -= A[k * n + i] * b[k];
    b[i] = v / A[i * n + i];
  }
  return true;
}

}  // namespace detail

// Solves (Z'Z + lambda I) beta = Z'(y - ybar) on centered, standardized Z by
// Cholesky. Constant columns get coefficient 0 and scale 1.
inline RidgeModel fit_ridge(const Matrix& X, std::span<const double> y, double lambda,
                            RidgeOptions options = {}) {
  const std::size_t n = X.rows(), p = X.cols();
  if (n < 2 || y.size() != n) throw std::invalid_argument("fit_ridge: need >= 2 rows matching y");
  if (!(lambda >= 0.0)) throw std::invalid_argument("fit_ridge: lambda must be >= 0");

  RidgeModel m;
  m.lambda = lambda;
  m.mean.assign(p, 0.0);
  m.scale.assign(p, 1.0);
  m.coefficients.assign(p, 0.0);

  double ybar = 0.0;
  if (options.fit_intercept) {
    for (double v : y) ybar += v;
    ybar /= static_cast<double>(n);
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += X(i, j);
      m.mean[j] = s / static_cast<double>(n);
    }
  }

  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < p; ++j) {
    bool constant = true;
    for (std::size_t i = 1; i < n && constant; ++i) constant = X(i, j) == X(0, j);
    if (constant) continue;
    if (options.standardize) {
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = X(i, j) - m.mean[j];
        ss += d * d;
      }
      const double sd = std::sqrt(ss / static_cast<double>(n));
      if (sd > 0.0) m.scale[j] = sd;
    }
    active.push_back(j);
  }

  const std::size_t q = active.size();
  if (q > 0) {
    std::vector<double> A(q * q, 0.0), b(q, 0.0), z(q);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < q; ++a) {
        const std::size_t j = active[a];
        z[a] = (X(i, j) - m.mean[j]) / m.scale[j];
      }
      const double r = y[i] - ybar;
      for (std::size_t a = 0; a < q; ++a) {
        b[a] += z[a] * r;
        for (std::size_t c = 0; c <= a; ++c) A[a * q + c] += z[a] * z[c];
      }
    }
    for (std::size_t a = 0; a < q; ++a) {
      for (std::size_t c = 0; c < a; ++c) A[c * q + a] = A[a * q + c];
      A[a * q + a] += lambda;
    }
    if (!detail::cholesky_solve(A, b, q)) {
      throw std::domain_error(
          "fit_ridge: singular system (collinear or rank-deficient features); use lambda > 0");
    }
    for (std::size_t a = 0; a < q; ++a) m.coefficients[active[a]] = b[a] / m.scale[active[a]];
  }

  m.intercept = ybar;
  for (std::size_t j = 0; j < p; ++j) m.intercept -= m.coefficients[j] * m.mean[j];
  return m;
}

}  // namespace mobiprice::ml
