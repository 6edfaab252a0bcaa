#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mobiprice/core/matrix.hpp"
#include "mobiprice/core/random.hpp"

namespace mobiprice::ml {

template <class M>
concept Regressor = requires(const M& m, std::span<const double> x) {
  { m.predict(x) } -> std::convertible_to<double>;
};

struct Metrics {
  double mse = 0.0;
  std::optional<double> r2;  // empty when the labels have zero variance
};

inline Metrics regression_metrics(std::span<const double> predictions, std::span<const double> labels) {
  if (labels.empty() || predictions.size() != labels.size())
    throw std::invalid_argument("metrics: need matching, nonempty predictions and labels");
  const double n = static_cast<double>(labels.size());
  double mean = 0.0;
  for (double v : labels) mean += v;
  mean /= n;
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    sse += (predictions[i] - labels[i]) * (predictions[i] - labels[i]);
    sst += (labels[i] - mean) * (labels[i] - mean);
  }
  Metrics m;
  m.mse = sse / n;
  if (sst > 0.0) m.r2 = 1.0 - sse / sst;
  return m;
}

template <Regressor M>
std::vector<double> predict_rows(const M& model, const Matrix& X) {
  std::vector<double> out(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) out[i] = model.predict(X.row(i));
  return out;
}

template <Regressor M>
Metrics evaluate(const M& model, const Matrix& X, std::span<const double> y) {
  if (X.rows() == 0) throw std::invalid_argument("evaluate: no rows");
  return regression_metrics(predict_rows(model, X), y);
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Seeded uniform shuffle; the first ceil(n * test_fraction) positions form
// the test set. At least one row stays in training.
inline Split split(std::size_t n, double test_fraction, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("split: need at least 2 rows");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("split: test_fraction must be in (0, 1)");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  auto n_test = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * test_fraction - 1e-9));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  Split s;
  s.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  return s;
}

}  // namespace mobiprice::ml
