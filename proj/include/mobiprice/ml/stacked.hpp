#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mobiprice/core/matrix.hpp"
#include "mobiprice/core/random.hpp"
#include "mobiprice/ml/forest.hpp"
#include "mobiprice/ml/ridge.hpp"

namespace mobiprice::ml {

struct StackedConfig {
  ForestParams forest_a;
  ForestParams forest_b;
  // Columns of the full feature vector read by each forest. The baseline
  // variant passes the static columns for both.
  std::vector<std::size_t> columns_a;
  std::vector<std::size_t> columns_b;
  double lambda = 1.0;
  std::size_t k_folds = 5;
  std::uint64_t seed = 0;
};

// Two forests over different column sets, combined by a ridge regression on
// their predictions.
struct StackedModel {
  ForestModel rf_a;
  ForestModel rf_b;
  RidgeModel meta;  // exactly two coefficients: rf_a, rf_b
  std::vector<std::size_t> columns_a;
  std::vector<std::size_t> columns_b;
  std::size_t k_folds = 0;

  double predict(std::span<const double> full_row) const {
    const auto xa = select(full_row, columns_a);
    const auto xb = select(full_row, columns_b);
    const double in[2] = {rf_a.predict(xa), rf_b.predict(xb)};
    return meta.predict(in);
  }

  friend bool operator==(const StackedModel&, const StackedModel&) = default;
};

// Assigns each row to one of k folds after a seeded shuffle (contiguous
// chunks of the shuffled order).
inline std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::size_t> fold(n);
  for (std::size_t pos = 0; pos < n; ++pos) fold[order[pos]] = pos * k / n;
  return fold;
}

// The meta ridge is fit on out-of-fold forest predictions; both forests are
// then refit on all rows.
inline StackedModel fit_stacked(const Matrix& X, std::span<const double> y, const StackedConfig& cfg) {
  const std::size_t n = X.rows();
  if (cfg.k_folds < 2) throw std::invalid_argument("fit_stacked: k_folds must be >= 2");
  if (n < cfg.k_folds) throw std::invalid_argument("fit_stacked: fewer rows than folds");
  if (cfg.columns_a.empty() || cfg.columns_b.empty())
    throw std::invalid_argument("fit_stacked: empty column set");

  const Matrix Xa = X.select_cols(cfg.columns_a);
  const Matrix Xb = X.select_cols(cfg.columns_b);
  const auto fold = fold_assignment(n, cfg.k_folds, derive_seed(cfg.seed, "folds"));

  Matrix meta_X(n, 2);
  for (std::size_t f = 0; f < cfg.k_folds; ++f) {
    std::vector<std::size_t> in, out;
    for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? out : in).push_back(i);
    std::vector<double> y_in;
    for (auto i : in) y_in.push_back(y[i]);
    const auto fa = fit_forest(Xa.select_rows(in), y_in, cfg.forest_a, derive_seed(cfg.seed, "rf_a", f + 1));
    const auto fb = fit_forest(Xb.select_rows(in), y_in, cfg.forest_b, derive_seed(cfg.seed, "rf_b", f + 1));
    for (auto i : out) {
      meta_X(i, 0) = fa.predict(Xa.row(i));
      meta_X(i, 1) = fb.predict(Xb.row(i));
    }
  }

  StackedModel model;
  model.columns_a = cfg.columns_a;
  model.columns_b = cfg.columns_b;
  model.k_folds = cfg.k_folds;
  model.meta = fit_ridge(meta_X, y, cfg.lambda);
  model.rf_a = fit_forest(Xa, y, cfg.forest_a, derive_seed(cfg.seed, "rf_a", 0));
  model.rf_b = fit_forest(Xb, y, cfg.forest_b, derive_seed(cfg.seed, "rf_b", 0));
  return model;
}

}  // namespace mobiprice::ml
