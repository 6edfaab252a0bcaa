#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mobiprice/core/matrix.hpp"
#include "mobiprice/core/parallel.hpp"
#include "mobiprice/core/random.hpp"
#include "mobiprice/ml/tree.hpp"

namespace mobiprice::ml {

struct ForestParams {
  std::size_t n_estimators = 300;
  std::size_t mtry = 0;  // 0 = ceil(p / 3)
  std::size_t min_samples_leaf = 5;
  std::size_t max_depth = 0;  // 0 = unlimited

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

inline std::size_t resolve_mtry(std::size_t mtry, std::size_t n_features) {
  if (mtry != 0) return std::min(mtry, n_features);
  return std::max<std::size_t>(1, (n_features + 2) / 3);
}

class ForestModel {
 public:
  ForestModel() = default;
  ForestModel(std::vector<RegressionTree> trees, ForestParams params, std::uint64_t seed,
              std::size_t n_features)
      : trees_(std::move(trees)), params_(params), seed_(seed), n_features_(n_features) {}

  // Mean over trees, summed in tree order.
  double predict(std::span<const double> x) const {
    double sum = 0.0;
    for (const auto& t : trees_) sum += t.predict(x);
    return sum / static_cast<double>(trees_.size());
  }

  std::vector<double> predict(const Matrix& X) const {
    std::vector<double> out(X.rows());
    parallel_for(X.rows(), [&](std::size_t i) { out[i] = predict(X.row(i)); });
    return out;
  }

  const std::vector<RegressionTree>& trees() const { return trees_; }
  const ForestParams& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t n_features() const { return n_features_; }

  friend bool operator==(const ForestModel&, const ForestModel&) = default;

 private:
  std::vector<RegressionTree> trees_;
  ForestParams params_;
  std::uint64_t seed_ = 0;
  std::size_t n_features_ = 0;
};

// Bagged CART forest. Tree t draws its bootstrap sample and split features
// from its own stream derive_seed(seed, "tree", t), so results do not depend
// on how trees are scheduled across threads.
inline ForestModel fit_forest(const Matrix& X, std::span<const double> y, const ForestParams& params,
                              std::uint64_t seed) {
  detail::check_training_data(X, y);
  if (params.n_estimators == 0) throw std::invalid_argument("fit_forest: n_estimators must be > 0");
  const ColumnOrder order = ColumnOrder::compute(X);
  TreeParams tp;
  tp.mtry = resolve_mtry(params.mtry, X.cols());
  tp.min_samples_leaf = params.min_samples_leaf;
  tp.max_depth = params.max_depth;
  const std::size_t n = X.rows();
  std::vector<RegressionTree> trees(params.n_estimators);
  parallel_for(params.n_estimators, [&](std::size_t t) {
    Rng rng(derive_seed(seed, "tree", t));
    std::vector<std::uint32_t> weights(n, 0);
    for (std::size_t i = 0; i < n; ++i) ++weights[rng.index(n)];
    trees[t] = fit_tree_weighted(X, y, weights, order, tp, rng);
  });
  return ForestModel(std::move(trees), params, seed, X.cols());
}

}  // namespace mobiprice::ml
