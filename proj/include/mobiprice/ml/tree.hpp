#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "mobiprice/core/matrix.hpp"
#include "mobiprice/core/random.hpp"

namespace mobiprice::ml {

struct TreeParams {
  std::size_t mtry = 0;              // features drawn per split; 0 = all
  std::size_t min_samples_leaf = 1;  // counted with bootstrap multiplicity
  std::size_t max_depth = 0;         // 0 = unlimited
};

// Internal nodes route x left iff x[feature] <= threshold. Leaves have
// feature == -1 and predict `value`.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  std::size_t leaf_index(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const auto& n = nodes_[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                           : n.right);
    }
    return i;
  }

  double predict(std::span<const double> x) const { return nodes_[leaf_index(x)].value; }

  const std::vector<TreeNode>& nodes() const { return nodes_; }

  std::size_t depth() const {
    if (nodes_.empty()) return 0;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    std::size_t deepest = 0;
    while (!stack.empty()) {
      auto [i, d] = stack.back();
      stack.pop_back();
      deepest = std::max(deepest, d);
      if (!nodes_[i].is_leaf()) {
        stack.emplace_back(static_cast<std::size_t>(nodes_[i].left), d + 1);
        stack.emplace_back(static_cast<std::size_t>(nodes_[i].right), d + 1);
      }
    }
    return deepest;
  }

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

// Row indices of X sorted by each column (ties by row index). Computed once
// per training matrix and shared by every tree of a forest.
struct ColumnOrder {
  std::vector<std::vector<std::uint32_t>> by_feature;

  static ColumnOrder compute(const Matrix& X) {
    ColumnOrder order;
    order.by_feature.resize(X.cols());
    for (std::size_t f = 0; f < X.cols(); ++f) {
      auto& idx = order.by_feature[f];
      idx.resize(X.rows());
      std::iota(idx.begin(), idx.end(), 0u);
      std::stable_sort(idx.begin(), idx.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return X(a, f) < X(b, f); });
    }
    return order;
  }
};

inline double split_midpoint(double lo, double hi) {
  double mid = 0.5 * (lo + hi);
  if (!(mid < hi)) mid = lo;
  return mid;
}

namespace detail {

// Greedy CART on weighted rows. Each node keeps, for every feature, its rows
// in ascending feature order in a shared segment [begin, end); a split
// stable-partitions every feature's segment so the order survives.
class TreeBuilder {
 public:
  TreeBuilder(const Matrix& X, std::span<const double> y, std::span<const std::uint32_t> weights,
              const ColumnOrder& order, const TreeParams& params, Rng& rng)
      : X_(X), y_(y), w_(weights), params_(params), rng_(rng), p_(X.cols()) {
    for (std::size_t r = 0; r < X.rows(); ++r) m_ += weights[r] > 0 ? 1 : 0;
    sorted_.resize(p_ * m_);
    for (std::size_t f = 0; f < p_; ++f) {
      std::size_t k = 0;
      for (auto r : order.by_feature[f]) {
        if (w_[r] > 0) sorted_[f * m_ + k++] = r;
      }
    }
    goes_left_.assign(X.rows(), 0);
    buffer_.resize(m_);
    features_.resize(p_);
    std::iota(features_.begin(), features_.end(), std::size_t{0});
    mtry_ = params.mtry == 0 ? p_ : std::min(params.mtry, p_);
  }

  RegressionTree build() {
    nodes_.clear();
    nodes_.emplace_back();
    struct Work {
      std::size_t node, begin, end, depth;
    };
    std::vector<Work> stack{{0, 0, m_, 0}};
    while (!stack.empty()) {
      const Work w = stack.back();
      stack.pop_back();
      grow(w.node, w.begin, w.end, w.depth, [&](std::size_t l, std::size_t lb, std::size_t le,
                                                std::size_t r, std::size_t rb, std::size_t re) {
        stack.push_back({r, rb, re, w.depth + 1});
        stack.push_back({l, lb, le, w.depth + 1});
      });
    }
    return RegressionTree(std::move(nodes_));
  }

 private:
  template <class Push>
  void grow(std::size_t node, std::size_t begin, std::size_t end, std::size_t depth, Push&& push) {
    double W = 0.0, S = 0.0, Q = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      const auto r = sorted_[k];
      const double wt = w_[r];
      W += wt;
      S += wt * y_[r];
      Q += wt * y_[r] * y_[r];
    }
    nodes_[node].value = S / W;

    const double min_leaf = static_cast<double>(std::max<std::size_t>(params_.min_samples_leaf, 1));
    if (params_.max_depth != 0 && depth >= params_.max_depth) return;
    if (W < 2.0 * min_leaf) return;

    // Partial Fisher-Yates: the first mtry entries are the drawn features.
    for (std::size_t i = 0; i < mtry_; ++i) std::swap(features_[i], features_[i + rng_.index(p_ - i)]);
    chosen_.assign(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(mtry_));
    std::sort(chosen_.begin(), chosen_.end());

    const double parent_score = S * S / W;
    double best_score = -1.0;
    std::size_t best_feature = 0;
    double best_threshold = 0.0;
    bool found = false;
    for (auto f : chosen_) {
      const std::uint32_t* seg = sorted_.data() + f * m_;
      double wl = 0.0, sl = 0.0;
      for (std::size_t k = begin; k + 1 < end; ++k) {
        const auto r = seg[k];
        wl += w_[r];
        sl += w_[r] * y_[r];
        const double v = X_(r, f);
        const double v_next = X_(seg[k + 1], f);
        if (!(v < v_next)) continue;
        const double wr = W - wl;
        if (wl < min_leaf || wr < min_leaf) continue;
        const double sr = S - sl;
        const double score = sl * sl / wl + sr * sr / wr;
        if (score > best_score) {
          best_score = score;
          best_feature = f;
          best_threshold = split_midpoint(v, v_next);
          found = true;
        }
      }
    }
    if (!found || best_score - parent_score <= 1e-12 * Q) return;

    for (std::size_t k = begin; k < end; ++k) {
      const auto r = sorted_[k];
      goes_left_[r] = X_(r, best_feature) <= best_threshold ? 1 : 0;
    }
    std::size_t n_left = 0;
    for (std::size_t f = 0; f < p_; ++f) {
      std::uint32_t* seg = sorted_.data() + f * m_;
      std::size_t nl = 0, nr = 0;
      for (std::size_t k = begin; k < end; ++k) {
        const auto r = seg[k];
        if (goes_left_[r]) {
          seg[begin + nl++] = r;
        } else {
          buffer_[nr++] = r;
        }
      }
      std::copy(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(nr), seg + begin + nl);
      n_left = nl;
    }

    const std::size_t left = nodes_.size();
    nodes_.emplace_back();
    const std::size_t right = nodes_.size();
    nodes_.emplace_back();
    auto& n = nodes_[node];
    n.feature = static_cast<std::int32_t>(best_feature);
    n.threshold = best_threshold;
    n.left = static_cast<std::int32_t>(left);
    n.right = static_cast<std::int32_t>(right);
    push(left, begin, begin + n_left, right, begin + n_left, end);
  }

  const Matrix& X_;
  std::span<const double> y_;
  std::span<const std::uint32_t> w_;
  const TreeParams& params_;
  Rng& rng_;
  std::size_t p_;
  std::size_t m_ = 0;
  std::size_t mtry_ = 0;
  std::vector<std::uint32_t> sorted_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<std::uint32_t> buffer_;
  std::vector<std::size_t> features_;
  std::vector<std::size_t> chosen_;
  std::vector<TreeNode> nodes_;
};

inline void check_training_data(const Matrix& X, std::span<const double> y) {
  if (X.rows() == 0 || y.empty()) throw std::invalid_argument("fit: empty training data");
  if (X.rows() != y.size()) throw std::invalid_argument("fit: X and y row counts differ");
  if (X.cols() == 0) throw std::invalid_argument("fit: no features");
  for (double v : X.data())
    if (!std::isfinite(v)) throw std::invalid_argument("fit: non-finite feature value");
  for (double v : y)
    if (!std::isfinite(v)) throw std::invalid_argument("fit: non-finite label");
}

}  // namespace detail

// Tree on explicit per-row weights (bootstrap multiplicities) with a
// precomputed column order of X.
inline RegressionTree fit_tree_weighted(const Matrix& X, std::span<const double> y,
                                        std::span<const std::uint32_t> weights,
                                        const ColumnOrder& order, const TreeParams& params,
                                        Rng& rng) {
  detail::TreeBuilder builder(X, y, weights, order, params, rng);
  return builder.build();
}

// Greedy CART regression tree. At each node mtry features are drawn without
// replacement; the split minimizing weighted child SSE over midpoints of
// consecutive distinct values wins, ties going to the lowest feature index
// and then the lowest threshold.
inline RegressionTree fit_tree(const Matrix& X, std::span<const double> y, const TreeParams& params,
                               Rng& rng) {
  detail::check_training_data(X, y);
  const std::vector<std::uint32_t> weights(X.rows(), 1);
  return fit_tree_weighted(X, y, weights, ColumnOrder::compute(X), params, rng);
}

}  // namespace mobiprice::ml
