#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mobiprice/core/matrix.hpp"
#include "mobiprice/core/parallel.hpp"
#include "mobiprice/core/random.hpp"
#include "mobiprice/core/text.hpp"
#include "mobiprice/ml/metrics.hpp"

namespace mobiprice::explain {

using ml::Regressor;

struct ShapleyEstimate {
  std::vector<double> phi;     // per-feature attribution
  std::vector<double> phi_se;  // Monte Carlo standard error of each phi
  double prediction = 0.0;     // f(x)
  double sampled_reference = 0.0;  // mean f(z) over the drawn background rows
  double reference_se = 0.0;       // standard error of sampled_reference
};

// Permutation-sampling Shapley estimate for the interventional game
// v(S) = E_z f(x_S, z_rest). Each sample walks one random feature order,
// switching features from a background row z to x one at a time, and
// credits each feature with the change in f. Background rows are drawn by
// walking successive random permutations of the background set, so every
// row is used equally often; each draw is still uniform.
template <Regressor M>
ShapleyEstimate shapley_mc(const M& model, std::span<const double> x, const Matrix& background,
                           std::size_t n_samples, std::uint64_t seed) {
  if (background.rows() == 0) throw std::invalid_argument("shapley_mc: empty background");
  if (n_samples == 0) throw std::invalid_argument("shapley_mc: n_samples must be >= 1");
  if (background.cols() != x.size()) throw std::invalid_argument("shapley_mc: width mismatch");
  const std::size_t p = x.size();
  Rng rng(seed);
  std::vector<double> sum(p, 0.0), sumsq(p, 0.0);
  std::vector<std::size_t> perm(p);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<std::size_t> rows(background.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::size_t row_pos = rows.size();
  std::vector<double> hybrid(p);
  double ref_sum = 0.0, ref_sumsq = 0.0;

  for (std::size_t s = 0; s < n_samples; ++s) {
    rng.shuffle(std::span<std::size_t>(perm));
    if (row_pos == rows.size()) {
      rng.shuffle(std::span<std::size_t>(rows));
      row_pos = 0;
    }
    const auto z = background.row(rows[row_pos++]);
    std::copy(z.begin(), z.end(), hybrid.begin());
    double prev = model.predict(hybrid);
    ref_sum += prev;
    ref_sumsq += prev * prev;
    for (auto j : perm) {
      hybrid[j] = x[j];
      const double cur = model.predict(hybrid);
      const double delta = cur - prev;
      sum[j] += delta;
      sumsq[j] += delta * delta;
      prev = cur;
    }
  }

  const double n = static_cast<double>(n_samples);
  auto se = [n](double s1, double s2) {
    if (n < 2) return 0.0;
    const double var = std::max(0.0, (s2 - s1 * s1 / n) / (n - 1));
    return std::sqrt(var / n);
  };
  ShapleyEstimate est;
  est.phi.resize(p);
  est.phi_se.resize(p);
  for (std::size_t j = 0; j < p; ++j) {
    est.phi[j] = sum[j] / n;
    est.phi_se[j] = se(sum[j], sumsq[j]);
  }
  est.prediction = model.predict(x);
  est.sampled_reference = ref_sum / n;
  est.reference_se = se(ref_sum, ref_sumsq);
  return est;
}

// Mean model prediction over the background rows.
template <Regressor M>
double background_mean(const M& model, const Matrix& background) {
  double s = 0.0;
  for (std::size_t i = 0; i < background.rows(); ++i) s += model.predict(background.row(i));
  return s / static_cast<double>(background.rows());
}

// Seeded sample (without replacement) of at most max_rows rows, kept in
// original row order.
inline Matrix sample_background(const Matrix& X, std::size_t max_rows, std::uint64_t seed) {
  std::vector<std::size_t> idx(X.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (idx.size() > max_rows) {
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(idx));
    idx.resize(max_rows);
    std::sort(idx.begin(), idx.end());
  }
  return X.select_rows(idx);
}

struct AttributionReport {
  std::vector<std::string> feature_names;
  std::vector<double> importance;  // mean |phi| over evaluated rows
  std::vector<std::size_t> ranking;  // top-k feature indices, most important first
  Matrix per_instance;               // one phi vector per evaluated row
  std::vector<double> predictions;   // f(x) per evaluated row
  std::size_t n_mc_samples = 0;
  std::uint64_t seed = 0;
  double baseline = 0.0;  // mean prediction over the background set
};

// Feature indices by descending value, ties by ascending name.
inline std::vector<std::size_t> rank_descending(std::span<const double> values,
                                                std::span<const std::string> names) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return names[a] < names[b];
  });
  return order;
}

template <Regressor M>
AttributionReport top_k_report(const M& model, const Matrix& eval_rows, const Matrix& background,
                               std::span<const std::string> names, std::size_t k,
                               std::size_t n_samples, std::uint64_t seed) {
  const std::size_t p = background.cols();
  if (names.size() != p) throw std::invalid_argument("top_k_report: name count mismatch");
  if (k > p) throw std::invalid_argument("top_k_report: k exceeds feature count");
  AttributionReport rep;
  rep.feature_names.assign(names.begin(), names.end());
  rep.n_mc_samples = n_samples;
  rep.seed = seed;
  rep.baseline = background_mean(model, background);
  rep.per_instance = Matrix(eval_rows.rows(), p);
  rep.predictions.resize(eval_rows.rows());
  parallel_for(eval_rows.rows(), [&](std::size_t i) {
    auto est = shapley_mc(model, eval_rows.row(i), background, n_samples, derive_seed(seed, "shap", i));
    std::copy(est.phi.begin(), est.phi.end(), rep.per_instance.row(i).begin());
    rep.predictions[i] = est.prediction;
  });
  rep.importance.assign(p, 0.0);
  for (std::size_t i = 0; i < eval_rows.rows(); ++i)
    for (std::size_t j = 0; j < p; ++j) rep.importance[j] += std::abs(rep.per_instance(i, j));
  if (eval_rows.rows() > 0)
    for (auto& v : rep.importance) v /= static_cast<double>(eval_rows.rows());
  rep.ranking = rank_descending(rep.importance, rep.feature_names);
  rep.ranking.resize(k);
  return rep;
}

// Increase in MSE when column j is shuffled, averaged over repetitions.
template <Regressor M>
std::vector<double> permutation_importance(const M& model, const Matrix& X, std::span<const double> y,
                                           std::uint64_t seed, std::size_t repetitions = 5) {
  if (X.rows() < 2) throw std::invalid_argument("permutation_importance: need >= 2 rows");
  const double base = ml::evaluate(model, X, y).mse;
  std::vector<double> delta(X.cols(), 0.0);
  parallel_for(X.cols(), [&](std::size_t j) {
    Matrix Xp = X;
    std::vector<double> column(X.rows());
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
      for (std::size_t i = 0; i < X.rows(); ++i) column[i] = X(i, j);
      Rng rng(derive_seed(seed, "perm", j * 1000003 + rep));
      rng.shuffle(std::span<double>(column));
      for (std::size_t i = 0; i < X.rows(); ++i) Xp(i, j) = column[i];
      delta[j] += ml::evaluate(model, Xp, y).mse - base;
    }
    delta[j] /= static_cast<double>(repetitions);
  });
  return delta;
}

inline void write_top_k_csv(const std::string& path, const AttributionReport& rep) {
  auto out = open_output(path);
  out << "rank,feature,mean_abs_shapley\n";
  for (std::size_t r = 0; r < rep.ranking.size(); ++r) {
    const auto j = rep.ranking[r];
    out << (r + 1) << ',' << rep.feature_names[j] << ',' << format_double(rep.importance[j]) << '\n';
  }
}

inline void write_shapley_matrix_csv(const std::string& path, const AttributionReport& rep,
                                     std::span<const std::string> row_ids) {
  auto out = open_output(path);
  out << "row_id,prediction";
  for (const auto& n : rep.feature_names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < rep.per_instance.rows(); ++i) {
    out << csv_escape(i < row_ids.size() ? row_ids[i] : std::to_string(i)) << ','
        << format_double(rep.predictions[i]);
    for (double v : rep.per_instance.row(i)) out << ',' << format_double(v);
    out << '\n';
  }
}

}  // namespace mobiprice::explain
