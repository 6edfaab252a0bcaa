#pragma once

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mobiprice/core/error.hpp"
#include "mobiprice/core/text.hpp"
#include "mobiprice/ml/forest.hpp"
#include "mobiprice/ml/ridge.hpp"
#include "mobiprice/ml/stacked.hpp"

// Line-oriented text persistence. Doubles use the shortest round-trip form,
// so a reloaded model predicts bit-for-bit like the original.
namespace mobiprice::ml {

namespace io {

class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string s;
    if (!(in_ >> s)) throw DataError("model file: unexpected end of input");
    return s;
  }
  void expect(const std::string& w) {
    const auto got = word();
    if (got != w) throw DataError("model file: expected '" + w + "', found '" + got + "'");
  }
  double real() {
    const auto s = word();
    auto v = parse_double(s);
    if (!v) throw DataError("model file: bad number '" + s + "'");
    return *v;
  }
  std::int64_t integer() {
    const auto s = word();
    auto v = parse_int(s);
    if (!v) throw DataError("model file: bad integer '" + s + "'");
    return *v;
  }
  std::size_t count() {
    const auto v = integer();
    if (v < 0) throw DataError("model file: negative count");
    return static_cast<std::size_t>(v);
  }
  std::uint64_t u64() {
    const auto s = word();
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw DataError("model file: bad seed");
    return v;
  }

 private:
  std::istream& in_;
};

inline void write_vector(std::ostream& out, const char* tag, const std::vector<double>& v) {
  out << tag << ' ' << v.size();
  for (double x : v) out << ' ' << format_double(x);
  out << '\n';
}

inline std::vector<double> read_vector(TokenReader& r, const char* tag) {
  r.expect(tag);
  std::vector<double> v(r.count());
  for (auto& x : v) x = r.real();
  return v;
}

inline void write_indices(std::ostream& out, const char* tag, const std::vector<std::size_t>& v) {
  out << tag << ' ' << v.size();
  for (auto x : v) out << ' ' << x;
  out << '\n';
}

inline std::vector<std::size_t> read_indices(TokenReader& r, const char* tag) {
  r.expect(tag);
  std::vector<std::size_t> v(r.count());
  for (auto& x : v) x = r.count();
  return v;
}

}  // namespace io

inline void write_forest(std::ostream& out, const ForestModel& f) {
  const auto& p = f.params();
  out << "forest " << f.trees().size() << ' ' << f.n_features() << ' ' << p.n_estimators << ' '
      << p.mtry << ' ' << p.min_samples_leaf << ' ' << p.max_depth << ' ' << f.seed() << '\n';
  for (const auto& t : f.trees()) {
    out << "tree " << t.nodes().size() << '\n';
    for (const auto& n : t.nodes()) {
      out << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left << ' ' << n.right
          << ' ' << format_double(n.value) << '\n';
    }
  }
}

inline ForestModel read_forest(io::TokenReader& r) {
  r.expect("forest");
  const std::size_t n_trees = r.count();
  const std::size_t n_features = r.count();
  ForestParams p;
  p.n_estimators = r.count();
  p.mtry = r.count();
  p.min_samples_leaf = r.count();
  p.max_depth = r.count();
  const std::uint64_t seed = r.u64();
  std::vector<RegressionTree> trees;
  trees.reserve(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) {
    r.expect("tree");
    std::vector<TreeNode> nodes(r.count());
    for (auto& n : nodes) {
      n.feature = static_cast<std::int32_t>(r.integer());
      n.threshold = r.real();
      n.left = static_cast<std::int32_t>(r.integer());
      n.right = static_cast<std::int32_t>(r.integer());
      n.value = r.real();
    }
    for (const auto& n : nodes) {
      const auto limit = static_cast<std::int32_t>(nodes.size());
      if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= limit || n.right >= limit ||
                           static_cast<std::size_t>(n.feature) >= n_features))
        throw DataError("model file: corrupt tree node");
    }
    if (nodes.empty()) throw DataError("model file: empty tree");
    trees.emplace_back(std::move(nodes));
  }
  return ForestModel(std::move(trees), p, seed, n_features);
}

inline void write_ridge(std::ostream& out, const RidgeModel& m) {
  out << "ridge " << format_double(m.lambda) << ' ' << format_double(m.intercept) << '\n';
  io::write_vector(out, "coef", m.coefficients);
  io::write_vector(out, "mean", m.mean);
  io::write_vector(out, "scale", m.scale);
}

inline RidgeModel read_ridge(io::TokenReader& r) {
  r.expect("ridge");
  RidgeModel m;
  m.lambda = r.real();
  m.intercept = r.real();
  m.coefficients = io::read_vector(r, "coef");
  m.mean = io::read_vector(r, "mean");
  m.scale = io::read_vector(r, "scale");
  return m;
}

inline void write_stacked(std::ostream& out, const StackedModel& m) {
  out << "stacked " << m.k_folds << '\n';
  io::write_indices(out, "columns_a", m.columns_a);
  io::write_indices(out, "columns_b", m.columns_b);
  write_forest(out, m.rf_a);
  write_forest(out, m.rf_b);
  write_ridge(out, m.meta);
}

inline StackedModel read_stacked(io::TokenReader& r) {
  r.expect("stacked");
  StackedModel m;
  m.k_folds = r.count();
  m.columns_a = io::read_indices(r, "columns_a");
  m.columns_b = io::read_indices(r, "columns_b");
  m.rf_a = read_forest(r);
  m.rf_b = read_forest(r);
  m.meta = read_ridge(r);
  if (m.meta.coefficients.size() != 2) throw DataError("model file: meta model must have 2 inputs");
  return m;
}

}  // namespace mobiprice::ml
