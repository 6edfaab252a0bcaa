// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "mobiprice/explain.hpp"
#include "mobiprice/pipeline.hpp"
#include "oracles.hpp"

using namespace mobiprice;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::vector<std::uint64_t> seeds() {
  std::vector<std::uint64_t> s;
  for (std::uint64_t i = 0; i < 10; ++i) s.push_back(1000 + i);
  return s;
}

// Stacked(static, dynamic) against stacked(static, static) over ten seeds.
Outcome listprice_gain() {
  Outcome o;
  const auto t0 = Clock::now();
  int wins = 0;
  o.detail << "improvement:";
  for (auto seed : seeds()) {
    RunConfig cfg;
    cfg.seed = seed;
    const auto ds = dataset_from_city(synth::generate_synthetic(city_spec(cfg)), cfg);
    const auto rep = run_listprice_experiment(ds.rows, ds.manifest, cfg, seed);
    const double gain = rep.relative_improvement();
    wins += gain >= 0.03 ? 1 : 0;
    o.detail << ' ' << format_double(std::round(gain * 1000) / 10) << '%';
  }
  const double elapsed = seconds_since(t0);
  o.detail << "; seeds with >=3% gain " << wins << "/10; runtime " << static_cast<int>(elapsed) << " s";
  o.require(wins >= 9, "at least 9 of 10 seeds");
  o.require(elapsed < 300, "runtime under 5 minutes");
  return o;
}

Outcome spatial_joins() {
  Outcome o;
  Rng rng(2);
  std::vector<GeoPoint> pts;
  std::vector<std::pair<std::size_t, GeoPoint>> entries;
  for (std::size_t i = 0; i < 1000; ++i) {
    pts.push_back({rng.uniform(38.8, 39.0), rng.uniform(-77.2, -77.0)});
    entries.emplace_back(i, pts.back());
  }
  const auto idx = GridIndex<>::build(entries);
  int radius_ok = 0;
  for (int q = 0; q < 50; ++q) {
    const GeoPoint c{rng.uniform(38.8, 39.0), rng.uniform(-77.2, -77.0)};
    const double r = rng.uniform(0, 2500);
    radius_ok += idx.radius_query(c, r) == oracle::brute_radius(pts, c, r) ? 1 : 0;
  }
  o.detail << "radius queries matching brute force " << radius_ok << "/50";
  o.require(radius_ok == 50, "radius_query");

  synth::SyntheticCitySpec spec;
  spec.n_users = 100;
  spec.n_properties = 300;
  spec.seed = 2;
  const auto city = synth::generate_synthetic(spec);
  RunConfig cfg;
  MobilityBuild mob;
  dataset_from_city(city, cfg, &mob);
  const MobilityContext ctx(mob.stops, mob.homes);
  std::size_t agree = 0;
  for (const auto& prop : city.properties) {
    const auto got = visitors_by_dow(prop, ctx, cfg.features);
    const auto want = oracle::brute_visitors(prop, mob.stops, mob.homes, cfg.features.radius_m);
    bool same = true;
    for (std::size_t d = 0; d < 7; ++d) {
      std::set<std::string> users;
      for (auto u : got.by_dow[d]) users.insert(ctx.homes()[u].user_id);
      same = same && users == want.by_dow[d];
    }
    std::set<std::string> residents;
    for (auto u : got.residents) residents.insert(ctx.homes()[u].user_id);
    same = same && residents == want.residents;
    agree += same ? 1 : 0;
  }
  o.detail << "; visitors_by_dow matching triple loop " << agree << "/" << city.properties.size()
           << " properties (" << mob.homes.size() << " homes)";
  o.require(agree == city.properties.size(), "visitors_by_dow");
  return o;
}

Outcome stop_detection() {
  Outcome o;
  Rng rng(3);
  const StopParams params;
  int same = 0, invariants = 0;
  std::size_t n_stops = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto trace = oracle::random_trace(rng, "u" + std::to_string(trial));
    const auto stops = detect_stops(trace, params);
    n_stops += stops.size();
    same += stops == oracle::reference_stops(trace, params.r_stop_m, params.min_stop_duration_s, params.max_gap_s,
                                             params.utc_offset_hours)
                ? 1
                : 0;
    bool ok = true;
    for (std::size_t i = 0; i < stops.size(); ++i) {
      ok = ok && stops[i].duration_s() >= params.min_stop_duration_s && stops[i].n_pings >= 2;
      ok = ok && haversine_m(stops[i].anchor, stops[i].centroid) <= params.r_stop_m;
      if (i > 0) ok = ok && stops[i - 1].t_end < stops[i].t_start;
    }
    invariants += ok ? 1 : 0;
  }
  o.detail << "traces matching reference " << same << "/1000, invariants hold " << invariants << "/1000 ("
           << n_stops << " stops)";
  o.require(same == 1000 && invariants == 1000, "stop detection");
  return o;
}

Outcome home_inference() {
  Outcome o;
  synth::SyntheticCitySpec spec;
  spec.n_users = 500;
  spec.n_properties = 50;
  spec.jitter_min_m = spec.jitter_max_m = 20;
  spec.seed = 4;
  const auto city = synth::generate_synthetic(spec);
  RunConfig cfg;
  const auto mob = build_mobility(synth::to_streams(city.pings), city.polygons, city.demographics, cfg);
  std::map<std::string, GeoPoint> inferred;
  for (const auto& h : mob.homes) inferred[h.user_id] = h.home;
  std::size_t close = 0;
  for (const auto& u : city.users) {
    auto it = inferred.find(u.user_id);
    close += it != inferred.end() && haversine_m(it->second, u.home) <= 50 ? 1 : 0;
  }
  const double share = static_cast<double>(close) / static_cast<double>(city.users.size());
  o.detail << "homes within 50 m " << close << "/" << city.users.size();
  o.require(share >= 0.95, "95% within 50 m");

  // Users seen only from Saturday 08:00 to Monday 06:00 local on four weekends.
  std::vector<Ping> pings;
  Rng rng(44);
  const std::int64_t saturday = spec.start_local_day + 5;
  const std::size_t n_weekend = 100;
  for (std::size_t u = 0; u < n_weekend; ++u) {
    const GeoPoint home{rng.uniform(38.86, 38.94), rng.uniform(-77.09, -76.99)};
    for (int w = 0; w < 4; ++w) {
      const std::int64_t begin = (saturday + 7 * w) * kSecondsPerDay + 8 * 3600 + 5 * 3600;
      const std::int64_t end = (saturday + 7 * w + 2) * kSecondsPerDay + 6 * 3600 + 5 * 3600;
      for (std::int64_t t = begin; t <= end; t += 600) {
        Ping p;
        p.user_id = "w" + std::to_string(u);
        p.t = t;
        p.loc = offset_m(home, rng.normal(0, 20), rng.normal(0, 20));
        pings.push_back(p);
      }
    }
  }
  const auto weekend = build_mobility(synth::to_streams(pings), city.polygons, city.demographics, cfg);
  o.detail << "; weekend-only users without a home " << (n_weekend - weekend.homes.size()) << "/" << n_weekend
           << " (" << weekend.stops.size() << " stops)";
  o.require(weekend.homes.empty(), "weekend-only users get no home");
  return o;
}

Outcome ridge_checks() {
  Outcome o;
  Rng rng(5);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 60, p = 2 + static_cast<std::size_t>(trial % 6);
    Matrix X(n, p);
    std::vector<double> y;
    for (std::size_t i = 0; i < n; ++i) {
      double v = rng.normal(0, 0.5);
      for (std::size_t j = 0; j < p; ++j) {
        X(i, j) = rng.uniform(-3, 3);
        v += (static_cast<double>(j) - 1.5) * X(i, j);
      }
      y.push_back(v);
    }
    const double lambda = std::pow(10.0, trial % 5 - 2);
    const auto m = ml::fit_ridge(X, y, lambda);
    const auto ref = oracle::ridge_normal_equations(X, y, lambda);
    for (std::size_t j = 0; j < p; ++j) worst = std::max(worst, std::abs(m.coefficients[j] - ref.coef[j]));
    worst = std::max(worst, std::abs(m.intercept - ref.intercept));
  }
  o.detail << "max deviation from normal equations " << worst;
  o.require(worst <= 1e-8, "oracle agreement");

  Matrix X(120, 5);
  std::vector<double> y;
  for (std::size_t i = 0; i < 120; ++i) {
    for (std::size_t j = 0; j < 5; ++j) X(i, j) = rng.normal();
    y.push_back(2 * X(i, 0) - X(i, 2) + 0.5 * X(i, 4) + rng.normal(0, 0.2));
  }
  bool monotone = true;
  double prev = std::numeric_limits<double>::infinity();
  o.detail << "; norms:";
  for (double lambda : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    const double norm = ml::fit_ridge(X, y, lambda).coefficient_norm();
    o.detail << ' ' << format_double(std::round(norm * 1e4) / 1e4);
    monotone = monotone && norm <= prev;
    prev = norm;
  }
  o.require(monotone, "non-increasing norm");
  return o;
}

bool same_tree(const ml::RegressionTree& t, std::size_t node, const oracle::OracleNode& o) {
  const auto& n = t.nodes()[node];
  if (n.feature != o.feature) return false;
  if (std::abs(n.value - o.value) > 1e-12 * std::max(1.0, std::abs(o.value))) return false;
  if (n.is_leaf()) return true;
  return n.threshold == o.threshold && same_tree(t, static_cast<std::size_t>(n.left), *o.left) &&
         same_tree(t, static_cast<std::size_t>(n.right), *o.right);
}

Outcome forest_checks() {
  Outcome o;
  Rng rng(6);
  int trees_ok = 0;
  ml::TreeParams depth2;
  depth2.max_depth = 2;
  for (int trial = 0; trial < 20; ++trial) {
    Matrix X(50, 3);
    std::vector<double> y;
    for (std::size_t i = 0; i < 50; ++i) {
      for (std::size_t j = 0; j < 3; ++j) X(i, j) = rng.uniform();
      y.push_back(X(i, 0) * X(i, 1) + (X(i, 2) > 0.4 ? 1.0 : 0.0) + rng.normal(0, 0.2));
    }
    Rng fit_rng(static_cast<std::uint64_t>(trial));
    const auto tree = ml::fit_tree(X, y, depth2, fit_rng);
    trees_ok += same_tree(tree, 0, *oracle::exhaustive_tree(X, y, oracle::iota(50), 2, 1)) ? 1 : 0;
  }
  o.detail << "depth-2 trees matching exhaustive search " << trees_ok << "/20";
  o.require(trees_ok == 20, "tree oracle");

  auto data = [&](std::size_t n) {
    std::pair<Matrix, std::vector<double>> d{Matrix(n, 3), {}};
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < 3; ++j) d.first(i, j) = rng.uniform();
      d.second.push_back(3 * d.first(i, 0) + d.first(i, 1));
    }
    return d;
  };
  const auto train = data(500);
  const auto test = data(200);
  ml::ForestParams params;
  params.n_estimators = 200;
  const auto forest = ml::fit_forest(train.first, train.second, params, 66);
  const double r2 = ml::evaluate(forest, test.first, test.second).r2.value_or(0);
  o.detail << "; forest R2 " << format_double(std::round(r2 * 1e4) / 1e4);
  o.require(r2 > 0.9, "forest R2");

  std::ostringstream a, b;
  ml::write_forest(a, forest);
  ml::write_forest(b, ml::fit_forest(train.first, train.second, params, 66));
  o.detail << "; rerun identical " << (a.str() == b.str() ? "yes" : "no");
  o.require(a.str() == b.str(), "byte-identical rerun");
  return o;
}

struct Linear {
  std::vector<double> beta;
  double predict(std::span<const double> x) const {
    double s = 1.0;
    for (std::size_t j = 0; j < beta.size(); ++j) s += beta[j] * x[j];
    return s;
  }
};

Outcome shapley_checks() {
  Outcome o;
  Rng rng(7);
  auto random_matrix = [&](std::size_t n, std::size_t p) {
    Matrix X(n, p);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) X(i, j) = rng.uniform();
    return X;
  };
  const auto X = random_matrix(400, 5);
  std::vector<double> y;
  for (std::size_t i = 0; i < X.rows(); ++i) y.push_back(2 * X(i, 0) + X(i, 1) * X(i, 2) + rng.normal(0, 0.1));
  ml::ForestParams params;
  params.n_estimators = 50;
  const auto forest = ml::fit_forest(X, y, params, 77);
  const auto background = random_matrix(150, 5);
  const double base = explain::background_mean(forest, background);
  const auto instances = random_matrix(50, 5);
  int efficient = 0;
  for (std::size_t i = 0; i < instances.rows(); ++i) {
    const auto est = explain::shapley_mc(forest, instances.row(i), background, 2'000, derive_seed(7, "eff", i));
    double total = 0;
    for (double v : est.phi) total += v;
    efficient += std::abs(total - (est.prediction - base)) <= 3 * est.reference_se ? 1 : 0;
  }
  o.detail << "efficiency within 3 SE " << efficient << "/50";
  o.require(efficient == 50, "efficiency");

  const Linear lin{{1.5, -2.0, 0.25, 0.0}};
  const auto lin_bg = random_matrix(100, 4);
  std::vector<double> mean(4, 0.0);
  for (std::size_t r = 0; r < 100; ++r)
    for (std::size_t j = 0; j < 4; ++j) mean[j] += lin_bg(r, j) / 100.0;
  double lin_err = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<double> x = {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    const auto est = explain::shapley_mc(lin, x, lin_bg, 300, static_cast<std::uint64_t>(trial));
    for (std::size_t j = 0; j < 4; ++j)
      lin_err = std::max(lin_err, std::abs(est.phi[j] - lin.beta[j] * (x[j] - mean[j])));
  }
  o.detail << "; linear analytic max error " << lin_err;
  o.require(lin_err <= 1e-10, "linear case");

  const auto X3 = random_matrix(300, 3);
  std::vector<double> y3;
  for (std::size_t i = 0; i < X3.rows(); ++i) y3.push_back(X3(i, 0) * X3(i, 1) + X3(i, 2));
  params.n_estimators = 20;
  const auto f3 = ml::fit_forest(X3, y3, params, 78);
  const auto bg3 = random_matrix(30, 3);
  auto eval = [&](const std::vector<double>& z) { return f3.predict(z); };
  int agree = 0, total = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<double> x = {rng.uniform(), rng.uniform(), rng.uniform()};
    const auto exact = oracle::exact_shapley(eval, x, bg3);
    const auto est = explain::shapley_mc(f3, x, bg3, 3'000, derive_seed(8, "exh", trial));
    for (std::size_t j = 0; j < 3; ++j, ++total)
      agree += std::abs(est.phi[j] - exact[j]) <= 4 * est.phi_se[j] + 1e-9 ? 1 : 0;
  }
  o.detail << "; exhaustive oracle agreement " << agree << "/" << total;
  o.require(agree == total, "exhaustive oracle");
  return o;
}

bool top5_has_prefix(const explain::AttributionReport& rep, const std::string& prefix) {
  for (std::size_t r = 0; r < std::min<std::size_t>(5, rep.ranking.size()); ++r)
    if (rep.feature_names[rep.ranking[r]].rfind(prefix, 0) == 0) return true;
  return false;
}

Outcome tax_rankings() {
  Outcome o;
  int hits = 0;
  std::ostringstream r2s;
  for (auto seed : seeds()) {
    RunConfig cfg;
    cfg.seed = seed;
    const auto ds = dataset_from_city(synth::generate_synthetic(city_spec(cfg)), cfg);
    const auto rep = run_tax_experiment(ds.rows, ds.manifest, cfg, seed);
    const auto& res = rep.kinds[0];
    const auto& com = rep.kinds[1];
    const bool ok = !res.skipped && !com.skipped && top5_has_prefix(com.attribution, "people_in_area_") &&
                    top5_has_prefix(res.attribution, "avg_income_");
    hits += ok ? 1 : 0;
    if (!res.skipped && !com.skipped)
      r2s << ' ' << format_double(std::round(com.metrics.r2.value_or(0) * 100) / 100) << '/'
          << format_double(std::round(res.metrics.r2.value_or(0) * 100) / 100);
  }
  o.detail << "seeds with both expected top-5 features " << hits << "/10; commercial/residential R2:" << r2s.str()
           << " (informational)";
  o.require(hits >= 8, "at least 8 of 10 seeds");
  return o;
}

int run(const std::string& args) {
  const int status = std::system((std::string(MOBIPRICE_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_file(e.path().string());
  return out;
}

Outcome pipeline_determinism() {
  Outcome o;
  const fs::path work = fs::temp_directory_path() / ("mobiprice_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(work);
  fs::create_directories(work);
  const auto out = (work / "out").string();
  const auto conf = (work / "run.conf").string();
  {
    auto f = open_output(conf);
    f << "out_dir = " << out << "\nsynth_users = 150\nsynth_properties = 400\nn_estimators = 30\n"
      << "tax_n_estimators = 30\ntax_min_records = 40\nshap_samples = 8\nshap_eval_rows = 10\n";
  }
  const std::vector<std::string> stages = {"synth", "detect-stops", "infer-homes", "build-features", "train",
                                           "evaluate", "explain", "run-listprice", "run-tax"};
  auto full_run = [&] {
    for (const auto& s : stages)
      if (run(s + " --config " + conf) != 0) return false;
    return true;
  };
  const bool first_ok = full_run();
  fs::rename(out, work / "first");
  const bool second_ok = first_ok && full_run();
  o.require(first_ok && second_ok, "all stages exit 0");
  if (first_ok && second_ok) {
    const auto a = tree_contents(work / "first");
    const auto b = tree_contents(out);
    std::size_t differing = 0;
    for (const auto& [name, text] : a) {
      auto it = b.find(name);
      if (it == b.end() || it->second != text) ++differing;
    }
    differing += b.size() > a.size() ? b.size() - a.size() : 0;
    o.detail << "files compared " << a.size() << ", differing " << differing;
    o.require(differing == 0 && !a.empty(), "byte-identical output trees");
  }
  fs::remove_all(work);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<int, Outcome (*)()>> criteria = {
      {1, listprice_gain}, {2, spatial_joins},  {3, stop_detection},
      {4, home_inference}, {5, ridge_checks},   {6, forest_checks},
      {7, shapley_checks}, {8, tax_rankings},   {9, pipeline_determinism},
  };
  int failures = 0;
  for (const auto& [id, fn] : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failures += o.pass ? 0 : 1;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail.str() << " ("
              << static_cast<int>(seconds_since(t0)) << " s)" << std::endl;
  }
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criteria failed" : "acceptance: all criteria passed")
            << std::endl;
  return failures ? 1 : 0;
}
