#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mobiprice/core/error.hpp"
#include "mobiprice/core/text.hpp"
#include "mobiprice/features.hpp"
#include "mobiprice/home_census.hpp"
#include "mobiprice/ml/forest.hpp"
#include "mobiprice/synth.hpp"
#include "mobiprice/trajectory.hpp"

namespace mobiprice {

// Every tunable of a pipeline run. Empty input paths mean "use the files the
// synth stage wrote under out_dir".
struct RunConfig {
  std::string pings_path;
  std::string polygons_path;
  std::string demographics_path;
  std::string properties_path;
  std::string out_dir = "out";

  StopParams stops;
  HomeParams homes;
  FeatureParams features;

  ml::ForestParams forest;
  double ridge_lambda = 1.0;
  std::size_t k_folds = 5;
  double test_fraction = 0.1;
  LabelTransform label_transform = LabelTransform::identity;
  std::uint64_t seed = 42;

  std::size_t tax_n_estimators = 700;
  double tax_min_price = 50'000;
  std::size_t tax_sample_per_kind = 5'000;
  std::size_t tax_min_records = 100;

  std::size_t shap_samples = 32;
  std::size_t shap_background = 256;
  std::size_t shap_eval_rows = 50;
  std::size_t shap_top_k = 20;

  std::size_t listprice_seeds = 1;  // consecutive seeds compared by run-listprice

  synth::SyntheticCitySpec city;
};

struct ConfigKey {
  std::string name;
  std::string doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

namespace config_detail {

inline double to_double(const std::string& key, const std::string& v) {
  auto d = parse_double(v);
  if (!d || !std::isfinite(*d)) throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  return *d;
}
inline std::size_t to_size(const std::string& key, const std::string& v) {
  auto i = parse_int(v);
  if (!i || *i < 0) throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(*i);
}
inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError("config: " + key + " expects an unsigned integer, got '" + v + "'");
  return out;
}
inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: " + key + " expects true/false, got '" + v + "'");
}

template <class T>
ConfigKey str_key(std::string name, std::string doc, T RunConfig::*field) {
  return {name, std::move(doc), [field](RunConfig& c, const std::string& v) { c.*field = v; },
          [field](const RunConfig& c) { return c.*field; }};
}

#define MOBIPRICE_NUM_KEY(NAME, DOC, EXPR, PARSE, FORMAT)                                          \
  ConfigKey {                                                                                       \
    NAME, DOC, [](RunConfig& c, const std::string& v) { c.EXPR = PARSE(NAME, v); },                 \
        [](const RunConfig& c) { return FORMAT(c.EXPR); }                                           \
  }

inline std::string fmt_size(std::size_t v) { return std::to_string(v); }
inline std::string fmt_u64(std::uint64_t v) { return std::to_string(v); }
inline std::string fmt_bool(bool v) { return v ? "true" : "false"; }
inline std::string fmt_double(double v) { return format_double(v); }
inline int to_int(const std::string& key, const std::string& v) {
  auto i = parse_int(v);
  if (!i) throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  return static_cast<int>(*i);
}
inline std::string fmt_int(int v) { return std::to_string(v); }
inline std::int64_t to_i64(const std::string& key, const std::string& v) {
  auto i = parse_int(v);
  if (!i) throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  return *i;
}
inline std::string fmt_i64(std::int64_t v) { return std::to_string(v); }

}  // namespace config_detail

// The documented key list, in canonical serialization order.
inline const std::vector<ConfigKey>& config_keys() {
  using namespace config_detail;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back(str_key("pings_path", "ping CSV (default: <out_dir>/synth/pings.csv)", &RunConfig::pings_path));
    k.push_back(str_key("polygons_path", "CBG GeoJSON (default: <out_dir>/synth/cbg_polygons.geojson)",
                        &RunConfig::polygons_path));
    k.push_back(str_key("demographics_path", "CBG demographics CSV (default: <out_dir>/synth/demographics.csv)",
                        &RunConfig::demographics_path));
    k.push_back(str_key("properties_path", "property CSV (default: <out_dir>/synth/properties.csv)",
                        &RunConfig::properties_path));
    k.push_back(str_key("out_dir", "output root", &RunConfig::out_dir));

    k.push_back(MOBIPRICE_NUM_KEY("r_stop_m", "stop radius around the anchor ping", stops.r_stop_m, to_double, fmt_double));
    k.push_back(MOBIPRICE_NUM_KEY("min_stop_duration_s", "minimum stop span", stops.min_stop_duration_s, to_i64, fmt_i64));
    k.push_back(MOBIPRICE_NUM_KEY("max_gap_s", "largest gap between consecutive pings of one stop", stops.max_gap_s, to_i64, fmt_i64));
    k.push_back(MOBIPRICE_NUM_KEY("r_home_m", "home clustering radius", homes.r_home_m, to_double, fmt_double));
    k.push_back(MOBIPRICE_NUM_KEY("min_nights", "distinct nights required for a home", homes.min_nights, to_size, fmt_size));
    k.push_back({"home_nights", "qualifying nights: tue_fri or tue_thu",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "tue_fri") c.homes.nights = HomeNights::tue_fri;
                   else if (v == "tue_thu") c.homes.nights = HomeNights::tue_thu;
                   else throw ConfigError("config: home_nights must be tue_fri or tue_thu");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.homes.nights == HomeNights::tue_fri ? "tue_fri" : "tue_thu");
                 }});
    k.push_back({"utc_offset_hours", "fixed local-time offset used for day of week and nights",
                 [](RunConfig& c, const std::string& v) {
                   const double h = to_double("utc_offset_hours", v);
                   if (h < -14 || h > 14) throw ConfigError("config: utc_offset_hours out of range");
                   c.stops.utc_offset_hours = h;
                   c.homes.utc_offset_hours = h;
                   c.city.utc_offset_hours = h;
                 },
                 [](const RunConfig& c) { return format_double(c.stops.utc_offset_hours); }});

    k.push_back(MOBIPRICE_NUM_KEY("radius_m", "visitor aggregation radius around a property", features.radius_m, to_double, fmt_double));
    k.push_back({"resident_rule", "who counts as a resident: radius or cbg",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "radius") c.features.resident_rule = ResidentRule::radius;
                   else if (v == "cbg") c.features.resident_rule = ResidentRule::cbg;
                   else throw ConfigError("config: resident_rule must be radius or cbg");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.features.resident_rule == ResidentRule::radius ? "radius" : "cbg");
                 }});
    k.push_back({"commuting_mode", "prop_commuting source: behavioral or census",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "behavioral") c.features.commuting_mode = CommutingMode::behavioral;
                   else if (v == "census") c.features.commuting_mode = CommutingMode::census;
                   else throw ConfigError("config: commuting_mode must be behavioral or census");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.features.commuting_mode == CommutingMode::behavioral ? "behavioral"
                                                                                             : "census");
                 }});
    k.push_back(MOBIPRICE_NUM_KEY("commute_dwell_max_s", "behavioral mode: dwell below this counts as passing through",
                                  features.commute_dwell_max_s, to_double, fmt_double));

    k.push_back(MOBIPRICE_NUM_KEY("n_estimators", "trees per forest", forest.n_estimators, to_size, fmt_size));
    k.push_back(MOBIPRICE_NUM_KEY("mtry", "features tried per split (0 = ceil(p/3))", forest.mtry, to_size, fmt_size));
    k.push_back(MOBIPRICE_NUM_KEY("min_samples_leaf", "minimum rows per leaf", forest.min_samples_leaf, to_size, fmt_size));
    k.push_back(MOBIPRICE_NUM_KEY("max_depth", "tree depth limit (0 = unlimited)", forest.max_depth, to_size, fmt_size));
    k.push_back(MOBIPRICE_NUM_KEY("lambda", "meta ridge penalty", ridge_lambda, to_double, fmt_double));
    k.push_back(MOBIPRICE_NUM_KEY("k_folds", "out-of-fold folds for the meta model", k_folds, to_size, fmt_size));
    k.push_back(MOBIPRICE_NUM_KEY("test_fraction", "holdout share", test_fraction, to_double, fmt_double));
    k.push_back({"label_transform", "train/evaluate label: identity or log",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "identity") c.label_transform = LabelTransform::identity;
                   else if (v == "log") c.label_transform = LabelTransform::log;
                   else throw ConfigError("config: label_transform must be identity or log");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.label_transform == LabelTransform::log ? "log" : "identity");
                 }});
    k.push_back(MOBIPRICE_NUM_KEY("seed", "root seed for every random stream", seed, to_u64, fmt_u64));

    k.push_back(MOBIPRICE_NUM_KEY("tax_n_estimators", "trees per tax-experiment forest", tax_n_estimators, to_size, fmt_size));
    k.push_back(MOBIPRICE_NUM_KEY("tax_min_price", "tax experiment drops cheaper properties", tax_min_price, to_double, fmt_double));
    k.push_back(MOBIPRICE_NUM_KEY("tax_sample_per_kind", "records sampled per property kind", tax_sample_per_kind, to_size, fmt_size));
    k.push_back(MOBIPRICE_NUM_KEY("tax_min_records", "kinds with fewer records are skipped", tax_min_records, to_size, fmt_size));
    k.push_back(MOBIPRICE_NUM_KEY("shap_samples", "permutations per explained row", shap_samples, to_size, fmt_size));
    k.push_back(MOBIPRICE_NUM_KEY("shap_background", "background rows drawn from training data", shap_background, to_size, fmt_size));
    k.push_back(MOBIPRICE_NUM_KEY("shap_eval_rows", "holdout rows explained", shap_eval_rows, to_size, fmt_size));
    k.push_back(MOBIPRICE_NUM_KEY("shap_top_k", "features listed in a top-k report", shap_top_k, to_size, fmt_size));
    k.push_back(MOBIPRICE_NUM_KEY("listprice_seeds", "seeds compared by run-listprice", listprice_seeds, to_size, fmt_size));

    k.push_back(MOBIPRICE_NUM_KEY("synth_users", "generator: users", city.n_users, to_size, fmt_size));
    k.push_back(MOBIPRICE_NUM_KEY("synth_properties", "generator: properties", city.n_properties, to_size, fmt_size));
    k.push_back(MOBIPRICE_NUM_KEY("synth_days", "generator: simulated days", city.n_days, to_size, fmt_size));
    k.push_back(MOBIPRICE_NUM_KEY("synth_cbg_rows", "generator: CBG grid rows", city.cbg_rows, to_int, fmt_int));
    k.push_back(MOBIPRICE_NUM_KEY("synth_cbg_cols", "generator: CBG grid columns", city.cbg_cols, to_int, fmt_int));
    k.push_back(MOBIPRICE_NUM_KEY("synth_commercial_share", "generator: share of commercial properties", city.commercial_share, to_double, fmt_double));
    k.push_back(MOBIPRICE_NUM_KEY("synth_jitter_min_m", "generator: smallest per-user GPS noise", city.jitter_min_m, to_double, fmt_double));
    k.push_back(MOBIPRICE_NUM_KEY("synth_jitter_max_m", "generator: largest per-user GPS noise", city.jitter_max_m, to_double, fmt_double));
    k.push_back(MOBIPRICE_NUM_KEY("synth_night_observed_prob", "generator: chance a night is observed", city.night_observed_prob, to_double, fmt_double));
    k.push_back(MOBIPRICE_NUM_KEY("synth_enable_trips", "generator: users leave home", city.enable_trips, to_bool, fmt_bool));
    k.push_back(MOBIPRICE_NUM_KEY("synth_noise_sd", "generator: price noise stddev", city.noise_sd, to_double, fmt_double));
    k.push_back(MOBIPRICE_NUM_KEY("synth_com_traffic", "generator: commercial price per weekday visitor", city.price.com_traffic, to_double, fmt_double));
    k.push_back(MOBIPRICE_NUM_KEY("synth_res_visitor_income", "generator: residential price per USD of visitor income",
                                  city.price.res_visitor_income, to_double, fmt_double));
    return k;
  }();
  return keys;
}

#undef MOBIPRICE_NUM_KEY

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

// Reads `key = value` lines; '#' starts a comment.
inline RunConfig parse_config(const std::string& text, RunConfig cfg = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    set_config_value(cfg, std::string(trim(body.substr(0, eq))), std::string(trim(body.substr(eq + 1))));
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

// Canonical `key = value` text: every key, fixed order.
inline std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

inline std::string config_digest(const RunConfig& cfg) { return hex64(fnv1a64(serialize_config(cfg))); }

inline void validate_config(const RunConfig& c) {
  if (!(c.test_fraction > 0 && c.test_fraction < 1)) throw ConfigError("config: test_fraction must be in (0, 1)");
  if (c.k_folds < 2) throw ConfigError("config: k_folds must be >= 2");
  if (c.forest.n_estimators == 0 || c.tax_n_estimators == 0) throw ConfigError("config: n_estimators must be >= 1");
  if (c.forest.min_samples_leaf == 0) throw ConfigError("config: min_samples_leaf must be >= 1");
  if (c.ridge_lambda < 0) throw ConfigError("config: lambda must be >= 0");
  if (c.features.radius_m <= 0 || c.stops.r_stop_m <= 0 || c.homes.r_home_m <= 0)
    throw ConfigError("config: radii must be > 0");
  if (c.shap_samples == 0 || c.shap_background == 0) throw ConfigError("config: shap sample counts must be >= 1");
  if (c.out_dir.empty()) throw ConfigError("config: out_dir must not be empty");
}

}  // namespace mobiprice
