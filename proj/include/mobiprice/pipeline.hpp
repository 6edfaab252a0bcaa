#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mobiprice/config.hpp"
#include "mobiprice/core/error.hpp"
#include "mobiprice/core/random.hpp"
#include "mobiprice/core/text.hpp"
#include "mobiprice/explain.hpp"
#include "mobiprice/features.hpp"
#include "mobiprice/geo.hpp"
#include "mobiprice/home_census.hpp"
#include "mobiprice/ml/forest.hpp"
#include "mobiprice/ml/metrics.hpp"
#include "mobiprice/ml/model_io.hpp"
#include "mobiprice/ml/stacked.hpp"
#include "mobiprice/synth.hpp"
#include "mobiprice/trajectory.hpp"

namespace mobiprice {

inline constexpr const char* kModelFormat = "mobiprice-model/1";

// ---------------------------------------------------------------------------
// In-memory building blocks

struct MobilityBuild {
  std::vector<Stop> stops;
  std::vector<HomeProfile> homes;
  HomeDropReport home_report;
};

inline MobilityBuild build_mobility(const PingStreams& streams, std::span<const CbgPolygon> polygons,
                                    const DemographicsTable& table, const RunConfig& cfg) {
  MobilityBuild b;
  b.stops = detect_all_stops(streams, cfg.stops);
  b.homes = infer_homes(b.stops, cfg.homes, &b.home_report);
  for (auto& h : b.homes) h = attach_demographics(std::move(h), polygons, table, &b.home_report);
  return b;
}

// Synthetic city to assembled feature rows, without touching the disk.
inline AssembledDataset dataset_from_city(const synth::SyntheticCity& city, const RunConfig& cfg,
                                          MobilityBuild* mobility_out = nullptr) {
  auto mob = build_mobility(synth::to_streams(city.pings), city.polygons, city.demographics, cfg);
  const MobilityContext ctx(mob.stops, mob.homes, cfg.features.cell_size_deg);
  auto ds = assemble_dataset(city.properties, city.polygons, city.demographics, ctx, cfg.features,
                             LabelTransform::identity);
  if (mobility_out) *mobility_out = std::move(mob);
  return ds;
}

inline std::vector<std::size_t> iota_indices(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> v;
  for (std::size_t i = begin; i < end; ++i) v.push_back(i);
  return v;
}

inline ml::StackedConfig stacked_config(const RunConfig& cfg, const FeatureManifest& m, bool dynamic_b,
                                        std::uint64_t seed) {
  ml::StackedConfig sc;
  sc.forest_a = cfg.forest;
  sc.forest_b = cfg.forest;
  sc.columns_a = iota_indices(0, m.n_static());
  sc.columns_b = dynamic_b ? iota_indices(m.n_static(), m.size()) : sc.columns_a;
  sc.lambda = cfg.ridge_lambda;
  sc.k_folds = cfg.k_folds;
  sc.seed = seed;
  return sc;
}

inline void relabel(std::vector<FeatureRow>& rows, LabelTransform t) {
  for (auto& r : rows) r.label = apply_label_transform(r.price, t);
}

// ---------------------------------------------------------------------------
// List-price comparison

struct ListPriceReport {
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  ml::Metrics baseline;   // stacked(static, static)
  ml::Metrics treatment;  // stacked(static, dynamic)
  std::string baseline_digest;
  std::string treatment_digest;

  // Share by which the treatment lowers holdout MSE.
  double relative_improvement() const { return (baseline.mse - treatment.mse) / baseline.mse; }
};

inline std::string stacked_config_digest(const ml::StackedConfig& sc) {
  std::ostringstream s;
  auto forest = [&](const ml::ForestParams& p) {
    s << p.n_estimators << ' ' << p.mtry << ' ' << p.min_samples_leaf << ' ' << p.max_depth << ';';
  };
  forest(sc.forest_a);
  forest(sc.forest_b);
  for (auto c : sc.columns_a) s << c << ',';
  s << ';';
  for (auto c : sc.columns_b) s << c << ',';
  s << ';' << format_double(sc.lambda) << ';' << sc.k_folds << ';' << sc.seed;
  return digest_string(s.str());
}

// Both stacked models share the split, the imputer and the seed; they differ
// only in the columns read by the second forest.
inline ListPriceReport run_listprice_experiment(std::vector<FeatureRow> rows, const FeatureManifest& manifest,
                                                const RunConfig& cfg, std::uint64_t seed) {
  if (rows.size() < 50) throw DataError("list-price experiment needs at least 50 rows");
  relabel(rows, cfg.label_transform);
  const auto sp = ml::split(rows.size(), cfg.test_fraction, derive_seed(seed, "split"));
  const auto imputer = Imputer::fit(rows, sp.train);
  const auto X_train = design_matrix(rows, sp.train, imputer);
  const auto X_test = design_matrix(rows, sp.test, imputer);
  const auto y_train = labels_of(rows, sp.train);
  const auto y_test = labels_of(rows, sp.test);

  ListPriceReport rep;
  rep.seed = seed;
  rep.n_train = sp.train.size();
  rep.n_test = sp.test.size();
  const std::uint64_t model_seed = derive_seed(seed, "stacked");
  const auto base_cfg = stacked_config(cfg, manifest, false, model_seed);
  const auto treat_cfg = stacked_config(cfg, manifest, true, model_seed);
  rep.baseline_digest = stacked_config_digest(base_cfg);
  rep.treatment_digest = stacked_config_digest(treat_cfg);
  rep.baseline = ml::evaluate(ml::fit_stacked(X_train, y_train, base_cfg), X_test, y_test);
  rep.treatment = ml::evaluate(ml::fit_stacked(X_train, y_train, treat_cfg), X_test, y_test);
  return rep;
}

// ---------------------------------------------------------------------------
// Tax-value attribution experiment

struct TaxKindReport {
  PropertyKind kind = PropertyKind::unknown;
  std::size_t n_records = 0;  // after the price filter and sampling
  bool skipped = false;
  std::string note;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  ml::Metrics metrics;  // log-price space
  explain::AttributionReport attribution;
  std::vector<std::string> explained_ids;
};

struct TaxReport {
  std::vector<TaxKindReport> kinds;  // residential, commercial
};

// Forest on dynamic features only, log label, one model per kind.
inline TaxKindReport run_tax_kind(const std::vector<FeatureRow>& all_rows, const FeatureManifest& manifest,
                                  const RunConfig& cfg, std::uint64_t seed, PropertyKind kind) {
  TaxKindReport rep;
  rep.kind = kind;
  const auto stream = static_cast<std::uint64_t>(kind);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < all_rows.size(); ++i) {
    if (all_rows[i].kind == kind && all_rows[i].price >= cfg.tax_min_price) pool.push_back(i);
  }
  if (pool.size() > cfg.tax_sample_per_kind) {
    Rng rng(derive_seed(seed, "tax_sample", stream));
    rng.shuffle(std::span<std::size_t>(pool));
    pool.resize(cfg.tax_sample_per_kind);
    std::sort(pool.begin(), pool.end());
  }
  rep.n_records = pool.size();
  if (pool.size() < std::max<std::size_t>(cfg.tax_min_records, 2)) {
    rep.skipped = true;
    rep.note = "too few records";
    return rep;
  }
  std::vector<FeatureRow> rows;
  for (auto i : pool) rows.push_back(all_rows[i]);
  relabel(rows, LabelTransform::log);

  const auto sp = ml::split(rows.size(), cfg.test_fraction, derive_seed(seed, "tax_split", stream));
  const auto imputer = Imputer::fit(rows, sp.train);
  const auto dyn = iota_indices(manifest.n_static(), manifest.size());
  const auto X_train = design_matrix(rows, sp.train, imputer).select_cols(dyn);
  const auto X_test = design_matrix(rows, sp.test, imputer).select_cols(dyn);
  const auto y_train = labels_of(rows, sp.train);
  const auto y_test = labels_of(rows, sp.test);

  auto params = cfg.forest;
  params.n_estimators = cfg.tax_n_estimators;
  const auto forest = ml::fit_forest(X_train, y_train, params, derive_seed(seed, "tax_forest", stream));
  rep.n_train = sp.train.size();
  rep.n_test = sp.test.size();
  rep.metrics = ml::evaluate(forest, X_test, y_test);

  const std::size_t n_eval = std::min(cfg.shap_eval_rows, X_test.rows());
  const auto eval_rows = X_test.select_rows(iota_indices(0, n_eval));
  for (std::size_t i = 0; i < n_eval; ++i) rep.explained_ids.push_back(rows[sp.test[i]].property_id);
  const auto background =
      explain::sample_background(X_train, cfg.shap_background, derive_seed(seed, "tax_background", stream));
  rep.attribution = explain::top_k_report(forest, eval_rows, background, manifest.dynamic_names,
                                          std::min(cfg.shap_top_k, dyn.size()), cfg.shap_samples,
                                          derive_seed(seed, "tax_shap", stream));
  return rep;
}

inline TaxReport run_tax_experiment(const std::vector<FeatureRow>& rows, const FeatureManifest& manifest,
                                    const RunConfig& cfg, std::uint64_t seed) {
  TaxReport rep;
  for (auto kind : {PropertyKind::residential, PropertyKind::commercial})
    rep.kinds.push_back(run_tax_kind(rows, manifest, cfg, seed, kind));
  return rep;
}

// ---------------------------------------------------------------------------
// Model artifact: stacked model plus the feature order and imputation it was
// trained with.

struct ModelArtifact {
  std::string config_digest;
  LabelTransform label_transform = LabelTransform::identity;
  std::vector<std::string> feature_names;
  Imputer imputer;
  ml::StackedModel model;
};

inline void write_model(const std::string& path, const ModelArtifact& a) {
  auto out = open_output(path);
  out << kModelFormat << '\n';
  out << "config_digest " << a.config_digest << '\n';
  out << "label_transform " << (a.label_transform == LabelTransform::log ? "log" : "identity") << '\n';
  out << "features " << a.feature_names.size();
  for (const auto& n : a.feature_names) out << ' ' << n;
  out << '\n';
  ml::io::write_vector(out, "imputer", a.imputer.means);
  ml::write_stacked(out, a.model);
}

inline ModelArtifact read_model(const std::string& path) {
  auto in = open_input(path);
  ml::io::TokenReader r(in);
  r.expect(kModelFormat);
  ModelArtifact a;
  r.expect("config_digest");
  a.config_digest = r.word();
  r.expect("label_transform");
  const auto lt = r.word();
  if (lt != "log" && lt != "identity") throw DataError("model file: bad label transform");
  a.label_transform = lt == "log" ? LabelTransform::log : LabelTransform::identity;
  r.expect("features");
  a.feature_names.resize(r.count());
  for (auto& n : a.feature_names) n = r.word();
  a.imputer.means = ml::io::read_vector(r, "imputer");
  a.model = ml::read_stacked(r);
  if (a.imputer.means.size() != a.feature_names.size())
    throw DataError("model file: imputer width does not match the feature list");
  return a;
}

// ---------------------------------------------------------------------------
// Run manifest: one section per stage, rewritten in place when a stage reruns.

class RunManifest {
 public:
  static constexpr std::array<std::string_view, 9> kStageOrder = {
      "synth", "stops", "homes", "features", "train", "evaluate", "explain", "listprice", "tax"};

  explicit RunManifest(std::string out_dir) : out_dir_(std::move(out_dir)) {
    const auto path = file();
    if (!std::filesystem::exists(path)) return;
    std::istringstream in(read_file(path));
    std::string line, current;
    while (std::getline(in, line)) {
      if (line.size() > 2 && line.front() == '[' && line.back() == ']') {
        current = line.substr(1, line.size() - 2);
        sections_[current];
      } else if (!current.empty() && !line.empty()) {
        sections_[current].push_back(line);
      }
    }
  }

  std::string file() const { return out_dir_ + "/manifest.txt"; }

  // Path as recorded: relative to out_dir when inside it.
  std::string display(const std::string& path) const {
    const auto rel = std::filesystem::path(path).lexically_relative(out_dir_).generic_string();
    return (!rel.empty() && rel.rfind("..", 0) != 0) ? rel : path;
  }

  void set_section(const std::string& stage, std::vector<std::string> lines) {
    sections_[stage] = std::move(lines);
  }

  void save() const {
    auto out = open_output(file());
    auto rank = [](const std::string& s) {
      for (std::size_t i = 0; i < kStageOrder.size(); ++i)
        if (kStageOrder[i] == s) return i;
      return kStageOrder.size();
    };
    std::vector<std::string> names;
    for (const auto& [name, _] : sections_) names.push_back(name);
    std::stable_sort(names.begin(), names.end(),
                     [&](const std::string& a, const std::string& b) { return rank(a) < rank(b); });
    bool first = true;
    for (const auto& name : names) {
      if (!first) out << '\n';
      first = false;
      out << '[' << name << "]\n";
      for (const auto& l : sections_.at(name)) out << l << '\n';
    }
  }

 private:
  std::string out_dir_;
  std::map<std::string, std::vector<std::string>> sections_;
};

// Collects what one stage read and wrote, then records it in the manifest.
class StageRecord {
 public:
  StageRecord(const RunConfig& cfg, std::string stage) : cfg_(cfg), stage_(std::move(stage)) {
    std::filesystem::create_directories(dir());
  }

  std::string dir() const { return cfg_.out_dir + "/" + stage_; }
  std::string path(const std::string& file) const { return dir() + "/" + file; }

  void input(const std::string& p) { inputs_.push_back(p); }
  void output(const std::string& p) { outputs_.push_back(p); }
  void note(const std::string& key, const std::string& value) { notes_.emplace_back(key, value); }
  void note(const std::string& key, std::size_t value) { note(key, std::to_string(value)); }

  void commit() {
    const std::string cfg_path = path("config.txt");
    {
      auto out = open_output(cfg_path);
      out << serialize_config(cfg_);
    }
    RunManifest manifest(cfg_.out_dir);
    std::vector<std::string> lines;
    lines.push_back("config_digest = " + config_digest(cfg_));
    lines.push_back("config_file = " + manifest.display(cfg_path));
    lines.push_back(std::string("feature_pipeline = ") + kFeaturePipelineVersion);
    lines.push_back(std::string("model_format = ") + kModelFormat);
    for (const auto& [k, v] : notes_) lines.push_back("note " + k + " = " + v);
    for (const auto& p : inputs_) lines.push_back("input " + manifest.display(p) + " " + digest_file(p));
    for (const auto& p : outputs_) lines.push_back("output " + manifest.display(p) + " " + digest_file(p));
    manifest.set_section(stage_, std::move(lines));
    manifest.save();
  }

 private:
  const RunConfig& cfg_;
  std::string stage_;
  std::vector<std::string> inputs_, outputs_;
  std::vector<std::pair<std::string, std::string>> notes_;
};

// ---------------------------------------------------------------------------
// File-backed stages. Each reads its predecessor's persisted output, so a run
// can restart from any stage.

struct InputPaths {
  std::string pings, polygons, demographics, properties;
  std::string stops, homes, features, feature_manifest, model;
};

inline InputPaths input_paths(const RunConfig& cfg) {
  const auto synth_paths = synth::SyntheticPaths::in_dir(cfg.out_dir + "/synth");
  auto pick = [](const std::string& given, const std::string& fallback) {
    return given.empty() ? fallback : given;
  };
  InputPaths p;
  p.pings = pick(cfg.pings_path, synth_paths.pings);
  p.polygons = pick(cfg.polygons_path, synth_paths.polygons);
  p.demographics = pick(cfg.demographics_path, synth_paths.demographics);
  p.properties = pick(cfg.properties_path, synth_paths.properties);
  p.stops = cfg.out_dir + "/stops/stops.csv";
  p.homes = cfg.out_dir + "/homes/homes.csv";
  p.features = cfg.out_dir + "/features/features.csv";
  p.feature_manifest = cfg.out_dir + "/features/feature_manifest.csv";
  p.model = cfg.out_dir + "/train/model.txt";
  return p;
}

inline synth::SyntheticCitySpec city_spec(const RunConfig& cfg) {
  auto spec = cfg.city;
  spec.seed = derive_seed(cfg.seed, "city");
  spec.utc_offset_hours = cfg.stops.utc_offset_hours;
  spec.truth_radius_m = cfg.features.radius_m;
  return spec;
}

inline void stage_synth(const RunConfig& cfg) {
  StageRecord rec(cfg, "synth");
  const auto city = synth::generate_synthetic(city_spec(cfg));
  const auto paths = synth::SyntheticPaths::in_dir(rec.dir());
  synth::write_synthetic(city, paths);
  for (const auto& p : {paths.pings, paths.polygons, paths.demographics, paths.properties, paths.truth_homes,
                        paths.truth_prices})
    rec.output(p);
  rec.note("users", city.users.size());
  rec.note("properties", city.properties.size());
  rec.note("pings", city.pings.size());
  rec.commit();
}

inline void stage_detect_stops(const RunConfig& cfg) {
  const auto in = input_paths(cfg);
  StageRecord rec(cfg, "stops");
  const auto parsed = parse_pings(in.pings);
  const auto stops = detect_all_stops(parsed.streams, cfg.stops);
  write_stops_csv(in.stops, stops);
  rec.input(in.pings);
  rec.output(in.stops);
  rec.note("ping_rows", parsed.report.rows);
  rec.note("pings_accepted", parsed.report.accepted);
  rec.note("rows_malformed", parsed.report.malformed);
  rec.note("rows_out_of_range", parsed.report.out_of_range);
  rec.note("stops", stops.size());
  rec.commit();
}

inline void stage_infer_homes(const RunConfig& cfg) {
  const auto in = input_paths(cfg);
  StageRecord rec(cfg, "homes");
  const auto stops = read_stops_csv(in.stops);
  const auto polygons = load_cbg_geojson(in.polygons);
  const auto table = read_demographics_csv(in.demographics);
  HomeDropReport report;
  auto homes = infer_homes(stops, cfg.homes, &report);
  for (auto& h : homes) h = attach_demographics(std::move(h), polygons, table, &report);
  write_homes_csv(in.homes, homes);
  for (const auto& p : {in.stops, in.polygons, in.demographics}) rec.input(p);
  rec.output(in.homes);
  rec.note("users_with_stops", report.users);
  rec.note("homes", homes.size());
  rec.note("dropped_no_home", report.no_home);
  rec.note("home_outside_polygons", report.no_cbg);
  rec.note("home_without_demographics", report.no_demographics);
  rec.commit();
}

inline void stage_build_features(const RunConfig& cfg) {
  const auto in = input_paths(cfg);
  StageRecord rec(cfg, "features");
  PropertyReadReport prop_report;
  auto properties = read_properties_csv(in.properties, &prop_report);
  const auto polygons = load_cbg_geojson(in.polygons);
  const auto table = read_demographics_csv(in.demographics);
  const auto stops = read_stops_csv(in.stops);
  auto homes = read_homes_csv(in.homes, table);
  const MobilityContext ctx(stops, std::move(homes), cfg.features.cell_size_deg);
  const auto ds =
      assemble_dataset(std::move(properties), polygons, table, ctx, cfg.features, LabelTransform::identity);
  write_features_csv(in.features, ds.rows, ds.manifest);
  // Imputation values shown here are those of the default training split.
  const auto sp = ml::split(ds.rows.size(), cfg.test_fraction, derive_seed(cfg.seed, "split"));
  write_feature_manifest_csv(in.feature_manifest, ds.manifest, Imputer::fit(ds.rows, sp.train));
  for (const auto& p : {in.properties, in.polygons, in.demographics, in.stops, in.homes}) rec.input(p);
  rec.output(in.features);
  rec.output(in.feature_manifest);
  rec.note("properties_rejected", prop_report.rejected);
  rec.note("rows", ds.report.rows);
  rec.note("cbg_missing", ds.report.cbg_missing);
  rec.note("resident_rule", cfg.features.resident_rule == ResidentRule::radius ? "radius" : "cbg");
  rec.note("cbg_rule_fallbacks", ds.report.cbg_rule_fallbacks);
  rec.note("missing_slots", ds.report.missing_slots);
  rec.commit();
}

struct LoadedFeatures {
  FeatureManifest manifest;
  std::vector<FeatureRow> rows;
};

inline LoadedFeatures load_features(const RunConfig& cfg) {
  LoadedFeatures f;
  f.rows = read_features_csv(input_paths(cfg).features, f.manifest, cfg.label_transform);
  if (f.rows.size() < 2) throw DataError("features table has fewer than 2 rows");
  return f;
}

inline void stage_train(const RunConfig& cfg) {
  const auto in = input_paths(cfg);
  StageRecord rec(cfg, "train");
  const auto data = load_features(cfg);
  const auto sp = ml::split(data.rows.size(), cfg.test_fraction, derive_seed(cfg.seed, "split"));
  if (sp.train.size() < cfg.k_folds) throw DataError("too few training rows for the fold count");
  ModelArtifact a;
  a.config_digest = config_digest(cfg);
  a.label_transform = cfg.label_transform;
  a.feature_names = data.manifest.all_names();
  a.imputer = Imputer::fit(data.rows, sp.train);
  const auto sc = stacked_config(cfg, data.manifest, true, derive_seed(cfg.seed, "stacked"));
  a.model = ml::fit_stacked(design_matrix(data.rows, sp.train, a.imputer), labels_of(data.rows, sp.train), sc);
  write_model(in.model, a);
  rec.input(in.features);
  rec.output(in.model);
  rec.note("train_rows", sp.train.size());
  rec.note("stacked_config_digest", stacked_config_digest(sc));
  rec.commit();
}

inline ModelArtifact load_model_for(const RunConfig& cfg, const LoadedFeatures& data) {
  auto a = read_model(input_paths(cfg).model);
  if (a.feature_names != data.manifest.all_names())
    throw DataError("model feature list does not match the features table");
  return a;
}

inline void stage_evaluate(const RunConfig& cfg) {
  const auto in = input_paths(cfg);
  StageRecord rec(cfg, "evaluate");
  auto data = load_features(cfg);
  const auto a = load_model_for(cfg, data);
  relabel(data.rows, a.label_transform);
  const auto sp = ml::split(data.rows.size(), cfg.test_fraction, derive_seed(cfg.seed, "split"));
  const auto out_path = rec.path("metrics.csv");
  auto out = open_output(out_path);
  out << "split,rows,mse,r2\n";
  for (const auto& [name, idx] : {std::pair{"train", &sp.train}, std::pair{"test", &sp.test}}) {
    const auto m = ml::evaluate(a.model, design_matrix(data.rows, *idx, a.imputer), labels_of(data.rows, *idx));
    out << name << ',' << idx->size() << ',' << format_double(m.mse) << ','
        << (m.r2 ? format_double(*m.r2) : "") << '\n';
  }
  out.close();
  rec.input(in.features);
  rec.input(in.model);
  rec.output(out_path);
  rec.commit();
}

inline void stage_explain(const RunConfig& cfg) {
  const auto in = input_paths(cfg);
  StageRecord rec(cfg, "explain");
  const auto data = load_features(cfg);
  const auto a = load_model_for(cfg, data);
  const auto sp = ml::split(data.rows.size(), cfg.test_fraction, derive_seed(cfg.seed, "split"));
  const auto X_train = design_matrix(data.rows, sp.train, a.imputer);
  const std::size_t n_eval = std::min(cfg.shap_eval_rows, sp.test.size());
  const std::vector<std::size_t> eval_idx(sp.test.begin(), sp.test.begin() + static_cast<std::ptrdiff_t>(n_eval));
  std::vector<std::string> ids;
  for (auto i : eval_idx) ids.push_back(data.rows[i].property_id);
  const auto background =
      explain::sample_background(X_train, cfg.shap_background, derive_seed(cfg.seed, "background"));
  const auto names = data.manifest.all_names();
  const auto rep = explain::top_k_report(a.model, design_matrix(data.rows, eval_idx, a.imputer), background,
                                         names, std::min(cfg.shap_top_k, names.size()), cfg.shap_samples,
                                         derive_seed(cfg.seed, "shap"));
  explain::write_top_k_csv(rec.path("top_k.csv"), rep);
  explain::write_shapley_matrix_csv(rec.path("shapley_values.csv"), rep, ids);
  rec.input(in.features);
  rec.input(in.model);
  rec.output(rec.path("top_k.csv"));
  rec.output(rec.path("shapley_values.csv"));
  rec.note("explained_rows", n_eval);
  rec.note("samples_per_row", cfg.shap_samples);
  rec.commit();
}

inline std::string metric_cell(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

inline void stage_listprice(const RunConfig& cfg) {
  const auto in = input_paths(cfg);
  StageRecord rec(cfg, "listprice");
  const auto data = load_features(cfg);
  const auto out_path = rec.path("comparison.csv");
  auto out = open_output(out_path);
  out << "seed,model,rf_b_columns,train_rows,test_rows,mse,r2,relative_mse_improvement,stacked_config_digest\n";
  const std::size_t n_seeds = std::max<std::size_t>(cfg.listprice_seeds, 1);
  for (std::size_t s = 0; s < n_seeds; ++s) {
    const std::uint64_t seed = cfg.seed + s;
    const auto rep = run_listprice_experiment(data.rows, data.manifest, cfg, seed);
    out << seed << ",static_static,static," << rep.n_train << ',' << rep.n_test << ','
        << format_double(rep.baseline.mse) << ',' << metric_cell(rep.baseline.r2) << ",,"
        << rep.baseline_digest << '\n';
    out << seed << ",static_dynamic,dynamic," << rep.n_train << ',' << rep.n_test << ','
        << format_double(rep.treatment.mse) << ',' << metric_cell(rep.treatment.r2) << ','
        << format_double(rep.relative_improvement()) << ',' << rep.treatment_digest << '\n';
  }
  out.close();
  rec.input(in.features);
  rec.output(out_path);
  rec.commit();
}

inline void stage_tax(const RunConfig& cfg, std::ostream* warnings = nullptr) {
  const auto in = input_paths(cfg);
  StageRecord rec(cfg, "tax");
  const auto data = load_features(cfg);
  const auto rep = run_tax_experiment(data.rows, data.manifest, cfg, cfg.seed);
  const auto summary = rec.path("summary.csv");
  auto out = open_output(summary);
  out << "kind,records,train_rows,test_rows,mse_log,r2_log,status\n";
  rec.input(in.features);
  for (const auto& k : rep.kinds) {
    const std::string kind(kind_name(k.kind));
    if (k.skipped) {
      out << kind << ',' << k.n_records << ",,,,,skipped: " << k.note << '\n';
      if (warnings) *warnings << "warning: " << kind << " skipped (" << k.n_records << " records)\n";
      rec.note(kind + "_status", "skipped");
      continue;
    }
    out << kind << ',' << k.n_records << ',' << k.n_train << ',' << k.n_test << ','
        << format_double(k.metrics.mse) << ',' << metric_cell(k.metrics.r2) << ",ok\n";
    const auto top = rec.path(kind + "_top_k.csv");
    const auto matrix = rec.path(kind + "_shapley_values.csv");
    explain::write_top_k_csv(top, k.attribution);
    explain::write_shapley_matrix_csv(matrix, k.attribution, k.explained_ids);
    rec.output(top);
    rec.output(matrix);
    rec.note(kind + "_status", "ok");
  }
  out.close();
  rec.output(summary);
  rec.commit();
}

}  // namespace mobiprice
