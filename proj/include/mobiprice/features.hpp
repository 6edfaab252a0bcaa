#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mobiprice/core/error.hpp"
#include "mobiprice/core/matrix.hpp"
#include "mobiprice/core/parallel.hpp"
#include "mobiprice/core/text.hpp"
#include "mobiprice/geo.hpp"
#include "mobiprice/home_census.hpp"
#include "mobiprice/trajectory.hpp"

namespace mobiprice {

inline constexpr const char* kFeaturePipelineVersion = "mobiprice-features/1";
inline constexpr int kDaysPerWeek = 7;

// Imputation sentinel for feature slots without an observed value.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

enum class PropertyKind { residential, commercial, unknown };

inline std::string_view kind_name(PropertyKind k) {
  switch (k) {
    case PropertyKind::residential: return "residential";
    case PropertyKind::commercial: return "commercial";
    default: return "unknown";
  }
}

inline PropertyKind parse_kind(std::string_view s) {
  s = trim(s);
  if (s == "residential") return PropertyKind::residential;
  if (s == "commercial") return PropertyKind::commercial;
  return PropertyKind::unknown;
}

struct PropertyRecord {
  std::string property_id;
  GeoPoint loc;
  double price = 0.0;  // list price or tax assessment, USD
  double beds = 0.0;
  double baths = 0.0;
  double sqft = 0.0;
  PropertyKind kind = PropertyKind::unknown;
  std::optional<std::string> cbg;
};

inline constexpr const char* kPropertyHeader = "property_id,lat,lon,price,beds,baths,sqft,kind";

struct PropertyReadReport {
  std::size_t rows = 0;
  std::size_t rejected = 0;  // bad coordinates, non-positive price or unparseable
};

inline std::vector<PropertyRecord> read_properties_csv(const std::string& path,
                                                       PropertyReadReport* report = nullptr) {
  std::vector<PropertyRecord> out;
  PropertyReadReport rep;
  for_each_csv_row(
      path,
      [&](const std::vector<std::string>& f, std::size_t) {
        ++rep.rows;
        if (f.size() != 8 || f[0].empty()) {
          ++rep.rejected;
          return;
        }
        auto lat = parse_double(f[1]), lon = parse_double(f[2]), price = parse_double(f[3]);
        auto beds = parse_double(f[4]), baths = parse_double(f[5]), sqft = parse_double(f[6]);
        if (!lat || !lon || !price || !beds || !baths || !sqft || !(*price > 0.0) ||
            !is_valid({*lat, *lon})) {
          ++rep.rejected;
          return;
        }
        out.push_back({f[0], {*lat, *lon}, *price, *beds, *baths, *sqft, parse_kind(f[7]), {}});
      },
      kPropertyHeader);
  if (report) *report = rep;
  return out;
}

inline void write_properties_csv(const std::string& path, std::span<const PropertyRecord> props) {
  auto out = open_output(path);
  out << kPropertyHeader << '\n';
  for (const auto& p : props) {
    out << csv_escape(p.property_id) << ',' << format_double(p.loc.lat) << ','
        << format_double(p.loc.lon) << ',' << format_double(p.price) << ','
        << format_double(p.beds) << ',' << format_double(p.baths) << ','
        << format_double(p.sqft) << ',' << kind_name(p.kind) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Feature naming. Order is fixed; models depend on it.

// Demographic fields averaged over visitors (first K DemoFields).
inline constexpr std::size_t kVisitorDemoCount = 7;
inline constexpr std::size_t kPerDayDynamic = 2 + kVisitorDemoCount;
inline constexpr std::size_t kDynamicFeatureCount = kDaysPerWeek * kPerDayDynamic + 1;

inline std::vector<std::string> static_feature_names() {
  std::vector<std::string> names = {"beds",           "baths",           "sqft",
                                    "kind_residential", "kind_commercial", "kind_unknown",
                                    "lat",            "lon"};
  for (auto s : kDemoShortNames) names.push_back("cbg_" + std::string(s));
  return names;
}

inline std::vector<std::string> dynamic_feature_names() {
  std::vector<std::string> names;
  for (int d = 0; d < kDaysPerWeek; ++d) {
    const std::string suffix = "_" + std::to_string(d);
    names.push_back("people_in_area" + suffix);
    names.push_back("prop_commuting" + suffix);
    for (std::size_t k = 0; k < kVisitorDemoCount; ++k)
      names.push_back("avg_" + std::string(kDemoShortNames[k]) + suffix);
  }
  names.push_back("residents_in_area");
  return names;
}

inline std::size_t people_in_area_index(int dow) { return static_cast<std::size_t>(dow) * kPerDayDynamic; }
inline std::size_t prop_commuting_index(int dow) { return people_in_area_index(dow) + 1; }
inline std::size_t avg_demo_index(int dow, DemoField f) {
  return people_in_area_index(dow) + 2 + static_cast<std::size_t>(f);
}
inline constexpr std::size_t kResidentsIndex = kDynamicFeatureCount - 1;

// ---------------------------------------------------------------------------
// Visitor aggregation

enum class ResidentRule { radius, cbg };
enum class CommutingMode { behavioral, census };

struct FeatureParams {
  double radius_m = 500.0;
  ResidentRule resident_rule = ResidentRule::radius;
  CommutingMode commuting_mode = CommutingMode::behavioral;
  double commute_dwell_max_s = 1'800.0;
  double cell_size_deg = kDefaultCellSizeDeg;
};

// Stops and homes of users with an inferred home, indexed for radius joins.
// Users are referred to by their position in `homes` (sorted by user id).
class MobilityContext {
 public:
  struct StopEntry {
    std::size_t user = 0;
    int dow = 0;
    double duration_s = 0.0;
    GeoPoint centroid;
  };

  MobilityContext(std::span<const Stop> stops, std::vector<HomeProfile> homes,
                  double cell_size_deg = kDefaultCellSizeDeg)
      : homes_(std::move(homes)),
        stop_index_(GridIndex<std::size_t>::build({}, cell_size_deg)),
        home_index_(GridIndex<std::size_t>::build({}, cell_size_deg)) {
    std::sort(homes_.begin(), homes_.end(),
              [](const HomeProfile& a, const HomeProfile& b) { return a.user_id < b.user_id; });
    std::map<std::string, std::size_t> user_pos;
    std::vector<std::pair<std::size_t, GeoPoint>> home_points;
    for (std::size_t i = 0; i < homes_.size(); ++i) {
      user_pos[homes_[i].user_id] = i;
      home_points.emplace_back(i, homes_[i].home);
      if (homes_[i].home_cbg) users_by_cbg_[*homes_[i].home_cbg].push_back(i);
    }
    std::vector<std::pair<std::size_t, GeoPoint>> stop_points;
    for (const auto& s : stops) {
      auto it = user_pos.find(s.user_id);
      if (it == user_pos.end()) continue;
      stop_points.emplace_back(stops_.size(), s.centroid);
      stops_.push_back({it->second, s.dow, static_cast<double>(s.duration_s()), s.centroid});
    }
    stop_index_ = GridIndex<std::size_t>::build(stop_points, cell_size_deg);
    home_index_ = GridIndex<std::size_t>::build(home_points, cell_size_deg);
  }

  const std::vector<HomeProfile>& homes() const { return homes_; }
  const std::vector<StopEntry>& stops() const { return stops_; }
  const GridIndex<std::size_t>& stop_index() const { return stop_index_; }
  const GridIndex<std::size_t>& home_index() const { return home_index_; }

  const std::vector<std::size_t>* users_in_cbg(const std::string& cbg) const {
    auto it = users_by_cbg_.find(cbg);
    return it == users_by_cbg_.end() ? nullptr : &it->second;
  }

 private:
  std::vector<HomeProfile> homes_;
  std::vector<StopEntry> stops_;
  GridIndex<std::size_t> stop_index_;
  GridIndex<std::size_t> home_index_;
  std::map<std::string, std::vector<std::size_t>> users_by_cbg_;
};

struct VisitorSets {
  // Distinct visiting users per local day of week, ascending user position.
  std::array<std::vector<std::size_t>, kDaysPerWeek> by_dow;
  // Total in-radius stop dwell per visitor, parallel to by_dow.
  std::array<std::vector<double>, kDaysPerWeek> dwell_s;
  std::vector<std::size_t> residents;
  bool cbg_rule_fallback = false;
};

// A user visits on day d with at least one stop on d whose centroid is within
// radius_m of the property. Residents are excluded from every day and
// returned separately.
inline VisitorSets visitors_by_dow(const PropertyRecord& property, const MobilityContext& ctx,
                                   const FeatureParams& params) {
  VisitorSets out;
  if (params.resident_rule == ResidentRule::cbg && property.cbg) {
    if (const auto* users = ctx.users_in_cbg(*property.cbg)) out.residents = *users;
  } else {
    out.cbg_rule_fallback = params.resident_rule == ResidentRule::cbg;
    out.residents = ctx.home_index().radius_query(property.loc, params.radius_m);
  }
  std::array<std::vector<std::pair<std::size_t, double>>, kDaysPerWeek> hits;
  ctx.stop_index().for_each_in_radius(property.loc, params.radius_m, [&](const auto& e, double) {
    const auto& s = ctx.stops()[e.id];
    if (std::binary_search(out.residents.begin(), out.residents.end(), s.user)) return;
    hits[static_cast<std::size_t>(s.dow)].emplace_back(s.user, s.duration_s);
  });
  for (int d = 0; d < kDaysPerWeek; ++d) {
    auto& h = hits[static_cast<std::size_t>(d)];
    std::sort(h.begin(), h.end());
    for (const auto& [user, dwell] : h) {
      auto& users = out.by_dow[static_cast<std::size_t>(d)];
      auto& dw = out.dwell_s[static_cast<std::size_t>(d)];
      if (!users.empty() && users.back() == user) {
        dw.back() += dwell;
      } else {
        users.push_back(user);
        dw.push_back(dwell);
      }
    }
  }
  return out;
}

// Per-day counts, commuting share and unweighted visitor-home demographic
// means, followed by residents_in_area. Slots without data hold kMissing.
inline std::vector<double> dynamic_features(const VisitorSets& visitors, const MobilityContext& ctx,
                                            const FeatureParams& params) {
  std::vector<double> f(kDynamicFeatureCount, 0.0);
  const auto& homes = ctx.homes();
  for (int d = 0; d < kDaysPerWeek; ++d) {
    const auto& users = visitors.by_dow[static_cast<std::size_t>(d)];
    const auto& dwell = visitors.dwell_s[static_cast<std::size_t>(d)];
    f[people_in_area_index(d)] = static_cast<double>(users.size());

    double commuting = 0.0;
    if (!users.empty()) {
      if (params.commuting_mode == CommutingMode::behavioral) {
        std::size_t short_dwell = 0;
        for (double w : dwell) short_dwell += w < params.commute_dwell_max_s ? 1 : 0;
        commuting = static_cast<double>(short_dwell) / static_cast<double>(users.size());
      } else {
        double sum = 0.0;
        std::size_t n = 0;
        for (auto u : users) {
          const auto& demo = homes[u].demographics;
          if (!demo) continue;
          if (auto v = demo->get(DemoField::commute_share)) {
            sum += *v;
            ++n;
          }
        }
        commuting = n ? sum / static_cast<double>(n) : 0.0;
      }
    }
    f[prop_commuting_index(d)] = commuting;

    for (std::size_t k = 0; k < kVisitorDemoCount; ++k) {
      const auto field = static_cast<DemoField>(k);
      double sum = 0.0;
      std::size_t n = 0;
      for (auto u : users) {
        const auto& demo = homes[u].demographics;
        if (!demo) continue;
        if (auto v = demo->get(field)) {
          sum += *v;
          ++n;
        }
      }
      f[avg_demo_index(d, field)] = n ? sum / static_cast<double>(n) : kMissing;
    }
  }
  f[kResidentsIndex] = static_cast<double>(visitors.residents.size());
  return f;
}

struct StaticFeatures {
  std::vector<double> values;
  std::optional<std::string> cbg;
  bool cbg_missing = false;  // no polygon or no demographics row
};

inline StaticFeatures static_features(const PropertyRecord& property,
                                      std::span<const CbgPolygon> polygons,
                                      const DemographicsTable& table) {
  StaticFeatures out;
  out.values = {property.beds,
                property.baths,
                property.sqft,
                property.kind == PropertyKind::residential ? 1.0 : 0.0,
                property.kind == PropertyKind::commercial ? 1.0 : 0.0,
                property.kind == PropertyKind::unknown ? 1.0 : 0.0,
                property.loc.lat,
                property.loc.lon};
  out.cbg = assign_cbg(property.loc, polygons);
  const CbgDemographics* demo = nullptr;
  if (out.cbg) {
    if (auto it = table.find(*out.cbg); it != table.end()) demo = &it->second;
  }
  out.cbg_missing = demo == nullptr;
  for (std::size_t k = 0; k < kDemoFieldCount; ++k) {
    const auto v = demo ? demo->values[k] : std::nullopt;
    out.values.push_back(v ? *v : kMissing);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset assembly

enum class LabelTransform { identity, log };

inline double apply_label_transform(double price, LabelTransform t) {
  return t == LabelTransform::log ? std::log(price) : price;
}

struct FeatureRow {
  std::string property_id;
  PropertyKind kind = PropertyKind::unknown;
  double price = 0.0;
  bool cbg_missing = false;
  std::vector<double> static_features;
  std::vector<double> dynamic_features;
  double label = 0.0;

  // static followed by dynamic
  std::vector<double> full() const {
    std::vector<double> v = static_features;
    v.insert(v.end(), dynamic_features.begin(), dynamic_features.end());
    return v;
  }
};

struct FeatureManifest {
  std::vector<std::string> static_names = static_feature_names();
  std::vector<std::string> dynamic_names = dynamic_feature_names();
  std::string version = kFeaturePipelineVersion;

  std::vector<std::string> all_names() const {
    auto v = static_names;
    v.insert(v.end(), dynamic_names.begin(), dynamic_names.end());
    return v;
  }
  std::size_t n_static() const { return static_names.size(); }
  std::size_t n_dynamic() const { return dynamic_names.size(); }
  std::size_t size() const { return n_static() + n_dynamic(); }
};

struct AssemblyReport {
  std::size_t properties = 0;
  std::size_t rows = 0;
  std::size_t cbg_missing = 0;
  std::size_t cbg_rule_fallbacks = 0;
  std::size_t missing_slots = 0;  // sentinel slots awaiting imputation
};

struct AssembledDataset {
  std::vector<FeatureRow> rows;  // ascending property_id
  FeatureManifest manifest;
  AssemblyReport report;
};

// Builds one row per property, ordered by property_id. Sentinel slots are left
// as kMissing; imputation is fitted later on the training split only.
inline AssembledDataset assemble_dataset(std::vector<PropertyRecord> properties,
                                         std::span<const CbgPolygon> polygons,
                                         const DemographicsTable& table,
                                         const MobilityContext& ctx, const FeatureParams& params,
                                         LabelTransform label_transform) {
  std::sort(properties.begin(), properties.end(),
            [](const PropertyRecord& a, const PropertyRecord& b) { return a.property_id < b.property_id; });
  AssembledDataset ds;
  ds.report.properties = properties.size();
  std::vector<std::optional<FeatureRow>> rows(properties.size());
  std::vector<char> fallback(properties.size(), 0);
  parallel_for(properties.size(), [&](std::size_t i) {
    PropertyRecord prop = properties[i];
    if (!is_valid(prop.loc) || !(prop.price > 0.0)) return;
    auto st = static_features(prop, polygons, table);
    prop.cbg = st.cbg;
    auto visitors = visitors_by_dow(prop, ctx, params);
    fallback[i] = visitors.cbg_rule_fallback ? 1 : 0;
    FeatureRow row;
    row.property_id = prop.property_id;
    row.kind = prop.kind;
    row.price = prop.price;
    row.cbg_missing = st.cbg_missing;
    row.static_features = std::move(st.values);
    row.dynamic_features = dynamic_features(visitors, ctx, params);
    row.label = apply_label_transform(prop.price, label_transform);
    rows[i] = std::move(row);
  });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i]) continue;
    ds.report.cbg_missing += rows[i]->cbg_missing ? 1 : 0;
    ds.report.cbg_rule_fallbacks += static_cast<std::size_t>(fallback[i]);
    for (double v : rows[i]->static_features) ds.report.missing_slots += std::isnan(v) ? 1 : 0;
    for (double v : rows[i]->dynamic_features) ds.report.missing_slots += std::isnan(v) ? 1 : 0;
    ds.rows.push_back(std::move(*rows[i]));
  }
  ds.report.rows = ds.rows.size();
  if (ds.rows.empty()) throw DataError("assemble_dataset: no usable properties");
  return ds;
}

// Column-mean imputation over the concatenated (static, dynamic) vector.
struct Imputer {
  std::vector<double> means;

  // Means of observed values over the given training rows. Columns with no
  // observed training value fall back to 0.
  static Imputer fit(std::span<const FeatureRow> rows, std::span<const std::size_t> train) {
    Imputer imp;
    if (rows.empty()) return imp;
    const std::size_t p = rows.front().static_features.size() + rows.front().dynamic_features.size();
    std::vector<double> sum(p, 0.0);
    std::vector<std::size_t> count(p, 0);
    for (auto i : train) {
      const auto v = rows[i].full();
      for (std::size_t j = 0; j < p; ++j) {
        if (std::isnan(v[j])) continue;
        sum[j] += v[j];
        ++count[j];
      }
    }
    imp.means.resize(p);
    for (std::size_t j = 0; j < p; ++j)
      imp.means[j] = count[j] ? sum[j] / static_cast<double>(count[j]) : 0.0;
    return imp;
  }

  // Replaces missing slots in place; returns the number replaced.
  std::size_t apply(std::span<double> v) const {
    std::size_t n = 0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (std::isnan(v[j])) {
        v[j] = means[j];
        ++n;
      }
    }
    return n;
  }
};

// Imputed design matrix over all columns for the given rows.
inline Matrix design_matrix(std::span<const FeatureRow> rows, std::span<const std::size_t> idx,
                            const Imputer& imputer) {
  Matrix X;
  for (auto i : idx) {
    auto v = rows[i].full();
    imputer.apply(v);
    X.append_row(v);
  }
  return X;
}

inline std::vector<double> labels_of(std::span<const FeatureRow> rows,
                                     std::span<const std::size_t> idx) {
  std::vector<double> y;
  y.reserve(idx.size());
  for (auto i : idx) y.push_back(rows[i].label);
  return y;
}

// ---------------------------------------------------------------------------
// Persistence

inline void write_features_csv(const std::string& path, std::span<const FeatureRow> rows,
                               const FeatureManifest& manifest) {
  auto out = open_output(path);
  out << "property_id,kind,price,cbg_missing";
  for (const auto& n : manifest.all_names()) out << ',' << n;
  out << '\n';
  auto cell = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
  for (const auto& r : rows) {
    out << csv_escape(r.property_id) << ',' << kind_name(r.kind) << ',' << format_double(r.price)
        << ',' << (r.cbg_missing ? 1 : 0);
    for (double v : r.static_features) out << ',' << cell(v);
    for (double v : r.dynamic_features) out << ',' << cell(v);
    out << '\n';
  }
}

// Reads rows written by write_features_csv; labels use `label_transform`.
inline std::vector<FeatureRow> read_features_csv(const std::string& path,
                                                 const FeatureManifest& manifest,
                                                 LabelTransform label_transform) {
  std::string header = "property_id,kind,price,cbg_missing";
  for (const auto& n : manifest.all_names()) header += "," + n;
  std::vector<FeatureRow> rows;
  const std::size_t ns = manifest.n_static(), nd = manifest.n_dynamic();
  for_each_csv_row(
      path,
      [&](const std::vector<std::string>& f, std::size_t line) {
        auto bad = [&] { return DataError(path + ":" + std::to_string(line) + ": malformed feature row"); };
        if (f.size() != 4 + ns + nd) throw bad();
        FeatureRow r;
        r.property_id = f[0];
        r.kind = parse_kind(f[1]);
        auto price = parse_double(f[2]);
        if (!price || !(*price > 0.0)) throw bad();
        r.price = *price;
        r.cbg_missing = f[3] == "1";
        for (std::size_t j = 0; j < ns + nd; ++j) {
          double v = kMissing;
          if (!trim(f[4 + j]).empty()) {
            auto parsed = parse_double(f[4 + j]);
            if (!parsed) throw bad();
            v = *parsed;
          }
          (j < ns ? r.static_features : r.dynamic_features).push_back(v);
        }
        r.label = apply_label_transform(r.price, label_transform);
        rows.push_back(std::move(r));
      },
      header);
  return rows;
}

// Sidecar: one line per feature with its column index and imputation value.
inline void write_feature_manifest_csv(const std::string& path, const FeatureManifest& manifest,
                                       const Imputer& imputer) {
  auto out = open_output(path);
  out << "feature,column_index,group,imputation_value,pipeline_version\n";
  const auto names = manifest.all_names();
  for (std::size_t j = 0; j < names.size(); ++j) {
    out << names[j] << ',' << j << ',' << (j < manifest.n_static() ? "static" : "dynamic") << ','
        << (j < imputer.means.size() ? format_double(imputer.means[j]) : "") << ','
        << manifest.version << '\n';
  }
}

}  // namespace mobiprice
