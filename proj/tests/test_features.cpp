#include <gtest/gtest.h>

#include <cmath>

#include "mobiprice/features.hpp"
#include "mobiprice/pipeline.hpp"
#include "mobiprice/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mobiprice;

namespace {

const GeoPoint kProp{38.9, -77.03};

PropertyRecord property_at(GeoPoint p, std::string id = "p1") {
  PropertyRecord r;
  r.property_id = std::move(id);
  r.loc = p;
  r.price = 300'000;
  r.beds = 3;
  r.baths = 2;
  r.sqft = 1'500;
  r.kind = PropertyKind::residential;
  return r;
}

HomeProfile home_at(std::string user, GeoPoint p, std::optional<double> income = std::nullopt,
                    std::optional<std::string> cbg = std::nullopt) {
  HomeProfile h;
  h.user_id = std::move(user);
  h.home = p;
  h.n_nights = 3;
  h.home_cbg = std::move(cbg);
  if (income) {
    CbgDemographics d;
    d.cbg_id = h.home_cbg.value_or("X");
    d.set(DemoField::income, *income);
    d.set(DemoField::commute_share, 0.5);
    h.demographics = d;
  }
  return h;
}

Stop stop_for(std::string user, GeoPoint at, int dow, std::int64_t duration) {
  Stop s;
  s.user_id = std::move(user);
  s.anchor = s.centroid = at;
  s.t_start = 1'000;
  s.t_end = 1'000 + duration;
  s.n_pings = 2;
  s.dow = dow;
  return s;
}

// Dynamic features recomputed from raw stops and homes with plain loops.
std::vector<double> brute_dynamic(const PropertyRecord& prop, const std::vector<Stop>& stops,
                                  const std::vector<HomeProfile>& homes, const FeatureParams& params) {
  const auto visits = oracle::brute_visitors(prop, stops, homes, params.radius_m);
  std::map<std::string, const HomeProfile*> by_user;
  for (const auto& h : homes) by_user[h.user_id] = &h;
  std::vector<double> f;
  for (int d = 0; d < 7; ++d) {
    const auto& users = visits.by_dow[static_cast<std::size_t>(d)];
    f.push_back(static_cast<double>(users.size()));
    std::size_t short_dwell = 0;
    for (const auto& u : users) {
      double dwell = 0;
      for (const auto& s : stops)
        if (s.user_id == u && s.dow == d && haversine_m(s.centroid, prop.loc) <= params.radius_m)
          dwell += static_cast<double>(s.duration_s());
      if (dwell < params.commute_dwell_max_s) ++short_dwell;
    }
    f.push_back(users.empty() ? 0.0 : static_cast<double>(short_dwell) / static_cast<double>(users.size()));
    for (std::size_t k = 0; k < 7; ++k) {
      double sum = 0;
      int n = 0;
      for (const auto& u : users) {
        const auto& demo = by_user.at(u)->demographics;
        if (demo && demo->values[k]) sum += *demo->values[k], ++n;
      }
      f.push_back(n ? sum / n : kMissing);
    }
  }
  f.push_back(static_cast<double>(visits.residents.size()));
  return f;
}

void expect_same_vector(const std::vector<double>& a, const std::vector<double>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(b[i])) {
      EXPECT_TRUE(std::isnan(a[i])) << "slot " << i;
    } else {
      EXPECT_NEAR(a[i], b[i], 1e-9 * std::max(1.0, std::abs(b[i]))) << "slot " << i;
    }
  }
}

}  // namespace

TEST(FeatureNames, CountsAndOrder) {
  const auto st = static_feature_names();
  const auto dy = dynamic_feature_names();
  EXPECT_EQ(st.size(), 17u);
  EXPECT_EQ(dy.size(), 64u);
  EXPECT_EQ(st.front(), "beds");
  EXPECT_EQ(dy[people_in_area_index(0)], "people_in_area_0");
  EXPECT_EQ(dy[prop_commuting_index(3)], "prop_commuting_3");
  EXPECT_EQ(dy[avg_demo_index(6, DemoField::income)], "avg_income_6");
  EXPECT_EQ(dy[kResidentsIndex], "residents_in_area");
}

TEST(VisitorsByDow, DistantHomeVisitsOnTuesdayOnly) {
  const std::vector<Stop> stops = {stop_for("u", offset_m(kProp, 400, 0), 1, 600)};
  const MobilityContext ctx(stops, {home_at("u", offset_m(kProp, 2'000, 0))});
  const auto v = visitors_by_dow(property_at(kProp), ctx, {});
  for (int d = 0; d < 7; ++d) EXPECT_EQ(v.by_dow[static_cast<std::size_t>(d)].size(), d == 1 ? 1u : 0u);
  EXPECT_TRUE(v.residents.empty());
}

TEST(VisitorsByDow, NearbyHomeMakesAResident) {
  const std::vector<Stop> stops = {stop_for("u", offset_m(kProp, 400, 0), 1, 600)};
  const MobilityContext ctx(stops, {home_at("u", offset_m(kProp, 300, 0))});
  const auto v = visitors_by_dow(property_at(kProp), ctx, {});
  for (const auto& d : v.by_dow) EXPECT_TRUE(d.empty());
  EXPECT_EQ(v.residents.size(), 1u);
  EXPECT_EQ(dynamic_features(v, ctx, {})[kResidentsIndex], 1.0);
}

TEST(VisitorsByDow, UserWithoutHomeIsIgnored) {
  const std::vector<Stop> stops = {stop_for("nohome", kProp, 2, 600)};
  const MobilityContext ctx(stops, {home_at("u", offset_m(kProp, 5'000, 0))});
  const auto v = visitors_by_dow(property_at(kProp), ctx, {});
  EXPECT_TRUE(v.by_dow[2].empty());
}

TEST(VisitorsByDow, CbgRuleAndFallback) {
  const GeoPoint far = offset_m(kProp, 3'000, 0);
  const std::vector<Stop> stops = {stop_for("a", kProp, 0, 600), stop_for("b", kProp, 0, 600)};
  const MobilityContext ctx(stops, {home_at("a", far, 1.0, "C1"), home_at("b", far, 1.0, "C2")});
  FeatureParams params;
  params.resident_rule = ResidentRule::cbg;
  auto prop = property_at(kProp);
  prop.cbg = "C1";
  auto v = visitors_by_dow(prop, ctx, params);
  EXPECT_EQ(v.residents.size(), 1u);
  EXPECT_EQ(v.by_dow[0].size(), 1u);
  EXPECT_FALSE(v.cbg_rule_fallback);

  prop.cbg.reset();
  v = visitors_by_dow(prop, ctx, params);
  EXPECT_TRUE(v.cbg_rule_fallback);
  EXPECT_TRUE(v.residents.empty());  // radius rule: both homes are 3 km away
  EXPECT_EQ(v.by_dow[0].size(), 2u);
}

TEST(DynamicFeatures, TwoPointIncomeMeanAndEmptyDays) {
  const GeoPoint far = offset_m(kProp, 3'000, 0);
  const std::vector<Stop> stops = {stop_for("a", kProp, 1, 600), stop_for("b", kProp, 1, 3'600),
                                   stop_for("a", kProp, 1, 300)};
  const MobilityContext ctx(stops, {home_at("a", far, 50'000.0), home_at("b", far, 100'000.0)});
  const auto v = visitors_by_dow(property_at(kProp), ctx, {});
  const auto f = dynamic_features(v, ctx, {});
  EXPECT_EQ(f[people_in_area_index(1)], 2.0);
  EXPECT_EQ(f[avg_demo_index(1, DemoField::income)], 75'000.0);
  EXPECT_EQ(f[prop_commuting_index(1)], 0.5);  // a dwells 900 s in total, b 3600 s
  EXPECT_EQ(f[people_in_area_index(0)], 0.0);
  EXPECT_EQ(f[prop_commuting_index(0)], 0.0);
  EXPECT_TRUE(std::isnan(f[avg_demo_index(0, DemoField::income)]));

  FeatureParams census;
  census.commuting_mode = CommutingMode::census;
  EXPECT_EQ(dynamic_features(v, ctx, census)[prop_commuting_index(1)], 0.5);
}

TEST(DynamicFeatures, VisitorWithoutDemographicsCountsButIsNotAveraged) {
  const GeoPoint far = offset_m(kProp, 3'000, 0);
  const std::vector<Stop> stops = {stop_for("a", kProp, 1, 600), stop_for("b", kProp, 1, 600)};
  const MobilityContext ctx(stops, {home_at("a", far, 60'000.0), home_at("b", far)});
  const auto f = dynamic_features(visitors_by_dow(property_at(kProp), ctx, {}), ctx, {});
  EXPECT_EQ(f[people_in_area_index(1)], 2.0);
  EXPECT_EQ(f[avg_demo_index(1, DemoField::income)], 60'000.0);
}

TEST(DynamicFeatures, MatchBruteForceOnSyntheticCity) {
  synth::SyntheticCitySpec spec;
  spec.n_users = 100;
  spec.n_properties = 150;
  spec.seed = 77;
  const auto city = synth::generate_synthetic(spec);
  RunConfig cfg;
  MobilityBuild mob;
  const auto ds = dataset_from_city(city, cfg, &mob);
  const MobilityContext ctx(mob.stops, mob.homes);
  ASSERT_GT(mob.homes.size(), 80u);
  std::map<std::string, const FeatureRow*> rows;
  for (const auto& r : ds.rows) rows[r.property_id] = &r;
  for (const auto& prop : city.properties) {
    const auto v = visitors_by_dow(prop, ctx, cfg.features);
    const auto oracle_sets = oracle::brute_visitors(prop, mob.stops, mob.homes, cfg.features.radius_m);
    for (int d = 0; d < 7; ++d) {
      std::set<std::string> got;
      for (auto u : v.by_dow[static_cast<std::size_t>(d)]) got.insert(ctx.homes()[u].user_id);
      EXPECT_EQ(got, oracle_sets.by_dow[static_cast<std::size_t>(d)]);
    }
    const auto row = rows.find(prop.property_id);
    if (row == rows.end()) continue;
    expect_same_vector(row->second->dynamic_features,
                       brute_dynamic(prop, mob.stops, mob.homes, cfg.features));
  }
}

TEST(StaticFeatures, CopiesCbgDemographicsOrFlagsMissing) {
  CbgPolygon poly;
  poly.cbg_id = "A";
  poly.rings.push_back({{38.89, -77.04}, {38.89, -77.02}, {38.91, -77.02}, {38.91, -77.04}, {38.89, -77.04}});
  validate_polygon(poly);
  const std::vector<CbgPolygon> polys = {poly};
  DemographicsTable table;
  CbgDemographics d;
  d.cbg_id = "A";
  for (std::size_t k = 0; k < kDemoFieldCount; ++k) d.values[k] = 0.1 * static_cast<double>(k + 1);
  table.emplace("A", d);

  const auto in = static_features(property_at(kProp), polys, table);
  EXPECT_FALSE(in.cbg_missing);
  EXPECT_EQ(in.cbg, "A");
  for (std::size_t k = 0; k < kDemoFieldCount; ++k) EXPECT_EQ(in.values[8 + k], *d.values[k]);
  EXPECT_EQ(in.values[0], 3.0);
  EXPECT_EQ(in.values[3], 1.0);  // residential one-hot

  const auto out = static_features(property_at({39.5, -77.0}), polys, table);
  EXPECT_TRUE(out.cbg_missing);
  for (std::size_t k = 0; k < kDemoFieldCount; ++k) EXPECT_TRUE(std::isnan(out.values[8 + k]));
}

TEST(Imputer, UsesTrainingRowsOnly) {
  std::vector<FeatureRow> rows(3);
  rows[0].static_features = {1.0};
  rows[1].static_features = {kMissing};
  rows[2].static_features = {100.0};
  for (auto& r : rows) r.dynamic_features = {kMissing};
  const std::vector<std::size_t> train = {0, 1};
  const auto imp = Imputer::fit(rows, train);
  EXPECT_EQ(imp.means[0], 1.0);
  EXPECT_EQ(imp.means[1], 0.0);  // never observed in training
  const auto X = design_matrix(rows, std::vector<std::size_t>{1}, imp);
  EXPECT_EQ(X(0, 0), 1.0);
}

TEST(FeaturesCsv, RoundTripWithManifestSidecar) {
  synth::SyntheticCitySpec spec;
  spec.n_users = 40;
  spec.n_properties = 60;
  const auto city = synth::generate_synthetic(spec);
  const auto ds = dataset_from_city(city, RunConfig{});
  testutil::TempDir dir("features");
  write_features_csv(dir.file("f.csv"), ds.rows, ds.manifest);
  const auto back = read_features_csv(dir.file("f.csv"), ds.manifest, LabelTransform::log);
  ASSERT_EQ(back.size(), ds.rows.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].property_id, ds.rows[i].property_id);
    EXPECT_EQ(back[i].price, ds.rows[i].price);
    EXPECT_EQ(back[i].label, std::log(ds.rows[i].price));
    expect_same_vector(back[i].full(), ds.rows[i].full());
  }
  const auto all = iota_indices(0, ds.rows.size());
  write_feature_manifest_csv(dir.file("m.csv"), ds.manifest, Imputer::fit(ds.rows, all));
  std::size_t lines = 0;
  for_each_csv_row(dir.file("m.csv"), [&](const auto& f, std::size_t) {
    EXPECT_EQ(f.size(), 5u);
    EXPECT_EQ(f[1], std::to_string(lines));
    EXPECT_EQ(f[4], kFeaturePipelineVersion);
    ++lines;
  }, "feature,column_index,group,imputation_value,pipeline_version");
  EXPECT_EQ(lines, 81u);
}

TEST(PropertiesCsv, RejectsBadRowsAndCounts) {
  testutil::TempDir dir("props");
  const auto path = dir.file("p.csv");
  testutil::write_text(path, std::string(kPropertyHeader) +
                                 "\np1,38.9,-77.0,250000,3,2,1400,residential\n"
                                 "p2,95,-77.0,250000,3,2,1400,residential\n"
                                 "p3,38.9,-77.0,-5,3,2,1400,commercial\n"
                                 "p4,38.9,-77.0,400000,0,1,3000,commercial\n");
  PropertyReadReport rep;
  const auto props = read_properties_csv(path, &rep);
  EXPECT_EQ(props.size(), 2u);
  EXPECT_EQ(rep.rejected, 2u);
  EXPECT_EQ(props[1].kind, PropertyKind::commercial);
}
