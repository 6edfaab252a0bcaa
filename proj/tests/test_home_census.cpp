#include <gtest/gtest.h>

#include "mobiprice/home_census.hpp"
#include "test_util.hpp"

using namespace mobiprice;

namespace {

constexpr double kOffset = -5.0;
constexpr std::int64_t kMonday = 17'959;  // 2019-03-04

// UTC time of local `hour` on local day number `day` at UTC-5.
std::int64_t local_time(std::int64_t day, double hour) {
  return day * 86'400 + static_cast<std::int64_t>(hour * 3'600) + 5 * 3'600;
}

Stop stop_at(GeoPoint p, std::int64_t t0, std::int64_t t1, std::string user = "u") {
  Stop s;
  s.user_id = std::move(user);
  s.anchor = s.centroid = p;
  s.t_start = t0;
  s.t_end = t1;
  s.n_pings = 2;
  s.dow = local_day_of_week(t0, kOffset);
  return s;
}

const GeoPoint kHome{38.9, -77.03};

std::vector<Stop> nights_at(GeoPoint p, std::initializer_list<int> day_offsets, double hours = 2.0) {
  std::vector<Stop> out;
  for (int d : day_offsets)
    out.push_back(stop_at(p, local_time(kMonday + d, 22), local_time(kMonday + d, 22 + hours)));
  return out;
}

}  // namespace

TEST(NightStops, TuesdayEveningQualifiesUnderTuesday) {
  const auto s = nights_at(kHome, {1}, 1.0);
  const auto ns = qualifying_night_stops(s, kOffset);
  ASSERT_EQ(ns.size(), 1u);
  EXPECT_EQ(ns[0].night_label, kMonday + 1);
}

TEST(NightStops, EarlyWednesdayBelongsToTuesdayNight) {
  const std::vector<Stop> s = {stop_at(kHome, local_time(kMonday + 2, 3), local_time(kMonday + 2, 5))};
  const auto ns = qualifying_night_stops(s, kOffset);
  ASSERT_EQ(ns.size(), 1u);
  EXPECT_EQ(ns[0].night_label, kMonday + 1);
}

TEST(NightStops, SaturdayNightAndDaytimeAreExcluded) {
  const std::vector<Stop> s = {stop_at(kHome, local_time(kMonday + 5, 23), local_time(kMonday + 5, 23.5)),
                               stop_at(kHome, local_time(kMonday + 2, 10), local_time(kMonday + 2, 15))};
  EXPECT_TRUE(qualifying_night_stops(s, kOffset).empty());
}

TEST(NightStops, TueThuOptionDropsFridayNight) {
  const auto s = nights_at(kHome, {4});
  EXPECT_EQ(qualifying_night_stops(s, kOffset, HomeNights::tue_fri).size(), 1u);
  EXPECT_TRUE(qualifying_night_stops(s, kOffset, HomeNights::tue_thu).empty());
}

TEST(NightStops, LongStopCountsForEveryNightItSpans) {
  const std::vector<Stop> s = {stop_at(kHome, local_time(kMonday + 1, 20), local_time(kMonday + 4, 8))};
  const auto ns = qualifying_night_stops(s, kOffset);
  ASSERT_EQ(ns.size(), 3u);  // Tue, Wed, Thu nights
  auto home = infer_home(ns, 100, 3);
  ASSERT_TRUE(home);
  EXPECT_EQ(home->n_nights, 3u);
}

TEST(InferHome, ThreeNightsAtOnePlace) {
  const auto stops = nights_at(kHome, {1, 2, 3});
  const auto home = infer_home(qualifying_night_stops(stops, kOffset), 100, 3);
  ASSERT_TRUE(home);
  EXPECT_EQ(home->home, kHome);
  EXPECT_EQ(home->n_nights, 3u);
  EXPECT_EQ(home->user_id, "u");
}

TEST(InferHome, TooFewNightsOrWeekendOnlyGiveNone) {
  EXPECT_FALSE(infer_home(qualifying_night_stops(nights_at(kHome, {1, 2}), kOffset), 100, 3));
  EXPECT_FALSE(infer_home(qualifying_night_stops(nights_at(kHome, {5, 6, 12, 13}), kOffset), 100, 3));
}

TEST(InferHome, MostNightsWinsThenDurationThenEarlierAnchor) {
  const GeoPoint other = offset_m(kHome, 1'000, 0);
  auto stops = nights_at(kHome, {1, 2, 3});
  for (auto s : nights_at(other, {8, 9, 10, 11})) stops.push_back(s);
  auto home = infer_home(qualifying_night_stops(stops, kOffset), 100, 3);
  ASSERT_TRUE(home);
  EXPECT_EQ(home->home, other);

  // Equal night counts: the longer total stay wins.
  stops = nights_at(kHome, {1, 2, 3}, 1.0);
  for (auto s : nights_at(other, {8, 9, 10}, 3.0)) stops.push_back(s);
  home = infer_home(qualifying_night_stops(stops, kOffset), 100, 3);
  EXPECT_EQ(home->home, other);

  // Equal nights and durations: the earlier cluster wins.
  stops = nights_at(kHome, {1, 2, 3});
  for (auto s : nights_at(other, {8, 9, 10})) stops.push_back(s);
  home = infer_home(qualifying_night_stops(stops, kOffset), 100, 3);
  EXPECT_EQ(home->home, kHome);
}

TEST(InferHome, HomeLiesNearASupportingCentroid) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Stop> stops;
    for (int d = 0; d < 14; ++d) {
      const GeoPoint p = offset_m(kHome, rng.normal(0, 60), rng.normal(0, 60));
      stops.push_back(stop_at(p, local_time(kMonday + d, 22), local_time(kMonday + d, 23)));
    }
    const auto ns = qualifying_night_stops(stops, kOffset);
    const auto home = infer_home(ns, 100, 3);
    if (!home) continue;
    double nearest = 1e9;
    for (const auto& n : ns) nearest = std::min(nearest, haversine_m(n.stop.centroid, home->home));
    EXPECT_LE(nearest, 100.0);
  }
}

TEST(InferHomes, DropsUsersAndReports) {
  std::vector<Stop> stops;
  for (auto s : nights_at(kHome, {1, 2, 3})) stops.push_back((s.user_id = "a", s));
  for (auto s : nights_at(kHome, {1, 2})) stops.push_back((s.user_id = "b", s));
  HomeDropReport report;
  const auto homes = infer_homes(stops, {}, &report);
  ASSERT_EQ(homes.size(), 1u);
  EXPECT_EQ(homes[0].user_id, "a");
  EXPECT_EQ(report.users, 2u);
  EXPECT_EQ(report.no_home, 1u);
}

TEST(Demographics, CsvRoundTripKeepsMissingCells) {
  testutil::TempDir dir("demo");
  const auto path = dir.file("d.csv");
  testutil::write_text(path, demographics_header() + "\nA,50000,35,0.5,0.3,0.1,0.4,0.05,1200,0.6\nB,,40,,,,,,900,\n");
  const auto table = read_demographics_csv(path);
  ASSERT_EQ(table.size(), 2u);
  EXPECT_EQ(table.at("A").get(DemoField::income), 50'000);
  EXPECT_FALSE(table.at("B").get(DemoField::income));
  EXPECT_EQ(table.at("B").get(DemoField::population), 900);
  write_demographics_csv(dir.file("e.csv"), table);
  EXPECT_EQ(read_file(dir.file("e.csv")), read_file(path));
}

TEST(Demographics, RejectsImpossibleValues) {
  testutil::TempDir dir("demo");
  const auto path = dir.file("d.csv");
  testutil::write_text(path, demographics_header() + "\nA,50000,35,1.5,,,,,,\n");
  EXPECT_THROW(read_demographics_csv(path), DataError);
  testutil::write_text(path, demographics_header() + "\nA,50000,35,0.6,0.6,,,,,\n");
  EXPECT_THROW(read_demographics_csv(path), DataError);
  testutil::write_text(path, demographics_header() + "\nA,-1,35,,,,,,,\n");
  EXPECT_THROW(read_demographics_csv(path), DataError);
}

TEST(AttachDemographics, CountsMissingPolygonAndRow) {
  CbgPolygon poly;
  poly.cbg_id = "A";
  poly.rings.push_back({{38.89, -77.04}, {38.89, -77.02}, {38.91, -77.02}, {38.91, -77.04}, {38.89, -77.04}});
  validate_polygon(poly);
  const std::vector<CbgPolygon> polys = {poly};
  DemographicsTable table;
  CbgDemographics d;
  d.cbg_id = "A";
  d.set(DemoField::income, 70'000);
  table.emplace("A", d);

  HomeDropReport report;
  HomeProfile inside{"u", kHome, 3, {}, {}};
  inside = attach_demographics(inside, polys, table, &report);
  EXPECT_EQ(inside.home_cbg, "A");
  ASSERT_TRUE(inside.demographics);
  EXPECT_EQ(inside.demographics->get(DemoField::income), 70'000);

  HomeProfile outside{"v", {39.5, -77.0}, 3, {}, {}};
  outside = attach_demographics(outside, polys, table, &report);
  EXPECT_FALSE(outside.home_cbg);
  EXPECT_EQ(report.no_cbg, 1u);

  table.clear();
  inside = attach_demographics(inside, polys, table, &report);
  EXPECT_FALSE(inside.demographics);
  EXPECT_EQ(report.no_demographics, 1u);
}

TEST(HomesCsv, RoundTripReattachesDemographics) {
  DemographicsTable table;
  CbgDemographics d;
  d.cbg_id = "A";
  d.set(DemoField::age, 33);
  table.emplace("A", d);
  std::vector<HomeProfile> homes = {{"u1", {38.9, -77.0}, 4, std::string("A"), {}},
                                    {"u2", {38.95, -77.1}, 3, std::nullopt, {}}};
  testutil::TempDir dir("homes");
  write_homes_csv(dir.file("h.csv"), homes);
  const auto back = read_homes_csv(dir.file("h.csv"), table);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].home, homes[0].home);
  EXPECT_EQ(back[0].n_nights, 4u);
  ASSERT_TRUE(back[0].demographics);
  EXPECT_EQ(back[0].demographics->get(DemoField::age), 33);
  EXPECT_FALSE(back[1].home_cbg);
  EXPECT_FALSE(back[1].demographics);
}
