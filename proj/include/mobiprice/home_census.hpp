#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mobiprice/core/error.hpp"
#include "mobiprice/core/parallel.hpp"
#include "mobiprice/core/text.hpp"
#include "mobiprice/geo.hpp"
#include "mobiprice/trajectory.hpp"

namespace mobiprice {

// ---------------------------------------------------------------------------
// Census block group demographics

enum class DemoField : std::size_t {
  income,
  age,
  white,
  black,
  asian,
  bachelors,
  unemployment,
  population,
  commute_share,
};

inline constexpr std::size_t kDemoFieldCount = 9;

// CSV column names, in DemoField order.
inline constexpr std::array<std::string_view, kDemoFieldCount> kDemoColumns = {
    "median_household_income", "median_age",        "share_white",
    "share_black",             "share_asian",       "share_bachelors_or_higher",
    "unemployment_rate",       "population",        "commute_share"};

// Short names used in feature columns (cbg_<short>, avg_<short>_<dow>).
inline constexpr std::array<std::string_view, kDemoFieldCount> kDemoShortNames = {
    "income", "age", "white", "black", "asian", "bachelors", "unemployment", "population",
    "commute_share"};

struct CbgDemographics {
  std::string cbg_id;
  // Missing values stay empty; they are imputed at feature assembly, never here.
  std::array<std::optional<double>, kDemoFieldCount> values{};

  std::optional<double> get(DemoField f) const { return values[static_cast<std::size_t>(f)]; }
  void set(DemoField f, std::optional<double> v) { values[static_cast<std::size_t>(f)] = v; }
};

using DemographicsTable = std::map<std::string, CbgDemographics>;

inline void validate_demographics(const CbgDemographics& d) {
  auto fail = [&](std::string_view what) {
    return DataError("demographics for CBG " + d.cbg_id + ": " + std::string(what));
  };
  for (std::size_t i = 0; i < kDemoFieldCount; ++i) {
    const auto& v = d.values[i];
    if (!v) continue;
    if (!std::isfinite(*v)) throw fail(std::string(kDemoColumns[i]) + " not finite");
    const auto f = static_cast<DemoField>(i);
    const bool is_share = f == DemoField::white || f == DemoField::black ||
                          f == DemoField::asian || f == DemoField::bachelors ||
                          f == DemoField::unemployment || f == DemoField::commute_share;
    if (is_share && (*v < 0.0 || *v > 1.0))
      throw fail(std::string(kDemoColumns[i]) + " outside [0,1]");
    if (!is_share && *v < 0.0) throw fail(std::string(kDemoColumns[i]) + " negative");
  }
  double race = 0.0;
  for (auto f : {DemoField::white, DemoField::black, DemoField::asian}) race += d.get(f).value_or(0.0);
  if (race > 1.0 + 1e-9) throw fail("race shares sum above 1");
}

inline std::string demographics_header() {
  std::string h = "cbg_id";
  for (auto c : kDemoColumns) {
    h += ',';
    h += c;
  }
  return h;
}

inline DemographicsTable read_demographics_csv(const std::string& path) {
  DemographicsTable table;
  const std::string header = demographics_header();
  for_each_csv_row(
      path,
      [&](const std::vector<std::string>& f, std::size_t line) {
        if (f.size() != kDemoFieldCount + 1 || f[0].empty())
          throw DataError(path + ":" + std::to_string(line) + ": malformed demographics row");
        CbgDemographics d;
        d.cbg_id = f[0];
        for (std::size_t i = 0; i < kDemoFieldCount; ++i) {
          if (trim(f[i + 1]).empty()) continue;
          auto v = parse_double(f[i + 1]);
          if (!v || std::isnan(*v))
            throw DataError(path + ":" + std::to_string(line) + ": bad value in " +
                            std::string(kDemoColumns[i]));
          d.values[i] = *v;
        }
        validate_demographics(d);
        if (!table.emplace(d.cbg_id, d).second)
          throw DataError(path + ": duplicate cbg_id " + d.cbg_id);
      },
      header);
  return table;
}

inline void write_demographics_csv(const std::string& path, const DemographicsTable& table) {
  auto out = open_output(path);
  out << demographics_header() << '\n';
  for (const auto& [id, d] : table) {
    out << csv_escape(id);
    for (const auto& v : d.values) out << ',' << (v ? format_double(*v) : "");
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Home inference

// Which evening a "night" may start on. tue_fri: nights starting Tuesday
// through Friday; tue_thu: Tuesday through Thursday.
enum class HomeNights { tue_fri, tue_thu };

inline bool night_allowed(int dow, HomeNights nights) {
  const int last = nights == HomeNights::tue_fri ? 4 : 3;
  return dow >= 1 && dow <= last;
}

inline constexpr std::int64_t kNightStartS = 21 * 3600;  // 21:00 local
inline constexpr std::int64_t kNightEndS = 31 * 3600;    // 07:00 local next day

struct NightStop {
  std::int64_t night_label = 0;  // local day number of the evening the night starts
  Stop stop;
};

// Stops whose [t_start, t_end] meets a 21:00-07:00 local window that starts
// on an allowed weekday. A stop spanning several windows appears once per
// qualifying night.
inline std::vector<NightStop> qualifying_night_stops(std::span<const Stop> stops,
                                                     double utc_offset_hours,
                                                     HomeNights nights = HomeNights::tue_fri) {
  const std::int64_t off = offset_seconds(utc_offset_hours);
  std::vector<NightStop> out;
  for (const auto& s : stops) {
    const std::int64_t ls = s.t_start + off;
    const std::int64_t le = s.t_end + off;
    const std::int64_t first = floor_div(ls - kNightEndS, kSecondsPerDay);
    const std::int64_t last = floor_div(le - kNightStartS, kSecondsPerDay);
    for (std::int64_t day = first; day <= last; ++day) {
      const std::int64_t w0 = day * kSecondsPerDay + kNightStartS;
      const std::int64_t w1 = day * kSecondsPerDay + kNightEndS;
      if (ls < w1 && le >= w0 && night_allowed(day_number_to_dow(day), nights)) {
        out.push_back({day, s});
      }
    }
  }
  return out;
}

struct HomeProfile {
  std::string user_id;
  GeoPoint home;
  std::size_t n_nights = 0;
  std::optional<std::string> home_cbg;
  std::optional<CbgDemographics> demographics;
};

struct HomeParams {
  double r_home_m = 100.0;
  std::size_t min_nights = 3;
  HomeNights nights = HomeNights::tue_fri;
  double utc_offset_hours = -5.0;
};

// Greedy anchor clustering of night-stop centroids in time order; each stop
// joins the first cluster whose anchor lies within r_home. The winner covers
// the most distinct nights (ties: longer summed stop duration, then earlier
// anchor). Home is the mean of the winner's stop centroids.
inline std::optional<HomeProfile> infer_home(std::span<const NightStop> night_stops, double r_home_m,
                                             std::size_t min_nights) {
  if (night_stops.empty()) return std::nullopt;
  std::vector<const NightStop*> order;
  order.reserve(night_stops.size());
  for (const auto& ns : night_stops) order.push_back(&ns);
  std::sort(order.begin(), order.end(), [](const NightStop* a, const NightStop* b) {
    if (a->stop.t_start != b->stop.t_start) return a->stop.t_start < b->stop.t_start;
    if (a->stop.t_end != b->stop.t_end) return a->stop.t_end < b->stop.t_end;
    return a->night_label < b->night_label;
  });

  struct Cluster {
    GeoPoint anchor;
    std::int64_t anchor_time = 0;
    std::vector<GeoPoint> centroids;
    std::set<std::int64_t> nights;
    std::int64_t total_duration = 0;
  };
  std::vector<Cluster> clusters;
  const Stop* previous = nullptr;
  std::size_t previous_cluster = 0;
  for (const NightStop* ns : order) {
    const Stop& s = ns->stop;
    // The same stop listed under a second night only adds the label.
    if (previous && previous->t_start == s.t_start && previous->t_end == s.t_end) {
      clusters[previous_cluster].nights.insert(ns->night_label);
      continue;
    }
    std::size_t target = clusters.size();
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (haversine_m(clusters[c].anchor, s.centroid) <= r_home_m) {
        target = c;
        break;
      }
    }
    if (target == clusters.size()) clusters.push_back({s.centroid, s.t_start, {}, {}, 0});
    auto& cl = clusters[target];
    cl.centroids.push_back(s.centroid);
    cl.nights.insert(ns->night_label);
    cl.total_duration += s.duration_s();
    previous = &s;
    previous_cluster = target;
  }

  const Cluster* best = &clusters.front();
  for (const auto& c : clusters) {
    if (c.nights.size() != best->nights.size()) {
      if (c.nights.size() > best->nights.size()) best = &c;
    } else if (c.total_duration != best->total_duration) {
      if (c.total_duration > best->total_duration) best = &c;
    } else if (c.anchor_time < best->anchor_time) {
      best = &c;
    }
  }
  if (best->nights.size() < min_nights) return std::nullopt;

  const GeoPoint first = best->centroids.front();
  double dlat = 0.0, dlon = 0.0;
  for (auto p : best->centroids) {
    dlat += p.lat - first.lat;
    dlon += p.lon - first.lon;
  }
  const double n = static_cast<double>(best->centroids.size());
  HomeProfile profile;
  profile.user_id = order.front()->stop.user_id;
  profile.home = {first.lat + dlat / n, first.lon + dlon / n};
  profile.n_nights = best->nights.size();
  return profile;
}

struct HomeDropReport {
  std::size_t users = 0;             // users with at least one stop
  std::size_t no_home = 0;           // too few qualifying nights
  std::size_t no_cbg = 0;            // home outside every polygon
  std::size_t no_demographics = 0;   // home CBG missing from the table
};

inline HomeProfile attach_demographics(HomeProfile profile, std::span<const CbgPolygon> polygons,
                                       const DemographicsTable& table,
                                       HomeDropReport* report = nullptr) {
  profile.home_cbg = assign_cbg(profile.home, polygons);
  profile.demographics.reset();
  if (!profile.home_cbg) {
    if (report) ++report->no_cbg;
    return profile;
  }
  auto it = table.find(*profile.home_cbg);
  if (it == table.end()) {
    if (report) ++report->no_demographics;
    return profile;
  }
  profile.demographics = it->second;
  return profile;
}

// Infers homes for all users in `stops` (grouped by user, time-ordered within
// a user). Users without a home are counted and left out. Sorted by user id.
inline std::vector<HomeProfile> infer_homes(std::span<const Stop> stops, const HomeParams& params,
                                            HomeDropReport* report = nullptr) {
  std::map<std::string, std::vector<Stop>> by_user;
  for (const auto& s : stops) by_user[s.user_id].push_back(s);
  std::vector<const std::vector<Stop>*> users;
  for (auto& [id, v] : by_user) {
    std::stable_sort(v.begin(), v.end(),
                     [](const Stop& a, const Stop& b) { return a.t_start < b.t_start; });
    users.push_back(&v);
  }
  std::vector<std::optional<HomeProfile>> found(users.size());
  parallel_for(users.size(), [&](std::size_t i) {
    auto nights = qualifying_night_stops(*users[i], params.utc_offset_hours, params.nights);
    found[i] = infer_home(nights, params.r_home_m, params.min_nights);
  });
  std::vector<HomeProfile> homes;
  for (auto& h : found) {
    if (h) homes.push_back(std::move(*h));
  }
  if (report) {
    report->users = users.size();
    report->no_home = users.size() - homes.size();
  }
  return homes;
}

inline constexpr const char* kHomeHeader = "user_id,home_lat,home_lon,n_nights,home_cbg";

inline void write_homes_csv(const std::string& path, std::span<const HomeProfile> homes) {
  auto out = open_output(path);
  out << kHomeHeader << '\n';
  for (const auto& h : homes) {
    out << csv_escape(h.user_id) << ',' << format_double(h.home.lat) << ','
        << format_double(h.home.lon) << ',' << h.n_nights << ','
        << (h.home_cbg ? csv_escape(*h.home_cbg) : "") << '\n';
  }
}

// Reads persisted homes and re-attaches demographics from the table.
inline std::vector<HomeProfile> read_homes_csv(const std::string& path,
                                               const DemographicsTable& table) {
  std::vector<HomeProfile> homes;
  for_each_csv_row(
      path,
      [&](const std::vector<std::string>& f, std::size_t line) {
        auto lat = f.size() == 5 ? parse_double(f[1]) : std::nullopt;
        auto lon = f.size() == 5 ? parse_double(f[2]) : std::nullopt;
        auto n = f.size() == 5 ? parse_int(f[3]) : std::nullopt;
        if (!lat || !lon || !n)
          throw DataError(path + ":" + std::to_string(line) + ": malformed home row");
        HomeProfile h;
        h.user_id = f[0];
        h.home = {*lat, *lon};
        h.n_nights = static_cast<std::size_t>(*n);
        if (!f[4].empty()) {
          h.home_cbg = f[4];
          if (auto it = table.find(f[4]); it != table.end()) h.demographics = it->second;
        }
        homes.push_back(std::move(h));
      },
      kHomeHeader);
  return homes;
}

}  // namespace mobiprice
