#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mobiprice/core/error.hpp"
#include "mobiprice/core/random.hpp"
#include "mobiprice/core/text.hpp"
#include "mobiprice/features.hpp"
#include "mobiprice/geo.hpp"
#include "mobiprice/home_census.hpp"
#include "mobiprice/trajectory.hpp"

namespace mobiprice::synth {

// Planted price function. price = static + traffic + income + noise
// (+ a floor adjustment keeping prices positive), all recorded per property.
struct PlantedPrice {
  double res_base = 120'000;
  double res_per_bed = 40'000;
  double res_per_bath = 20'000;
  double res_per_sqft = 110;
  double res_cbg_income = 1.5;       // per USD of CBG income above the city mean
  double res_visitor_income = 4.0;   // per USD of weekday visitor income above the city mean
  double res_traffic = 600;          // per weekday visitor

  double com_base = 250'000;
  double com_per_sqft = 120;
  double com_per_bath = 10'000;
  double com_cbg_income = 1.0;
  double com_visitor_income = 0.5;
  double com_traffic = 6'000;

  double min_price = 20'000;
};

struct SyntheticCitySpec {
  double origin_lat = 38.85;
  double origin_lon = -77.10;
  int cbg_rows = 8;
  int cbg_cols = 8;
  double cbg_height_deg = 0.012;
  double cbg_width_deg = 0.015;

  std::size_t n_users = 500;
  std::size_t n_properties = 2'000;
  std::size_t n_days = 14;
  std::int64_t start_local_day = 17'959;  // 2019-03-04, a Monday
  double utc_offset_hours = -5.0;

  double commercial_share = 0.4;
  std::size_t n_office_hotspots = 12;
  std::size_t n_retail_hotspots = 28;

  double jitter_min_m = 10.0;  // per-axis GPS noise stddev, drawn per user
  double jitter_max_m = 30.0;
  double night_observed_prob = 0.85;
  bool enable_trips = true;
  double missing_row_rate = 0.02;    // CBGs without a demographics row
  double missing_field_rate = 0.02;  // individual missing demographic values

  double noise_sd = 25'000;
  double truth_radius_m = 500.0;
  PlantedPrice price;
  std::uint64_t seed = 42;
};

enum class StayKind { home, work, errand };

struct TrueStay {
  std::size_t user = 0;
  GeoPoint loc;
  std::int64_t t_start = 0;  // UTC
  std::int64_t t_end = 0;
  StayKind kind = StayKind::home;
};

struct TrueUser {
  std::string user_id;
  GeoPoint home;
  std::string home_cbg;
  double jitter_m = 0.0;
  bool commuter = false;
  double income = 0.0;  // home CBG median income (city mean when missing)
};

struct Hotspot {
  GeoPoint loc;
  bool office = false;
  double affluence = 0.0;
  double popularity = 1.0;
};

struct PriceTruth {
  std::string property_id;
  PropertyKind kind = PropertyKind::unknown;
  double traffic = 0.0;         // mean distinct non-resident visitors over Mon-Fri
  double visitor_income = 0.0;  // mean over Mon-Fri of visitors' home income
  double static_component = 0.0;
  double traffic_component = 0.0;
  double income_component = 0.0;
  double noise = 0.0;
  double floor_adjustment = 0.0;
  double price = 0.0;
};

struct SyntheticCity {
  std::vector<CbgPolygon> polygons;
  DemographicsTable demographics;
  std::vector<Hotspot> hotspots;
  std::vector<TrueUser> users;
  std::vector<TrueStay> stays;
  std::vector<Ping> pings;  // grouped by user id, time-sorted within a user
  std::vector<PropertyRecord> properties;
  std::vector<PriceTruth> prices;
  double city_mean_income = 0.0;
};

inline void validate_spec(const SyntheticCitySpec& s) {
  if (s.n_users == 0 || s.n_properties == 0)
    throw ConfigError("synthetic city: n_users and n_properties must be > 0");
  if (s.cbg_rows <= 0 || s.cbg_cols <= 0 || s.n_days == 0)
    throw ConfigError("synthetic city: grid and day counts must be > 0");
  if (s.jitter_min_m < 0 || s.jitter_max_m < s.jitter_min_m)
    throw ConfigError("synthetic city: invalid jitter range");
  if (s.commercial_share < 0 || s.commercial_share > 1)
    throw ConfigError("synthetic city: commercial_share must be in [0, 1]");
}

namespace detail {

inline std::string pad(std::size_t v, int width) {
  std::string s = std::to_string(v);
  if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
  return s;
}

inline double clamp01(double v, double lo = 0.0, double hi = 1.0) { return std::clamp(v, lo, hi); }

struct Generator {
  const SyntheticCitySpec& spec;
  SyntheticCity city;
  std::int64_t off = 0;

  explicit Generator(const SyntheticCitySpec& s) : spec(s), off(offset_seconds(s.utc_offset_hours)) {}

  GeoPoint city_min() const { return {spec.origin_lat, spec.origin_lon}; }
  GeoPoint city_max() const {
    return {spec.origin_lat + spec.cbg_rows * spec.cbg_height_deg,
            spec.origin_lon + spec.cbg_cols * spec.cbg_width_deg};
  }
  GeoPoint uniform_in_city(Rng& rng) const {
    return {rng.uniform(city_min().lat, city_max().lat), rng.uniform(city_min().lon, city_max().lon)};
  }
  GeoPoint clamp_to_city(GeoPoint p) const {
    constexpr double eps = 1e-6;
    return {std::clamp(p.lat, city_min().lat + eps, city_max().lat - eps),
            std::clamp(p.lon, city_min().lon + eps, city_max().lon - eps)};
  }

  void make_cbgs() {
    Rng rng(derive_seed(spec.seed, "synth.cbg"));
    for (int r = 0; r < spec.cbg_rows; ++r) {
      for (int c = 0; c < spec.cbg_cols; ++c) {
        const double lat0 = spec.origin_lat + r * spec.cbg_height_deg;
        const double lon0 = spec.origin_lon + c * spec.cbg_width_deg;
        const double lat1 = lat0 + spec.cbg_height_deg;
        const double lon1 = lon0 + spec.cbg_width_deg;
        CbgPolygon poly;
        poly.cbg_id = "110010" + pad(static_cast<std::size_t>(r), 2) + pad(static_cast<std::size_t>(c), 2) + "1";
        poly.rings.push_back({{lat0, lon0}, {lat0, lon1}, {lat1, lon1}, {lat1, lon0}, {lat0, lon0}});
        validate_polygon(poly);

        const double east = spec.cbg_cols > 1 ? static_cast<double>(c) / (spec.cbg_cols - 1) : 0.5;
        const double inc_norm = clamp01(0.5 * east + 0.5 * rng.uniform());
        CbgDemographics d;
        d.cbg_id = poly.cbg_id;
        d.set(DemoField::income, std::round(40'000 + 80'000 * inc_norm));
        d.set(DemoField::age, 30 + 15 * rng.uniform());
        const double white = clamp01(0.25 + 0.2 * inc_norm + 0.4 * rng.uniform(), 0.05, 0.9);
        const double black = (1 - white) * rng.uniform(0.4, 0.9);
        const double asian = (1 - white - black) * rng.uniform(0.2, 0.8);
        d.set(DemoField::white, white);
        d.set(DemoField::black, black);
        d.set(DemoField::asian, asian);
        d.set(DemoField::bachelors, clamp01(0.2 + 0.2 * inc_norm + 0.4 * rng.uniform()));
        d.set(DemoField::unemployment, clamp01(0.03 + 0.08 * rng.uniform()));
        d.set(DemoField::population, std::round(rng.uniform(800, 2400)));
        d.set(DemoField::commute_share, rng.uniform(0.45, 0.8));
        for (std::size_t k = 0; k < kDemoFieldCount; ++k) {
          if (rng.bernoulli(spec.missing_field_rate)) d.values[k].reset();
        }
        const bool drop_row = rng.bernoulli(spec.missing_row_rate);
        if (!drop_row) city.demographics.emplace(d.cbg_id, d);
        city.polygons.push_back(std::move(poly));
      }
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [id, d] : city.demographics) {
      if (auto v = d.get(DemoField::income)) {
        sum += *v;
        ++n;
      }
    }
    city.city_mean_income = n ? sum / static_cast<double>(n) : 75'000.0;
  }

  void make_hotspots() {
    Rng rng(derive_seed(spec.seed, "synth.hotspots"));
    const GeoPoint center{(city_min().lat + city_max().lat) / 2, (city_min().lon + city_max().lon) / 2};
    for (std::size_t i = 0; i < spec.n_office_hotspots; ++i) {
      Hotspot h;
      h.office = true;
      h.loc = clamp_to_city(offset_m(center, rng.normal(0, 1500), rng.normal(0, 1500)));
      h.affluence = std::exp(rng.normal(std::log(city.city_mean_income), 0.3));
      h.popularity = rng.uniform(0.5, 2.0);
      city.hotspots.push_back(h);
    }
    for (std::size_t i = 0; i < spec.n_retail_hotspots; ++i) {
      Hotspot h;
      h.loc = uniform_in_city(rng);
      h.affluence = std::exp(rng.normal(std::log(city.city_mean_income), 0.35));
      h.popularity = rng.uniform(0.5, 2.0);
      city.hotspots.push_back(h);
    }
  }

  void make_users() {
    Rng rng(derive_seed(spec.seed, "synth.users"));
    std::vector<double> weights;
    for (const auto& poly : city.polygons) {
      auto it = city.demographics.find(poly.cbg_id);
      const auto pop = it == city.demographics.end() ? std::nullopt : it->second.get(DemoField::population);
      weights.push_back(pop.value_or(1'500.0));
    }
    double total = 0.0;
    for (double w : weights) total += w;
    for (std::size_t u = 0; u < spec.n_users; ++u) {
      double pick = rng.uniform() * total;
      std::size_t cell = 0;
      while (cell + 1 < weights.size() && pick >= weights[cell]) pick -= weights[cell++];
      const auto& poly = city.polygons[cell];
      TrueUser user;
      user.user_id = "u" + pad(u + 1, 5);
      user.home_cbg = poly.cbg_id;
      user.home = {rng.uniform(poly.min_lat, poly.max_lat), rng.uniform(poly.min_lon, poly.max_lon)};
      user.jitter_m = rng.uniform(spec.jitter_min_m, spec.jitter_max_m);
      auto it = city.demographics.find(poly.cbg_id);
      const CbgDemographics* demo = it == city.demographics.end() ? nullptr : &it->second;
      const double commute = demo ? demo->get(DemoField::commute_share).value_or(0.6) : 0.6;
      user.commuter = spec.enable_trips && rng.bernoulli(commute);
      user.income = demo ? demo->get(DemoField::income).value_or(city.city_mean_income) : city.city_mean_income;
      city.users.push_back(std::move(user));
    }
  }

  std::size_t choose_retail(const TrueUser& user, GeoPoint from, Rng& rng) const {
    std::vector<double> w;
    std::vector<std::size_t> idx;
    for (std::size_t h = 0; h < city.hotspots.size(); ++h) {
      const auto& hs = city.hotspots[h];
      if (hs.office) continue;
      const double z = (std::log(user.income) - std::log(hs.affluence)) / 0.3;
      const double dist_km = haversine_m(from, hs.loc) / 1000.0;
      w.push_back(hs.popularity * std::exp(-z * z) * std::exp(-dist_km / 3.0) + 1e-9);
      idx.push_back(h);
    }
    double total = 0.0;
    for (double v : w) total += v;
    double pick = rng.uniform() * total;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (pick < w[i]) return idx[i];
      pick -= w[i];
    }
    return idx.back();
  }

  std::size_t choose_office(Rng& rng) const {
    double total = 0.0;
    for (const auto& h : city.hotspots) total += h.office ? h.popularity : 0.0;
    double pick = rng.uniform() * total;
    std::size_t last = 0;
    for (std::size_t h = 0; h < city.hotspots.size(); ++h) {
      if (!city.hotspots[h].office) continue;
      last = h;
      if (pick < city.hotspots[h].popularity) return h;
      pick -= city.hotspots[h].popularity;
    }
    return last;
  }

  struct LocalStay {
    GeoPoint loc;
    std::int64_t t0, t1;  // local seconds
    StayKind kind;
    std::string poi;
  };

  static constexpr std::int64_t kH = 3600;
  static constexpr double kTravelSpeed = 8.0;  // m/s

  std::int64_t travel_s(GeoPoint a, GeoPoint b) const {
    return 300 + static_cast<std::int64_t>(haversine_m(a, b) / kTravelSpeed);
  }

  std::vector<LocalStay> schedule(std::size_t u, Rng& rng) const {
    const auto& user = city.users[u];
    std::vector<LocalStay> stays;
    const std::int64_t first_day = spec.start_local_day * kSecondsPerDay;
    const std::int64_t period_end =
        (spec.start_local_day + static_cast<std::int64_t>(spec.n_days)) * kSecondsPerDay + 7 * kH;
    std::int64_t home_since = first_day;
    GeoPoint work;
    std::string work_poi;
    if (user.commuter) {
      const auto h = choose_office(rng);
      work = clamp_to_city(offset_m(city.hotspots[h].loc, rng.normal(0, 80), rng.normal(0, 80)));
      work_poi = "office_" + pad(h, 2);
    }
    if (!spec.enable_trips) {
      stays.push_back({user.home, first_day, period_end, StayKind::home, {}});
      return stays;
    }
    for (std::size_t k = 0; k < spec.n_days; ++k) {
      const std::int64_t base = (spec.start_local_day + static_cast<std::int64_t>(k)) * kSecondsPerDay;
      const int dow = day_number_to_dow(spec.start_local_day + static_cast<std::int64_t>(k));
      const bool weekday = dow < 5;
      std::int64_t t;
      GeoPoint here = user.home;
      std::int64_t leave;
      std::size_t errands;
      std::int64_t errand_window_start;
      if (user.commuter && weekday) {
        leave = base + 7 * kH + 30 * 60 + rng.integer(0, 3600);
        const std::int64_t w0 = leave + travel_s(user.home, work);
        const std::int64_t w1 = base + 16 * kH + 30 * 60 + rng.integer(0, 3600);
        stays.push_back({user.home, home_since, leave, StayKind::home, {}});
        stays.push_back({work, w0, w1, StayKind::work, work_poi});
        t = w1;
        here = work;
        errands = static_cast<std::size_t>(rng.integer(0, 2));
        errand_window_start = t;
      } else {
        leave = base + 9 * kH + rng.integer(0, 3 * 3600);
        stays.push_back({user.home, home_since, leave, StayKind::home, {}});
        t = leave;
        errands = static_cast<std::size_t>(rng.integer(1, 3));
        errand_window_start = t;
      }
      (void)errand_window_start;
      for (std::size_t e = 0; e < errands; ++e) {
        const auto h = choose_retail(user, here, rng);
        const GeoPoint dest =
            clamp_to_city(offset_m(city.hotspots[h].loc, rng.normal(0, 60), rng.normal(0, 60)));
        const std::int64_t start = t + travel_s(here, dest) + rng.integer(0, 1800);
        const bool quick = rng.bernoulli(0.6);
        const std::int64_t dur = quick ? rng.integer(6 * 60, 25 * 60) : rng.integer(35 * 60, 120 * 60);
        if (start + dur > base + 20 * kH + 30 * 60) break;
        stays.push_back({dest, start, start + dur, StayKind::errand, "retail_" + pad(h, 2)});
        t = start + dur;
        here = dest;
      }
      home_since = t + travel_s(here, user.home);
      if (stays.back().kind == StayKind::home) {
        // No trip that day: the home stay simply continues.
        home_since = stays.back().t0;
        stays.pop_back();
      }
    }
    stays.push_back({user.home, home_since, period_end, StayKind::home, {}});
    return stays;
  }

  void emit(const TrueUser& user, GeoPoint loc, std::int64_t local_t, Rng& rng,
            std::optional<double> speed, const std::string& poi, const std::string& platform,
            std::vector<Ping>& out) const {
    Ping p;
    p.user_id = user.user_id;
    p.t = local_t - off;
    p.loc = offset_m(loc, rng.normal(0, user.jitter_m), rng.normal(0, user.jitter_m));
    p.speed_mps = speed;
    if (!poi.empty()) p.poi = poi;
    p.platform = platform;
    out.push_back(std::move(p));
  }

  void burst(const TrueUser& user, GeoPoint loc, std::int64_t lo, std::int64_t hi, Rng& rng,
             const std::string& poi, const std::string& platform, std::vector<Ping>& out) const {
    const std::int64_t len = rng.integer(20 * 60, 60 * 60);
    if (hi - lo < len) return;
    const std::int64_t start = lo + rng.integer(0, hi - lo - len);
    for (std::int64_t t = start; t <= start + len; t += 300) emit(user, loc, t, rng, std::nullopt, poi, platform, out);
  }

  void simulate_users() {
    std::vector<std::vector<Ping>> pings(city.users.size());
    std::vector<std::vector<TrueStay>> stays(city.users.size());
    for (std::size_t u = 0; u < city.users.size(); ++u) {
      Rng rng(derive_seed(spec.seed, "synth.user", u));
      const auto& user = city.users[u];
      const std::string platform = rng.bernoulli(0.55) ? "android" : "ios";
      const auto sched = schedule(u, rng);
      auto& out = pings[u];
      for (std::size_t i = 0; i < sched.size(); ++i) {
        const auto& s = sched[i];
        stays[u].push_back({u, s.loc, s.t0 - off, s.t1 - off, s.kind});
        if (i > 0 && rng.bernoulli(0.5)) {
          const auto& prev = sched[i - 1];
          const double step = haversine_m(prev.loc, s.loc);
          for (int k = 1; k <= 3; ++k) {
            const std::int64_t t = prev.t1 + 60 * k;
            if (t >= s.t0) break;
            const double frac = std::min(1.0, kTravelSpeed * 60.0 * k / std::max(step, 1.0));
            const GeoPoint at{prev.loc.lat + frac * (s.loc.lat - prev.loc.lat),
                              prev.loc.lon + frac * (s.loc.lon - prev.loc.lon)};
            emit(user, at, t, rng, kTravelSpeed, {}, platform, out);
          }
        }
        switch (s.kind) {
          case StayKind::home: {
            const std::int64_t d0 = floor_div(s.t0 - 31 * kH, kSecondsPerDay);
            const std::int64_t d1 = floor_div(s.t1 - 21 * kH, kSecondsPerDay);
            for (std::int64_t day = d0; day <= d1; ++day) {
              const std::int64_t lo = std::max(s.t0, day * kSecondsPerDay + 21 * kH + 1800);
              const std::int64_t hi = std::min(s.t1, day * kSecondsPerDay + 30 * kH + 1800);
              if (hi <= lo || !rng.bernoulli(spec.night_observed_prob)) continue;
              const auto n = rng.integer(1, 3);
              for (long long b = 0; b < n; ++b) burst(user, s.loc, lo, hi, rng, {}, platform, out);
            }
            break;
          }
          case StayKind::work: {
            const auto n = rng.integer(1, 2);
            for (long long b = 0; b < n; ++b) burst(user, s.loc, s.t0, s.t1, rng, s.poi, platform, out);
            break;
          }
          case StayKind::errand: {
            std::int64_t t = s.t0;
            for (; t <= s.t1; t += 300) emit(user, s.loc, t, rng, std::nullopt, s.poi, platform, out);
            if (s.t1 - (t - 300) > 60) emit(user, s.loc, s.t1, rng, std::nullopt, s.poi, platform, out);
            break;
          }
        }
      }
      std::stable_sort(out.begin(), out.end(), [](const Ping& a, const Ping& b) { return a.t < b.t; });
    }
    for (auto& v : pings) city.pings.insert(city.pings.end(), v.begin(), v.end());
    for (auto& v : stays) city.stays.insert(city.stays.end(), v.begin(), v.end());
  }

  void make_properties() {
    Rng rng(derive_seed(spec.seed, "synth.properties"));
    for (std::size_t i = 0; i < spec.n_properties; ++i) {
      PropertyRecord p;
      p.property_id = "p" + pad(i + 1, 6);
      if (rng.bernoulli(spec.commercial_share)) {
        p.kind = PropertyKind::commercial;
        if (rng.bernoulli(0.65) && !city.hotspots.empty()) {
          const auto& h = city.hotspots[rng.index(city.hotspots.size())];
          p.loc = clamp_to_city(offset_m(h.loc, rng.normal(0, 350), rng.normal(0, 350)));
        } else {
          p.loc = uniform_in_city(rng);
        }
        p.beds = 0;
        p.baths = static_cast<double>(rng.integer(1, 6));
        p.sqft = std::round(rng.uniform(1'500, 9'000));
      } else {
        p.kind = PropertyKind::residential;
        p.loc = uniform_in_city(rng);
        p.beds = static_cast<double>(rng.integer(1, 5));
        p.baths = std::max(1.0, p.beds - 1 + static_cast<double>(rng.integer(0, 1)));
        p.sqft = std::max(400.0, std::round(450 + 380 * p.beds + rng.normal(0, 150)));
      }
      city.properties.push_back(std::move(p));
    }
  }

  // Ground-truth weekday traffic and visitor income from the true stays.
  void price_properties() {
    Rng rng(derive_seed(spec.seed, "synth.prices"));
    std::vector<std::pair<std::size_t, GeoPoint>> stay_pts, home_pts;
    for (std::size_t i = 0; i < city.stays.size(); ++i) {
      const auto& s = city.stays[i];
      if (s.t_end - s.t_start >= 300) stay_pts.emplace_back(i, s.loc);
    }
    for (std::size_t u = 0; u < city.users.size(); ++u) home_pts.emplace_back(u, city.users[u].home);
    const auto stay_index = GridIndex<std::size_t>::build(stay_pts);
    const auto home_index = GridIndex<std::size_t>::build(home_pts);
    const auto& pp = spec.price;
    const double mean_inc = city.city_mean_income;

    for (const auto& prop : city.properties) {
      const auto residents = home_index.radius_query(prop.loc, spec.truth_radius_m);
      std::array<std::set<std::size_t>, kDaysPerWeek> visitors;
      stay_index.for_each_in_radius(prop.loc, spec.truth_radius_m, [&](const auto& e, double) {
        const auto& s = city.stays[e.id];
        if (std::binary_search(residents.begin(), residents.end(), s.user)) return;
        visitors[static_cast<std::size_t>(local_day_of_week(s.t_start, spec.utc_offset_hours))].insert(s.user);
      });
      double traffic = 0.0, income_sum = 0.0;
      int income_days = 0;
      for (int d = 0; d < 5; ++d) {
        const auto& vs = visitors[static_cast<std::size_t>(d)];
        traffic += static_cast<double>(vs.size()) / 5.0;
        if (vs.empty()) continue;
        double s = 0.0;
        for (auto u : vs) s += city.users[u].income;
        income_sum += s / static_cast<double>(vs.size());
        ++income_days;
      }
      const double visitor_income = income_days ? income_sum / income_days : mean_inc;

      auto it = city.demographics.end();
      if (auto cbg = assign_cbg(prop.loc, city.polygons)) it = city.demographics.find(*cbg);
      const double cbg_inc_dev =
          it == city.demographics.end() ? 0.0 : it->second.get(DemoField::income).value_or(mean_inc) - mean_inc;

      PriceTruth t;
      t.property_id = prop.property_id;
      t.kind = prop.kind;
      t.traffic = traffic;
      t.visitor_income = visitor_income;
      if (prop.kind == PropertyKind::commercial) {
        t.static_component = pp.com_base + pp.com_per_sqft * prop.sqft + pp.com_per_bath * prop.baths +
                             pp.com_cbg_income * cbg_inc_dev;
        t.traffic_component = pp.com_traffic * traffic;
        t.income_component = pp.com_visitor_income * (visitor_income - mean_inc);
      } else {
        t.static_component = pp.res_base + pp.res_per_bed * prop.beds + pp.res_per_bath * prop.baths +
                             pp.res_per_sqft * prop.sqft + pp.res_cbg_income * cbg_inc_dev;
        t.traffic_component = pp.res_traffic * traffic;
        t.income_component = pp.res_visitor_income * (visitor_income - mean_inc);
      }
      t.noise = spec.noise_sd > 0 ? rng.normal(0, spec.noise_sd) : 0.0;
      const double raw = t.static_component + t.traffic_component + t.income_component + t.noise;
      t.floor_adjustment = raw < pp.min_price ? pp.min_price - raw : 0.0;
      t.price = raw + t.floor_adjustment;
      city.prices.push_back(t);
    }
    for (std::size_t i = 0; i < city.properties.size(); ++i) city.properties[i].price = city.prices[i].price;
  }
};

}  // namespace detail

// Builds a synthetic city: CBG grid with demographics, users with homes,
// nightly stays and daily trips observed as pings at 5-minute cadence, and
// properties priced by the planted function. All randomness derives from
// spec.seed.
inline SyntheticCity generate_synthetic(const SyntheticCitySpec& spec) {
  validate_spec(spec);
  detail::Generator g(spec);
  g.make_cbgs();
  g.make_hotspots();
  g.make_users();
  g.simulate_users();
  g.make_properties();
  g.price_properties();
  return std::move(g.city);
}

struct SyntheticPaths {
  std::string pings, polygons, demographics, properties, truth_homes, truth_prices;

  static SyntheticPaths in_dir(const std::string& dir) {
    return {dir + "/pings.csv",      dir + "/cbg_polygons.geojson", dir + "/demographics.csv",
            dir + "/properties.csv", dir + "/truth_homes.csv",      dir + "/truth_prices.csv"};
  }
};

inline void write_synthetic(const SyntheticCity& city, const SyntheticPaths& paths) {
  write_pings_csv(paths.pings, city.pings);
  {
    auto out = open_output(paths.polygons);
    out << to_geojson(city.polygons);
  }
  write_demographics_csv(paths.demographics, city.demographics);
  write_properties_csv(paths.properties, city.properties);
  {
    auto out = open_output(paths.truth_homes);
    out << "user_id,home_lat,home_lon,home_cbg,jitter_m,commuter,income\n";
    for (const auto& u : city.users) {
      out << u.user_id << ',' << format_double(u.home.lat) << ',' << format_double(u.home.lon) << ','
          << u.home_cbg << ',' << format_double(u.jitter_m) << ',' << (u.commuter ? 1 : 0) << ','
          << format_double(u.income) << '\n';
    }
  }
  {
    auto out = open_output(paths.truth_prices);
    out << "property_id,kind,traffic,visitor_income,static_component,traffic_component,"
           "income_component,noise,floor_adjustment,price\n";
    for (const auto& t : city.prices) {
      out << t.property_id << ',' << kind_name(t.kind) << ',' << format_double(t.traffic) << ','
          << format_double(t.visitor_income) << ',' << format_double(t.static_component) << ','
          << format_double(t.traffic_component) << ',' << format_double(t.income_component) << ','
          << format_double(t.noise) << ',' << format_double(t.floor_adjustment) << ','
          << format_double(t.price) << '\n';
    }
  }
}

// Pings grouped into per-user time-sorted streams, as parse_pings returns them.
inline PingStreams to_streams(std::span<const Ping> pings) {
  PingStreams streams;
  for (const auto& p : pings) streams[p.user_id].push_back(p);
  sort_streams(streams);
  return streams;
}

}  // namespace mobiprice::synth
