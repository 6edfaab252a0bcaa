#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mobiprice/core/error.hpp"
#include "mobiprice/core/parallel.hpp"
#include "mobiprice/core/text.hpp"
#include "mobiprice/geo.hpp"

namespace mobiprice {

inline constexpr std::int64_t kSecondsPerDay = 86'400;

struct Ping {
  std::string user_id;
  std::int64_t t = 0;  // unix seconds, UTC
  GeoPoint loc;
  std::optional<double> dwell_s;
  std::optional<double> speed_mps;
  std::optional<std::string> poi;
  std::optional<std::string> platform;
};

// One stationary interval of one user.
struct Stop {
  std::string user_id;
  GeoPoint anchor;    // first ping of the cluster
  GeoPoint centroid;  // arithmetic mean of member lat/lon
  std::int64_t t_start = 0;
  std::int64_t t_end = 0;
  std::size_t n_pings = 0;
  int dow = 0;  // local day of week of t_start, 0 = Monday

  std::int64_t duration_s() const { return t_end - t_start; }
  friend bool operator==(const Stop&, const Stop&) = default;
};

struct StopParams {
  double r_stop_m = 50.0;
  std::int64_t min_stop_duration_s = 300;
  std::int64_t max_gap_s = 43'200;
  double utc_offset_hours = -5.0;
};

inline std::int64_t offset_seconds(double utc_offset_hours) {
  return static_cast<std::int64_t>(std::llround(utc_offset_hours * 3600.0));
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// Days since 1970-01-01 of the local calendar date containing t.
inline std::int64_t local_day_number(std::int64_t t, double utc_offset_hours) {
  return floor_div(t + offset_seconds(utc_offset_hours), kSecondsPerDay);
}

// Day of week of a local day number, Monday = 0. 1970-01-01 was a Thursday.
inline int day_number_to_dow(std::int64_t day) {
  return static_cast<int>(((day + 3) % 7 + 7) % 7);
}

// Fixed-offset local day of week, Monday = 0 ... Sunday = 6.
inline int local_day_of_week(std::int64_t t, double utc_offset_hours) {
  return day_number_to_dow(local_day_number(t, utc_offset_hours));
}

// ---------------------------------------------------------------------------
// Ping ingestion

inline constexpr const char* kPingHeader = "user_id,t,lat,lon,dwell_s,speed_mps,poi,platform";

using PingStreams = std::map<std::string, std::vector<Ping>>;

struct PingParseReport {
  std::size_t rows = 0;
  std::size_t accepted = 0;
  std::size_t malformed = 0;     // unparseable rows; fatal above 10% of rows
  std::size_t out_of_range = 0;  // parseable rows with lat/lon out of bounds
};

struct ParsedPings {
  PingStreams streams;
  PingParseReport report;
};

inline void sort_streams(PingStreams& streams) {
  for (auto& [user, pings] : streams) {
    std::stable_sort(pings.begin(), pings.end(),
                     [](const Ping& a, const Ping& b) { return a.t < b.t; });
  }
}

inline ParsedPings parse_pings(const std::string& path) {
  ParsedPings out;
  auto& rep = out.report;
  for_each_csv_row(
      path,
      [&](const std::vector<std::string>& f, std::size_t) {
        ++rep.rows;
        if (f.size() != 8 || f[0].empty()) {
          ++rep.malformed;
          return;
        }
        auto t = parse_int(f[1]);
        auto lat = parse_double(f[2]);
        auto lon = parse_double(f[3]);
        if (!t || !lat || !lon || *t <= 0) {
          ++rep.malformed;
          return;
        }
        Ping p;
        p.user_id = f[0];
        p.t = *t;
        p.loc = {*lat, *lon};
        if (!trim(f[4]).empty()) {
          p.dwell_s = parse_double(f[4]);
          if (!p.dwell_s) {
            ++rep.malformed;
            return;
          }
        }
        if (!trim(f[5]).empty()) {
          p.speed_mps = parse_double(f[5]);
          if (!p.speed_mps) {
            ++rep.malformed;
            return;
          }
        }
        if (!f[6].empty()) p.poi = f[6];
        if (!f[7].empty()) p.platform = f[7];
        if (!is_valid(p.loc)) {
          ++rep.out_of_range;
          return;
        }
        ++rep.accepted;
        out.streams[p.user_id].push_back(std::move(p));
      },
      kPingHeader);
  if (rep.rows > 0 && rep.malformed * 10 > rep.rows) {
    throw DataError("ping file " + path + ": " + std::to_string(rep.malformed) + " of " +
                    std::to_string(rep.rows) + " rows malformed (limit 10%)");
  }
  sort_streams(out.streams);
  return out;
}

inline void write_pings_csv(const std::string& path, std::span<const Ping> pings) {
  auto out = open_output(path);
  out << kPingHeader << '\n';
  for (const auto& p : pings) {
    out << csv_escape(p.user_id) << ',' << p.t << ',' << format_double(p.loc.lat) << ','
        << format_double(p.loc.lon) << ',' << (p.dwell_s ? format_double(*p.dwell_s) : "")
        << ',' << (p.speed_mps ? format_double(*p.speed_mps) : "") << ','
        << (p.poi ? csv_escape(*p.poi) : "") << ',' << (p.platform ? csv_escape(*p.platform) : "")
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Stop detection

namespace detail {

inline Stop make_stop(std::span<const Ping> members, double utc_offset_hours) {
  Stop s;
  s.user_id = members.front().user_id;
  s.anchor = members.front().loc;
  // Mean offset from the anchor: exact when all members coincide.
  double dlat = 0.0, dlon = 0.0;
  for (const auto& p : members) {
    dlat += p.loc.lat - s.anchor.lat;
    dlon += p.loc.lon - s.anchor.lon;
  }
  const double n = static_cast<double>(members.size());
  s.centroid = {s.anchor.lat + dlat / n, s.anchor.lon + dlon / n};
  s.t_start = members.front().t;
  s.t_end = members.back().t;
  s.n_pings = members.size();
  s.dow = local_day_of_week(s.t_start, utc_offset_hours);
  return s;
}

}  // namespace detail

// Greedy sequential anchor clustering of one user's time-sorted pings.
// A cluster opens at the first unassigned ping (the anchor); the next ping
// joins while it is within r_stop of the anchor and within max_gap of the
// previous member. Otherwise the cluster closes, is emitted if it spans at
// least min_stop_duration with two or more pings, and the breaking ping
// opens the next cluster.
inline std::vector<Stop> detect_stops(std::span<const Ping> stream, const StopParams& params) {
  std::vector<Stop> stops;
  std::size_t begin = 0;
  auto close = [&](std::size_t end) {
    const std::size_t n = end - begin;
    if (n >= 2 && stream[end - 1].t - stream[begin].t >= params.min_stop_duration_s) {
      stops.push_back(detail::make_stop(stream.subspan(begin, n), params.utc_offset_hours));
    }
  };
  for (std::size_t i = 1; i < stream.size(); ++i) {
    const bool near = haversine_m(stream[i].loc, stream[begin].loc) <= params.r_stop_m;
    const bool recent = stream[i].t - stream[i - 1].t <= params.max_gap_s;
    if (!(near && recent)) {
      close(i);
      begin = i;
    }
  }
  if (!stream.empty()) close(stream.size());
  return stops;
}

// Stops for every user; output ordered by user id, then time.
inline std::vector<Stop> detect_all_stops(const PingStreams& streams, const StopParams& params) {
  std::vector<const std::vector<Ping>*> users;
  users.reserve(streams.size());
  for (const auto& [id, pings] : streams) users.push_back(&pings);
  std::vector<std::vector<Stop>> per_user(users.size());
  parallel_for(users.size(), [&](std::size_t i) { per_user[i] = detect_stops(*users[i], params); });
  std::vector<Stop> all;
  for (auto& v : per_user) all.insert(all.end(), v.begin(), v.end());
  return all;
}

inline constexpr const char* kStopHeader =
    "user_id,anchor_lat,anchor_lon,centroid_lat,centroid_lon,t_start,t_end,n_pings,dow";

inline void write_stops_csv(const std::string& path, std::span<const Stop> stops) {
  auto out = open_output(path);
  out << kStopHeader << '\n';
  for (const auto& s : stops) {
    out << csv_escape(s.user_id) << ',' << format_double(s.anchor.lat) << ','
        << format_double(s.anchor.lon) << ',' << format_double(s.centroid.lat) << ','
        << format_double(s.centroid.lon) << ',' << s.t_start << ',' << s.t_end << ','
        << s.n_pings << ',' << s.dow << '\n';
  }
}

inline std::vector<Stop> read_stops_csv(const std::string& path) {
  std::vector<Stop> stops;
  for_each_csv_row(
      path,
      [&](const std::vector<std::string>& f, std::size_t line) {
        auto bad = [&] { return DataError(path + ":" + std::to_string(line) + ": malformed stop row"); };
        if (f.size() != 9) throw bad();
        Stop s;
        s.user_id = f[0];
        auto alat = parse_double(f[1]), alon = parse_double(f[2]);
        auto clat = parse_double(f[3]), clon = parse_double(f[4]);
        auto t0 = parse_int(f[5]), t1 = parse_int(f[6]), n = parse_int(f[7]), dow = parse_int(f[8]);
        if (!alat || !alon || !clat || !clon || !t0 || !t1 || !n || !dow) throw bad();
        s.anchor = {*alat, *alon};
        s.centroid = {*clat, *clon};
        s.t_start = *t0;
        s.t_end = *t1;
        s.n_pings = static_cast<std::size_t>(*n);
        s.dow = static_cast<int>(*dow);
        stops.push_back(std::move(s));
      },
      kStopHeader);
  return stops;
}

}  // namespace mobiprice
