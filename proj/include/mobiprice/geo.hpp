#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mobiprice/core/error.hpp"
#include "mobiprice/core/text.hpp"

namespace mobiprice {

inline constexpr double kEarthRadiusM = 6'371'000.0;

// Study-area limits for indexed queries: no pole or antimeridian handling.
inline constexpr double kMaxIndexedAbsLat = 85.0;

struct GeoPoint {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

inline bool is_valid(GeoPoint p) {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 && p.lat <= 90.0 &&
         p.lon >= -180.0 && p.lon <= 180.0;
}

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

// Great-circle distance on a sphere of radius kEarthRadiusM.
inline double haversine_m(GeoPoint a, GeoPoint b) {
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double sdphi = std::sin((phi2 - phi1) / 2.0);
  const double sdlam = std::sin(deg2rad(b.lon - a.lon) / 2.0);
  double h = sdphi * sdphi + std::cos(phi1) * std::cos(phi2) * sdlam * sdlam;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

// Point displaced by (north_m, east_m) using a local flat approximation.
// Only used for synthetic data and jitter, never for distance decisions.
inline GeoPoint offset_m(GeoPoint p, double north_m, double east_m) {
  const double dlat = rad2deg(north_m / kEarthRadiusM);
  const double dlon = rad2deg(east_m / (kEarthRadiusM * std::cos(deg2rad(p.lat))));
  return {p.lat + dlat, p.lon + dlon};
}

// ---------------------------------------------------------------------------
// Census block group polygons

using Ring = std::vector<GeoPoint>;

struct CbgPolygon {
  std::string cbg_id;
  std::vector<Ring> rings;  // rings[0] is the outer ring, the rest are holes

  // Bounding box of the outer ring, filled by validate_polygon.
  double min_lat = 0, max_lat = 0, min_lon = 0, max_lon = 0;
};

namespace detail {

inline double cross(GeoPoint o, GeoPoint a, GeoPoint b) {
  return (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon);
}

inline bool on_segment(GeoPoint p, GeoPoint a, GeoPoint b) {
  if (p == a || p == b) return true;
  const double len = std::hypot(b.lon - a.lon, b.lat - a.lat);
  if (len == 0.0) return false;
  if (std::abs(cross(a, b, p)) > 1e-12 * len) return false;
  return p.lon >= std::min(a.lon, b.lon) && p.lon <= std::max(a.lon, b.lon) &&
         p.lat >= std::min(a.lat, b.lat) && p.lat <= std::max(a.lat, b.lat);
}

inline int orientation(GeoPoint a, GeoPoint b, GeoPoint c) {
  const double v = cross(a, b, c);
  return (v > 0) - (v < 0);
}

inline bool segments_intersect(GeoPoint p1, GeoPoint p2, GeoPoint q1, GeoPoint q2) {
  const int o1 = orientation(p1, p2, q1);
  const int o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1);
  const int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(q1, p1, p2)) return true;
  if (o2 == 0 && on_segment(q2, p1, p2)) return true;
  if (o3 == 0 && on_segment(p1, q1, q2)) return true;
  if (o4 == 0 && on_segment(p2, q1, q2)) return true;
  return false;
}

inline double ring_area(const Ring& ring) {
  double a = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    a += ring[i].lon * ring[i + 1].lat - ring[i + 1].lon * ring[i].lat;
  }
  return a / 2.0;
}

}  // namespace detail

// Checks ring closure, vertex counts, non-zero area and (for the outer ring)
// absence of self-intersections. Throws DataError. Also fills the bbox.
inline void validate_polygon(CbgPolygon& poly) {
  if (poly.rings.empty()) throw DataError("CBG " + poly.cbg_id + ": polygon has no rings");
  for (const auto& ring : poly.rings) {
    if (ring.size() < 4)
      throw DataError("CBG " + poly.cbg_id + ": ring has fewer than 4 vertices");
    if (!(ring.front() == ring.back()))
      throw DataError("CBG " + poly.cbg_id + ": ring is not closed");
    for (auto p : ring)
      if (!is_valid(p)) throw DataError("CBG " + poly.cbg_id + ": invalid coordinate");
    if (std::abs(detail::ring_area(ring)) <= 1e-15)
      throw DataError("CBG " + poly.cbg_id + ": degenerate ring (zero area)");
  }
  const Ring& outer = poly.rings.front();
  const std::size_t edges = outer.size() - 1;
  for (std::size_t i = 0; i < edges; ++i) {
    for (std::size_t j = i + 1; j < edges; ++j) {
      const bool adjacent = (j == i + 1) || (i == 0 && j == edges - 1);
      if (adjacent) continue;
      if (detail::segments_intersect(outer[i], outer[i + 1], outer[j], outer[j + 1]))
        throw DataError("CBG " + poly.cbg_id + ": outer ring self-intersects");
    }
  }
  poly.min_lat = poly.max_lat = outer.front().lat;
  poly.min_lon = poly.max_lon = outer.front().lon;
  for (auto p : outer) {
    poly.min_lat = std::min(poly.min_lat, p.lat);
    poly.max_lat = std::max(poly.max_lat, p.lat);
    poly.min_lon = std::min(poly.min_lon, p.lon);
    poly.max_lon = std::max(poly.max_lon, p.lon);
  }
}

// Even-odd rule in the lon/lat plane over all rings, so holes subtract.
// Points on any edge or vertex count as inside.
inline bool point_in_polygon(GeoPoint p, const CbgPolygon& poly) {
  bool inside = false;
  for (const auto& ring : poly.rings) {
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
      const GeoPoint a = ring[i];
      const GeoPoint b = ring[i + 1];
      if (detail::on_segment(p, a, b)) return true;
      if ((a.lat > p.lat) != (b.lat > p.lat)) {
        const double x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
        if (p.lon < x) inside = !inside;
      }
    }
  }
  return inside;
}

// First polygon in load order containing p.
inline std::optional<std::string> assign_cbg(GeoPoint p, std::span<const CbgPolygon> polygons) {
  for (const auto& poly : polygons) {
    if (p.lat < poly.min_lat || p.lat > poly.max_lat || p.lon < poly.min_lon ||
        p.lon > poly.max_lon)
      continue;
    if (point_in_polygon(p, poly)) return poly.cbg_id;
  }
  return std::nullopt;
}

namespace detail {

inline Ring parse_ring(const nlohmann::json& coords) {
  Ring ring;
  for (const auto& c : coords) {
    if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number())
      throw DataError("GeoJSON: malformed coordinate");
    ring.push_back({c[1].get<double>(), c[0].get<double>()});
  }
  return ring;
}

}  // namespace detail

// Loads a GeoJSON FeatureCollection. Each feature needs a string property
// "cbg_id" and Polygon or MultiPolygon geometry; a MultiPolygon becomes one
// CbgPolygon per part, all sharing the id.
inline std::vector<CbgPolygon> parse_cbg_geojson(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("GeoJSON parse error: ") + e.what());
  }
  if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features"))
    throw DataError("GeoJSON: expected a FeatureCollection");
  std::vector<CbgPolygon> out;
  for (const auto& feature : doc["features"]) {
    const auto& props = feature.at("properties");
    if (!props.contains("cbg_id") || !props["cbg_id"].is_string())
      throw DataError("GeoJSON: feature without string property cbg_id");
    const std::string id = props["cbg_id"].get<std::string>();
    const auto& geom = feature.at("geometry");
    const std::string type = geom.value("type", "");
    std::vector<nlohmann::json> parts;
    if (type == "Polygon") {
      parts.push_back(geom.at("coordinates"));
    } else if (type == "MultiPolygon") {
      for (const auto& part : geom.at("coordinates")) parts.push_back(part);
    } else {
      throw DataError("GeoJSON: unsupported geometry type '" + type + "' for " + id);
    }
    for (const auto& part : parts) {
      CbgPolygon poly;
      poly.cbg_id = id;
      for (const auto& ring : part) poly.rings.push_back(detail::parse_ring(ring));
      validate_polygon(poly);
      out.push_back(std::move(poly));
    }
  }
  return out;
}

inline std::vector<CbgPolygon> load_cbg_geojson(const std::string& path) {
  return parse_cbg_geojson(read_file(path));
}

inline std::string to_geojson(std::span<const CbgPolygon> polygons) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& poly : polygons) {
    nlohmann::json rings = nlohmann::json::array();
    for (const auto& ring : poly.rings) {
      nlohmann::json coords = nlohmann::json::array();
      for (auto p : ring) coords.push_back({p.lon, p.lat});
      rings.push_back(std::move(coords));
    }
    features.push_back({{"type", "Feature"},
                        {"properties", {{"cbg_id", poly.cbg_id}}},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", rings}}}});
  }
  nlohmann::json doc = {{"type", "FeatureCollection"}, {"features", features}};
  return doc.dump(1) + "\n";
}

// ---------------------------------------------------------------------------
// Uniform lat/lon grid index

inline constexpr double kDefaultCellSizeDeg = 0.01;

struct CellKey {
  std::int64_t lat_cell = 0;
  std::int64_t lon_cell = 0;
  friend bool operator==(const CellKey&, const CellKey&) = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const {
    return static_cast<std::size_t>(
        splitmix64(static_cast<std::uint64_t>(k.lat_cell) * 0x9e3779b97f4a7c15ULL ^
                   static_cast<std::uint64_t>(k.lon_cell)));
  }
};

// Immutable after build; concurrent radius queries are safe.
template <class Id = std::size_t>
class GridIndex {
 public:
  struct Entry {
    Id id;
    GeoPoint point;
  };
  using CellMap = std::unordered_map<CellKey, std::vector<Entry>, CellKeyHash>;

  static GridIndex build(std::span<const std::pair<Id, GeoPoint>> points,
                         double cell_size_deg = kDefaultCellSizeDeg) {
    GridIndex index(cell_size_deg);
    for (const auto& [id, p] : points) index.insert(id, p);
    return index;
  }

  double cell_size_deg() const { return cell_size_; }
  std::size_t cell_count() const { return cells_.size(); }
  std::size_t size() const { return size_; }
  const CellMap& cells() const { return cells_; }

  CellKey key_of(GeoPoint p) const {
    return {static_cast<std::int64_t>(std::floor(p.lat / cell_size_)),
            static_cast<std::int64_t>(std::floor(p.lon / cell_size_))};
  }

  // Ids with haversine_m(point, center) <= r, ascending. Candidate cells are
  // all cells meeting the bounding box of the query circle.
  std::vector<Id> radius_query(GeoPoint center, double r) const {
    std::vector<Id> out;
    for_each_in_radius(center, r, [&](const Entry& e, double) { out.push_back(e.id); });
    std::sort(out.begin(), out.end());
    return out;
  }

  // Calls fn(entry, distance_m) for every entry within r of center, in
  // unspecified order.
  template <class Fn>
  void for_each_in_radius(GeoPoint center, double r, Fn&& fn) const {
    if (!(r >= 0.0)) throw std::invalid_argument("radius_query: radius must be >= 0");
    if (cells_.empty()) return;
    const double delta = r / kEarthRadiusM;  // angular radius, radians
    const double dlat = rad2deg(delta);
    const double lat_lo = center.lat - dlat;
    const double lat_hi = center.lat + dlat;
    if (std::abs(lat_lo) > kMaxIndexedAbsLat || std::abs(lat_hi) > kMaxIndexedAbsLat)
      throw std::domain_error("radius_query: query circle reaches polar latitudes");
    const double cos_lat = std::cos(deg2rad(center.lat));
    const double s = std::sin(delta) / cos_lat;
    const double dlon = s >= 1.0 ? 180.0 : rad2deg(std::asin(s));
    const double lon_lo = center.lon - dlon;
    const double lon_hi = center.lon + dlon;
    if (lon_lo <= -180.0 || lon_hi >= 180.0)
      throw std::domain_error("radius_query: query circle crosses the antimeridian");
    constexpr double pad = 1e-9;
    const auto c0 = key_of({lat_lo - pad, lon_lo - pad});
    const auto c1 = key_of({lat_hi + pad, lon_hi + pad});
    for (std::int64_t a = c0.lat_cell; a <= c1.lat_cell; ++a) {
      for (std::int64_t b = c0.lon_cell; b <= c1.lon_cell; ++b) {
        auto it = cells_.find(CellKey{a, b});
        if (it == cells_.end()) continue;
        for (const auto& e : it->second) {
          const double d = haversine_m(e.point, center);
          if (d <= r) fn(e, d);
        }
      }
    }
  }

 private:
  explicit GridIndex(double cell_size_deg) : cell_size_(cell_size_deg) {
    if (!(cell_size_deg > 0.0) || !std::isfinite(cell_size_deg))
      throw ConfigError("grid index: cell size must be > 0 degrees");
  }

  void insert(Id id, GeoPoint p) {
    if (!is_valid(p) || std::abs(p.lat) > kMaxIndexedAbsLat || p.lon <= -180.0 ||
        p.lon >= 180.0)
      throw DataError("grid index: point outside supported study area");
    cells_[key_of(p)].push_back({id, p});
    ++size_;
  }

  double cell_size_;
  std::size_t size_ = 0;
  CellMap cells_;
};

}  // namespace mobiprice
