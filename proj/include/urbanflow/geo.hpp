#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace urbanflow::geo {

inline constexpr double kEarthRadiusM = 6371000.0;
inline constexpr double kDegToRad = M_PI / 180.0;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

inline bool valid_coords(double lat, double lon) {
  return std::isfinite(lat) && std::isfinite(lon) && std::fabs(lat) <= 90.0 &&
         std::fabs(lon) <= 180.0;
}

inline double haversine_m(double lat1, double lon1, double lat2, double lon2) {
  const double phi1 = lat1 * kDegToRad;
  const double phi2 = lat2 * kDegToRad;
  const double dphi = (lat2 - lat1) * kDegToRad;
  const double dlam = (lon2 - lon1) * kDegToRad;
  const double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
                   std::cos(phi1) * std::cos(phi2) * std::sin(dlam / 2) *
                       std::sin(dlam / 2);
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

inline double haversine_m(const LatLon& a, const LatLon& b) {
  return haversine_m(a.lat, a.lon, b.lat, b.lon);
}

// Offset a point by (east, north) meters. Good to sub-meter at city scale.
inline LatLon offset_m(const LatLon& p, double east_m, double north_m) {
  const double dlat = north_m / kEarthRadiusM / kDegToRad;
  const double dlon =
      east_m / (kEarthRadiusM * std::cos(p.lat * kDegToRad)) / kDegToRad;
  return {p.lat + dlat, p.lon + dlon};
}

// Local equirectangular projection around a reference point, meters.
struct LocalFrame {
  LatLon ref;
  double cos_lat;

  explicit LocalFrame(const LatLon& r)
      : ref(r), cos_lat(std::cos(r.lat * kDegToRad)) {}

  void to_xy(const LatLon& p, double& x, double& y) const {
    x = (p.lon - ref.lon) * kDegToRad * kEarthRadiusM * cos_lat;
    y = (p.lat - ref.lat) * kDegToRad * kEarthRadiusM;
  }
};

// Distance from point p to segment [a, b], in meters (local planar approx).
inline double point_segment_dist_m(const LatLon& p, const LatLon& a,
                                   const LatLon& b) {
  LocalFrame f(p);
  double ax, ay, bx, by;
  f.to_xy(a, ax, ay);
  f.to_xy(b, bx, by);
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::max(0.0, std::min(1.0, (-ax * dx - ay * dy) / len2));
  const double cx = ax + t * dx, cy = ay + t * dy;
  return std::sqrt(cx * cx + cy * cy);
}

inline double point_polyline_dist_m(const LatLon& p,
                                    const std::vector<LatLon>& line) {
  if (line.empty()) return std::numeric_limits<double>::infinity();
  if (line.size() == 1) return haversine_m(p, line.front());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < line.size(); ++i)
    best = std::min(best, point_segment_dist_m(p, line[i], line[i + 1]));
  return best;
}

inline double polyline_length_m(const std::vector<LatLon>& line) {
  double len = 0.0;
  for (std::size_t i = 0; i + 1 < line.size(); ++i)
    len += haversine_m(line[i], line[i + 1]);
  return len;
}

// Point at arc-length distance s along a polyline (clamped to endpoints).
inline LatLon point_along_polyline(const std::vector<LatLon>& line, double s) {
  if (line.size() == 1 || s <= 0.0) return line.front();
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const double seg = haversine_m(line[i], line[i + 1]);
    if (s <= seg && seg > 0.0) {
      const double t = s / seg;
      return {line[i].lat + t * (line[i + 1].lat - line[i].lat),
              line[i].lon + t * (line[i + 1].lon - line[i].lon)};
    }
    s -= seg;
  }
  return line.back();
}

// Initial bearing in degrees from a to b, range [0, 360).
inline double bearing_deg(const LatLon& a, const LatLon& b) {
  const double phi1 = a.lat * kDegToRad, phi2 = b.lat * kDegToRad;
  const double dlam = (b.lon - a.lon) * kDegToRad;
  const double y = std::sin(dlam) * std::cos(phi2);
  const double x = std::cos(phi1) * std::sin(phi2) -
                   std::sin(phi1) * std::cos(phi2) * std::cos(dlam);
  double deg = std::atan2(y, x) / kDegToRad;
  if (deg < 0) deg += 360.0;
  return deg;
}

}  // namespace urbanflow::geo
