#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "urbanflow/geo.hpp"
#include "urbanflow/types.hpp"

namespace urbanflow::transit {

inline constexpr double kWalkSpeedMps = 1.4;
// Expected headway-driven wait folded into bus/metro leg durations.
inline constexpr double kBoardingWaitS = 105;

enum class LegMode : std::uint8_t { Walk = 0, Bus = 1, Metro = 2, Car = 3 };

inline const char* leg_mode_name(LegMode m) {
  switch (m) {
    case LegMode::Walk: return "walk";
    case LegMode::Bus: return "bus";
    case LegMode::Metro: return "metro";
    case LegMode::Car: return "car";
  }
  return "walk";
}

inline Mode leg_to_mode(LegMode m) {
  switch (m) {
    case LegMode::Walk: return Mode::NonVehicle;
    case LegMode::Bus: return Mode::Bus;
    case LegMode::Metro: return Mode::Metro;
    case LegMode::Car: return Mode::Car;
  }
  return Mode::NonVehicle;
}

struct Node {
  std::string id;
  std::string kind;  // bus_stop | metro_station
  geo::LatLon pos;
};

struct Edge {
  int from = -1;
  int to = -1;
  LegMode mode = LegMode::Walk;
  std::vector<geo::LatLon> geometry;  // from -> to
  double travel_s = 0;
  double length_m = 0;
};

struct TransitNetwork {
  std::vector<Node> nodes;
  std::vector<Edge> edges;  // traversable in both directions

  int node_index(const std::string& id) const;
  void bounding_box(geo::LatLon& lo, geo::LatLon& hi) const;
};

TransitNetwork load_network(std::istream& in);
void save_network(std::ostream& out, const TransitNetwork& net);

struct RouteLeg {
  LegMode mode = LegMode::Walk;
  std::vector<geo::LatLon> polyline;
  double expected_duration_s = 0;
  double length_m = 0;
};

struct RouteCandidate {
  std::vector<RouteLeg> legs;
  double total_duration_s = 0;
  double total_length_m = 0;
};

struct RoutingOptions {
  int max_access_stops = 4;         // walk links from origin/dest
  double max_access_dist_m = 3000;  // beyond this, no access link
  double transfer_radius_m = 400;   // implicit walk transfers between nodes
};

// K-shortest paths by nominal duration over the multimodal graph; candidates
// deduplicated by leg-mode sequence and sorted by total duration.
// Unreachable OD yields an empty list. origin == dest yields one zero-length
// route.
std::vector<RouteCandidate> enumerate_routes(const TransitNetwork& net,
                                             const geo::LatLon& origin,
                                             const geo::LatLon& dest, int k,
                                             const RoutingOptions& opt = {});

}  // namespace urbanflow::transit
