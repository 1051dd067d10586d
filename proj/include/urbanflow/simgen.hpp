#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "urbanflow/probe_flow.hpp"
#include "urbanflow/rng.hpp"
#include "urbanflow/transit.hpp"
#include "urbanflow/types.hpp"

namespace urbanflow::simgen {

// Local midnight, Monday 2023-01-02, UTC+8.
inline constexpr std::int64_t kBaseEpoch = 1672588800;
inline constexpr int kDefaultTzOffsetS = 8 * 3600;

struct WorldConfig {
  double extent_km = 8.0;
  geo::LatLon origin = {1.30, 103.80};  // south-west corner
  int n_homes = 200;
  int n_schools = 10;
  int n_bus_lines = 4;        // horizontal, evenly spaced
  double bus_stop_spacing_m = 500;
  int n_metro_lines = 2;      // one horizontal + one vertical
  double metro_stop_spacing_m = 1000;
  double road_spacing_m = 1000;  // minor street grid (cars)
  double ap_density_per_km2 = 300;
  std::uint64_t seed = 1;

  // Nominal speeds, m/s.
  double walk_speed = 1.4;
  double bus_speed = 7.5;
  double metro_speed = 16.0;
  double car_speed = 13.0;
  double bus_dwell_s = 20;
};

struct SyntheticWorld {
  WorldConfig config;
  transit::TransitNetwork network;  // bus + metro + car edges
  std::vector<geo::LatLon> homes;
  std::vector<geo::LatLon> schools;
  std::vector<std::pair<std::string, geo::LatLon>> aps;  // mac, position
  ApLocationTable ap_table() const;
};

SyntheticWorld generate_world(const WorldConfig& config);
void save_world(std::ostream& out, const SyntheticWorld& world);
SyntheticWorld load_world(std::istream& in);

struct Journey {
  int day = 0;                 // day index from kBaseEpoch
  std::int64_t depart_local_s = 0;  // seconds into the local day
  bool to_school = true;       // otherwise school -> home
  Mode mode = Mode::NonVehicle;
};

struct AgentSchedule {
  std::string agent_id;
  int home = 0;    // index into world.homes
  int school = 0;  // index into world.schools
  std::vector<Journey> journeys;
  int n_days = 7;  // simulated horizon from kBaseEpoch
  std::int64_t scan_cadence_s = 15;
};

struct ScheduleConfig {
  int n_agents = 100;
  int n_days = 7;
  std::uint64_t seed = 7;
  // Scripted distance-dependent mode probabilities
  // (walk, bus, metro, car) per home-school distance band.
  // Bands: < 1.5 km, 1.5-4 km, 4-8 km, >= 8 km.
  double mode_probs[4][4] = {{0.85, 0.15, 0.00, 0.00},
                             {0.10, 0.55, 0.20, 0.15},
                             {0.02, 0.38, 0.45, 0.15},
                             {0.00, 0.25, 0.60, 0.15}};
};

std::vector<AgentSchedule> generate_schedules(const SyntheticWorld& world,
                                              const ScheduleConfig& cfg);

struct TruthSample {
  std::int64_t ts = 0;
  geo::LatLon pos;
  Mode mode = Mode::NonVehicle;
  int poi_id = -1;  // 0 = home, 1 = school, -1 = traveling
};

struct TruthStay {
  int poi_id = 0;  // 0 = home, 1 = school
  std::int64_t start_ts = 0;
  std::int64_t end_ts = 0;
};

struct AgentTruth {
  geo::LatLon home;
  geo::LatLon school;
  std::vector<TruthSample> samples;
  std::vector<TruthStay> stays;
  int journey_count = 0;
  std::vector<Mode> journey_modes;
};

struct SimResult {
  std::vector<RawScanRecord> scans;  // merged by (ts, agent id)
  std::map<std::string, AgentTruth> truth;
};

// Noise is an Ornstein-Uhlenbeck drift on the sensed position (slowly
// wandering multipath-style error), entering through AP selection and RSSI.
SimResult simulate_agents(const SyntheticWorld& world,
                          const std::vector<AgentSchedule>& schedules,
                          double noise_sigma_m, double noise_tau_s = 1800);

// Sidecar CSV: agent,ts,true_lat,true_lon,true_mode,poi_id
void write_truth_csv(std::ostream& out,
                     const std::map<std::string, AgentTruth>& truth);

// ---- Building-wide probe scenario ----

struct ProbeScenarioConfig {
  int n_buildings = 7;  // chain A-B-C-...
  double building_spacing_m = 150;
  geo::LatLon origin = {1.2929, 103.8520};
  int n_commuters_morning = 300;
  int n_commuters_evening = 300;
  double downward_frac_morning = 0.8;  // from the A end toward the far end
  double downward_frac_evening = 0.2;
  int n_building_c_visitors = 200;
  double pass_through_frac = 0.6;  // enter C1, exit C2, short stay
  std::int64_t short_stay_s = 240;
  std::int64_t long_stay_s = 3600;
  std::uint64_t seed = 17;
  std::string mac_salt = "urbanflow";
  std::int64_t sample_step_s = 5;
  double gateway_range_m = 50;
};

struct ProbeWorld {
  probe_flow::SiteTopology topology;
  std::map<std::string, geo::LatLon> gateway_pos;  // gateway id -> position
};

ProbeWorld generate_probe_world(const ProbeScenarioConfig& cfg);

struct ProbeTruth {
  // Scripted directed building transitions with their transition times.
  std::vector<std::tuple<std::string, std::string, std::int64_t>> transitions;
  std::int64_t pass_through = 0;  // building-C visitors by script
  std::int64_t dwellers = 0;
};

struct ProbeSimResult {
  std::vector<ProbeRecord> records;
  ProbeTruth truth;
};

// Pedestrians walk the overpass chain; a record is emitted per contiguous
// span within gateway range. MACs are salted-hashed.
ProbeSimResult simulate_pedestrians(const ProbeWorld& world,
                                    const ProbeScenarioConfig& cfg);

}  // namespace urbanflow::simgen
