#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "urbanflow/geo.hpp"

namespace urbanflow {

// Error categories mapped to CLI exit codes by the tool layer.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IngestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CorruptInputError : IngestError {
  using IngestError::IngestError;
};
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Mode : std::uint8_t { NonVehicle = 0, Bus = 1, Metro = 2, Car = 3 };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::NonVehicle: return "non_vehicle";
    case Mode::Bus: return "bus";
    case Mode::Metro: return "metro";
    case Mode::Car: return "car";
  }
  return "non_vehicle";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "non_vehicle" || s == "walk") return Mode::NonVehicle;
  if (s == "bus") return Mode::Bus;
  if (s == "metro") return Mode::Metro;
  if (s == "car") return Mode::Car;
  throw ConfigError("unknown mode: " + s);
}

struct ApObservation {
  std::string ap_mac;  // lowercase aa:bb:cc:dd:ee:ff
  int rssi = 0;        // dBm
};

struct RawScanRecord {
  std::string device_id;
  std::int64_t timestamp = 0;  // epoch seconds UTC
  std::vector<ApObservation> observations;
};

struct ApLocation {
  double lat = 0.0;
  double lon = 0.0;
  double horizontal_uncertainty_m = 0.0;
};

using ApLocationTable = std::map<std::string, ApLocation>;

enum class QualityFlag : std::uint8_t { Ok = 0, Interpolated = 1 };

struct LocationPoint {
  std::string device_id;
  std::int64_t timestamp = 0;
  double lat = 0.0;
  double lon = 0.0;
  double speed_mps = 0.0;
  double accel_mps2 = 0.0;
  QualityFlag flag = QualityFlag::Ok;

  geo::LatLon pos() const { return {lat, lon}; }
};

// Per-device traces, keyed by device id. Points time-ordered within a device.
using TraceSet = std::map<std::string, std::vector<LocationPoint>>;

struct StayPoint {
  std::string device_id;
  double lat = 0.0;
  double lon = 0.0;
  std::int64_t start_ts = 0;
  std::int64_t end_ts = 0;
  int n_points = 0;

  geo::LatLon pos() const { return {lat, lon}; }
};

enum class PoiCategory : std::uint8_t { Other = 0, Home = 1, School = 2 };

inline const char* poi_category_name(PoiCategory c) {
  switch (c) {
    case PoiCategory::Other: return "other";
    case PoiCategory::Home: return "home";
    case PoiCategory::School: return "school";
  }
  return "other";
}

struct Poi {
  int poi_id = -1;
  double lat = 0.0;
  double lon = 0.0;
  std::vector<int> member_stays;  // indices into the device's stay list
  PoiCategory category = PoiCategory::Other;

  geo::LatLon pos() const { return {lat, lon}; }
};

struct Segment {
  int first = 0;  // inclusive index into Trip::points
  int last = 0;   // inclusive
  Mode mode = Mode::NonVehicle;
  std::vector<double> features;  // 16-dim, see trip_mode
};

struct Trip {
  std::string device_id;
  int origin_poi = -1;
  int dest_poi = -1;
  std::vector<LocationPoint> points;
  std::vector<Segment> segments;
};

struct ProbeRecord {
  std::string mac_hash;
  std::string gateway_id;
  std::string building_id;
  std::string entrance_id;  // empty when unknown
  std::int64_t check_in_ts = 0;
  std::int64_t check_out_ts = 0;
  int rssi = 0;

  bool operator==(const ProbeRecord&) const = default;
};

}  // namespace urbanflow
