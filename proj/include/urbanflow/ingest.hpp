#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "urbanflow/types.hpp"

namespace urbanflow::ingest {

struct ParseResult {
  std::vector<RawScanRecord> records;
  std::size_t malformed_lines = 0;
};

// JSONL scan log, one record per line:
//   {"device":"...","ts":<int>,"aps":[{"mac":"aa:bb:cc:dd:ee:ff","rssi":-60}]}
// Malformed lines are counted, not fatal; >50% malformed raises
// CorruptInputError.
ParseResult parse_scan_log(std::istream& in);

std::string to_jsonl(const RawScanRecord& rec);
void write_scan_log(std::ostream& out, const std::vector<RawScanRecord>& recs);

// CSV `mac,lat,lon,uncertainty_m` with header.
ApLocationTable load_ap_table(std::istream& in);
void save_ap_table(std::ostream& out, const ApLocationTable& table);

struct ResolveResult {
  TraceSet traces;
  std::size_t dropped_unknown_ap = 0;
};

// RSSI-weighted centroid over the known APs of each record;
// weight = 1 / (1 + max(0, -30 - rssi)). Records with no known AP dropped.
ResolveResult resolve_locations(const std::vector<RawScanRecord>& records,
                                const ApLocationTable& table);

// Recompute speed (haversine / dt) and acceleration (dspeed / dt) in place.
// First point speed = 0; first two points acceleration = 0.
void recompute_kinematics(std::vector<LocationPoint>& trace);

struct FilterStats {
  std::size_t removed = 0;
};

inline constexpr double kDefaultMaxSpeedMps = 70.0;

std::vector<LocationPoint> filter_anomalies(
    const std::vector<LocationPoint>& trace,
    double max_speed = kDefaultMaxSpeedMps, FilterStats* stats = nullptr);
TraceSet filter_anomalies(const TraceSet& traces,
                          double max_speed = kDefaultMaxSpeedMps,
                          FilterStats* stats = nullptr);

inline constexpr std::int64_t kDefaultMaxGapS = 300;
inline constexpr std::int64_t kDefaultStepS = 15;

std::vector<LocationPoint> interpolate_gaps(
    const std::vector<LocationPoint>& trace,
    std::int64_t max_gap = kDefaultMaxGapS, std::int64_t step = kDefaultStepS);
TraceSet interpolate_gaps(const TraceSet& traces,
                          std::int64_t max_gap = kDefaultMaxGapS,
                          std::int64_t step = kDefaultStepS);

// Output points CSV: device,ts,lat,lon,speed_mps,accel_mps2,flag
void write_points_csv(std::ostream& out, const TraceSet& traces);
TraceSet read_points_csv(std::istream& in);

}  // namespace urbanflow::ingest
