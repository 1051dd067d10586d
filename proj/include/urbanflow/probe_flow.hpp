#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "urbanflow/types.hpp"

namespace urbanflow::probe_flow {

struct Entrance {
  std::string building_id;
  std::string entrance_id;
  std::vector<std::string> gateways;
};

struct SiteTopology {
  std::map<std::string, std::string> buildings;  // id -> display name
  std::set<std::pair<std::string, std::string>> links;  // undirected, id<id
  std::vector<Entrance> entrances;

  bool linked(const std::string& a, const std::string& b) const {
    return links.count(a < b ? std::make_pair(a, b) : std::make_pair(b, a)) >
           0;
  }
};

SiteTopology load_topology(std::istream& in);
void save_topology(std::ostream& out, const SiteTopology& topo);

// Probe JSONL:
// {"mac_hash":"..","gw":"..","building":"..","entrance":"..|null",
//  "in":<ts>,"out":<ts>,"rssi":<int>}
std::vector<ProbeRecord> parse_probe_log(std::istream& in,
                                         std::size_t* malformed = nullptr);
void write_probe_log(std::ostream& out, const std::vector<ProbeRecord>& recs);

enum class DedupGranularity { Building, Entrance };

inline constexpr std::int64_t kDefaultMergeGapS = 60;

// Per (mac, building) [or (mac, building, entrance)]: overlapping intervals
// or gaps <= merge_gap merge into one record spanning min check-in to max
// check-out, max RSSI. Records with unknown buildings are rejected and
// counted. Output sorted by (mac, building[, entrance], check_in).
std::vector<ProbeRecord> dedup_records(
    const std::vector<ProbeRecord>& records, const SiteTopology& topo,
    std::int64_t merge_gap = kDefaultMergeGapS,
    DedupGranularity granularity = DedupGranularity::Building,
    std::size_t* rejected = nullptr);

// building -> bucket start ts -> unique device count. A device counts once
// per (building, bucket) when its interval intersects the bucket.
using DensitySeries =
    std::map<std::string, std::map<std::int64_t, std::int64_t>>;

DensitySeries density_series(const std::vector<ProbeRecord>& records,
                             std::int64_t granularity_s = 3600);

void write_density_csv(std::ostream& out, const DensitySeries& series);

enum class FlowNormalization { SystemWide, PerLink };

struct FlowMatrix {
  std::int64_t period_start = 0;
  std::int64_t period_end = 0;
  std::map<std::pair<std::string, std::string>, std::int64_t> counts;
  std::map<std::pair<std::string, std::string>, double> percentages;
  std::int64_t off_network = 0;  // transitions across unlinked pairs
  std::int64_t total = 0;
};

inline constexpr std::int64_t kDefaultTransitionGapS = 1800;

FlowMatrix flow_matrix(const std::vector<ProbeRecord>& records,
                       std::int64_t period_start, std::int64_t period_end,
                       const SiteTopology& topo,
                       std::int64_t max_transition_gap =
                           kDefaultTransitionGapS,
                       FlowNormalization norm = FlowNormalization::SystemWide);

void write_flow_csv(std::ostream& out, const FlowMatrix& m);

struct StayBreakdownKey {
  std::string entry_entrance;
  std::string exit_entrance;
  int hour = 0;  // local hour of the entry event

  bool operator<(const StayBreakdownKey& o) const {
    return std::tie(entry_entrance, exit_entrance, hour) <
           std::tie(o.entry_entrance, o.exit_entrance, o.hour);
  }
};

struct StayBuckets {
  std::int64_t short_stays = 0;  // <= threshold
  std::int64_t long_stays = 0;   // > threshold
};

struct EntranceStayBreakdown {
  std::map<StayBreakdownKey, StayBuckets> cells;
  std::int64_t unpaired = 0;
  std::int64_t entries = 0;
};

inline constexpr std::int64_t kDefaultStayThresholdS = 600;
inline constexpr std::int64_t kDefaultSessionTimeoutS = 4 * 3600;

// Records must be entrance-granularity deduplicated. Entry = first entrance
// sighting at a building; exit = the next entrance sighting of the same
// building within the session timeout. Stay = exit check-in - entry
// check-out.
EntranceStayBreakdown entrance_stay_breakdown(
    const std::vector<ProbeRecord>& records, const std::string& building_id,
    std::int64_t stay_threshold = kDefaultStayThresholdS,
    std::int64_t session_timeout = kDefaultSessionTimeoutS,
    int tz_offset_s = 0);

void write_stay_breakdown_csv(std::ostream& out,
                              const EntranceStayBreakdown& b);

namespace ref {

// Brute-force interval union, the serial test oracle for dedup_records.
std::vector<ProbeRecord> dedup_interval_union(
    const std::vector<ProbeRecord>& records, const SiteTopology& topo,
    std::int64_t merge_gap, DedupGranularity granularity);

}  // namespace ref

}  // namespace urbanflow::probe_flow
