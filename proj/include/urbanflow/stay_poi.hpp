#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "urbanflow/types.hpp"

namespace urbanflow::stay_poi {

inline constexpr double kDefaultSpeedThresholdMps = 1.0;
inline constexpr std::int64_t kDefaultMinStayS = 600;  // 10 minutes

// Maximal runs with every point's speed below the threshold and run duration
// >= min_duration become stay points; coordinates averaged over the run.
std::vector<StayPoint> detect_stays(const std::vector<LocationPoint>& trace,
                                    double speed_threshold =
                                        kDefaultSpeedThresholdMps,
                                    std::int64_t min_duration =
                                        kDefaultMinStayS);

inline constexpr std::int64_t kDefaultMergeGapS = 180;
inline constexpr double kDefaultMergeDistM = 200;

// Consolidate fragmented stays: consecutive stays closer than max_dist with a
// gap <= max_gap merge into one (duration-weighted centroid, summed points).
std::vector<StayPoint> merge_stays(const std::vector<StayPoint>& stays,
                                   std::int64_t max_gap = kDefaultMergeGapS,
                                   double max_dist = kDefaultMergeDistM);

struct DbscanParams {
  double eps_m = 300.0;
  int min_pts = 2;
};

// DBSCAN over haversine distance, grid-indexed. Returns one cluster label per
// stay; noise points get label -1.
std::vector<int> dbscan(const std::vector<StayPoint>& stays,
                        const DbscanParams& params);

// Noise stays become singleton PoIs so every stay belongs to exactly one PoI.
std::vector<Poi> cluster_pois(const std::vector<StayPoint>& stays,
                              const DbscanParams& params);

struct AnchorConfig {
  int tz_offset_s = 0;          // local = utc + offset
  int home_start_s = 0;         // 00:00
  int home_end_s = 5 * 3600;    // 05:00
  int school_start_s = 8 * 3600;
  int school_end_s = 14 * 3600;
  double home_coverage = 0.8;   // fraction of home window per day
  double home_day_frac = 0.5;   // fraction of observed days
  double school_overlap = 0.5;  // fraction of school window per weekday
  double school_day_frac = 0.5;
};

// Categorize PoIs as home/school by temporal coverage of their stays.
// At most one home and one school per device; ties broken by total stay time.
void identify_anchors(std::vector<Poi>& pois,
                      const std::vector<StayPoint>& stays,
                      const AnchorConfig& cfg);

// Stays CSV: device,lat,lon,start_ts,end_ts,n_points
void write_stays_csv(std::ostream& out,
                     const std::map<std::string, std::vector<StayPoint>>& all);
std::map<std::string, std::vector<StayPoint>> read_stays_csv(std::istream& in);

// PoIs CSV: device,poi_id,lat,lon,category
void write_pois_csv(std::ostream& out,
                    const std::map<std::string, std::vector<Poi>>& all);
std::map<std::string, std::vector<Poi>> read_pois_csv(std::istream& in);

namespace ref {

// Brute-force O(n^2) DBSCAN kept as the serial test reference.
std::vector<int> dbscan_naive(const std::vector<StayPoint>& stays,
                              const DbscanParams& params);

// Straightforward run scanner over the trace, serial.
std::vector<StayPoint> detect_stays_scan(const std::vector<LocationPoint>& t,
                                         double speed_threshold,
                                         std::int64_t min_duration);

}  // namespace ref

}  // namespace urbanflow::stay_poi
