#include "urbanflow/stay_poi.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "urbanflow/csv.hpp"

namespace urbanflow::stay_poi {

namespace {

StayPoint make_stay(const std::vector<LocationPoint>& trace, std::size_t lo,
                    std::size_t hi) {
  StayPoint s;
  s.device_id = trace[lo].device_id;
  s.start_ts = trace[lo].timestamp;
  s.end_ts = trace[hi].timestamp;
  s.n_points = static_cast<int>(hi - lo + 1);
  double lat = 0, lon = 0;
  for (std::size_t i = lo; i <= hi; ++i) {
    lat += trace[i].lat;
    lon += trace[i].lon;
  }
  s.lat = lat / s.n_points;
  s.lon = lon / s.n_points;
  return s;
}

}  // namespace

std::vector<StayPoint> detect_stays(const std::vector<LocationPoint>& trace,
                                    double speed_threshold,
                                    std::int64_t min_duration) {
  if (speed_threshold <= 0 || min_duration <= 0)
    throw ConfigError("detect_stays thresholds must be positive");
  std::vector<StayPoint> stays;
  std::size_t i = 0;
  while (i < trace.size()) {
    if (trace[i].speed_mps >= speed_threshold) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < trace.size() &&
           trace[j + 1].speed_mps < speed_threshold)
      ++j;
    if (j > i && trace[j].timestamp - trace[i].timestamp >= min_duration)
      stays.push_back(make_stay(trace, i, j));
    i = j + 1;
  }
  return stays;
}

std::vector<StayPoint> merge_stays(const std::vector<StayPoint>& stays,
                                   std::int64_t max_gap, double max_dist) {
  std::vector<StayPoint> out;
  for (const auto& s : stays) {
    if (!out.empty()) {
      StayPoint& prev = out.back();
      if (s.start_ts - prev.end_ts <= max_gap &&
          geo::haversine_m(prev.pos(), s.pos()) <= max_dist) {
        const double wa =
            static_cast<double>(prev.end_ts - prev.start_ts) + 1.0;
        const double wb = static_cast<double>(s.end_ts - s.start_ts) + 1.0;
        prev.lat = (prev.lat * wa + s.lat * wb) / (wa + wb);
        prev.lon = (prev.lon * wa + s.lon * wb) / (wa + wb);
        prev.end_ts = s.end_ts;
        prev.n_points += s.n_points;
        continue;
      }
    }
    out.push_back(s);
  }
  return out;
}

namespace {

// Grid index over a local planar projection; cell size = eps.
class StayGrid {
 public:
  StayGrid(const std::vector<StayPoint>& stays, double eps_m)
      : stays_(stays), eps_(eps_m), frame_({0, 0}) {
    if (stays.empty()) return;
    frame_ = geo::LocalFrame(stays.front().pos());
    xy_.resize(stays.size());
    for (std::size_t i = 0; i < stays.size(); ++i) {
      frame_.to_xy(stays[i].pos(), xy_[i].first, xy_[i].second);
      cells_[key(xy_[i].first, xy_[i].second)].push_back(
          static_cast<int>(i));
    }
  }

  void neighbors(int idx, std::vector<int>& out) const {
    out.clear();
    const auto [x, y] = xy_[idx];
    const long cx = cell_of(x), cy = cell_of(y);
    for (long dx = -1; dx <= 1; ++dx)
      for (long dy = -1; dy <= 1; ++dy) {
        auto it = cells_.find(pack(cx + dx, cy + dy));
        if (it == cells_.end()) continue;
        for (int j : it->second)
          if (geo::haversine_m(stays_[idx].pos(), stays_[j].pos()) <= eps_)
            out.push_back(j);
      }
    std::sort(out.begin(), out.end());
  }

 private:
  // Cell width slightly over eps: the planar projection can stretch true
  // haversine distances by ~1% at city scale.
  long cell_of(double v) const {
    return static_cast<long>(std::floor(v / (eps_ * 1.05)));
  }
  static std::int64_t pack(long cx, long cy) {
    return (static_cast<std::int64_t>(cx) << 32) ^
           static_cast<std::uint32_t>(cy);
  }
  std::int64_t key(double x, double y) const {
    return pack(cell_of(x), cell_of(y));
  }

  const std::vector<StayPoint>& stays_;
  double eps_;
  geo::LocalFrame frame_;
  std::vector<std::pair<double, double>> xy_;
  std::unordered_map<std::int64_t, std::vector<int>> cells_;
};

}  // namespace

std::vector<int> dbscan(const std::vector<StayPoint>& stays,
                        const DbscanParams& params) {
  if (params.eps_m <= 0 || params.min_pts < 1)
    throw ConfigError("dbscan requires eps > 0 and min_pts >= 1");
  const int n = static_cast<int>(stays.size());
  std::vector<int> labels(n, -2);  // -2 unvisited, -1 noise
  if (n == 0) return labels;
  StayGrid grid(stays, params.eps_m);
  // Neighbor queries dominate; precompute them in parallel, then run the
  // expansion serially so labeling order (hence the partition) is fixed.
  std::vector<std::vector<int>> nbs(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) grid.neighbors(i, nbs[i]);
  int next_cluster = 0;
  for (int i = 0; i < n; ++i) {
    if (labels[i] != -2) continue;
    if (static_cast<int>(nbs[i].size()) < params.min_pts) {
      labels[i] = -1;
      continue;
    }
    const int c = next_cluster++;
    labels[i] = c;
    std::deque<int> queue(nbs[i].begin(), nbs[i].end());
    while (!queue.empty()) {
      const int j = queue.front();
      queue.pop_front();
      if (labels[j] == -1) labels[j] = c;  // border point
      if (labels[j] != -2) continue;
      labels[j] = c;
      if (static_cast<int>(nbs[j].size()) >= params.min_pts)
        queue.insert(queue.end(), nbs[j].begin(), nbs[j].end());
    }
  }
  return labels;
}

std::vector<Poi> cluster_pois(const std::vector<StayPoint>& stays,
                              const DbscanParams& params) {
  const std::vector<int> labels = dbscan(stays, params);
  std::vector<Poi> pois;
  std::unordered_map<int, int> cluster_to_poi;
  for (std::size_t i = 0; i < stays.size(); ++i) {
    int poi_idx;
    if (labels[i] < 0) {
      poi_idx = static_cast<int>(pois.size());
      pois.emplace_back();
    } else {
      auto it = cluster_to_poi.find(labels[i]);
      if (it == cluster_to_poi.end()) {
        poi_idx = static_cast<int>(pois.size());
        cluster_to_poi.emplace(labels[i], poi_idx);
        pois.emplace_back();
      } else {
        poi_idx = it->second;
      }
    }
    pois[poi_idx].member_stays.push_back(static_cast<int>(i));
  }
  for (std::size_t p = 0; p < pois.size(); ++p) {
    pois[p].poi_id = static_cast<int>(p);
    double lat = 0, lon = 0;
    for (int s : pois[p].member_stays) {
      lat += stays[s].lat;
      lon += stays[s].lon;
    }
    pois[p].lat = lat / pois[p].member_stays.size();
    pois[p].lon = lon / pois[p].member_stays.size();
  }
  return pois;
}

namespace {

constexpr std::int64_t kDayS = 86400;

std::int64_t local_day(std::int64_t ts, int tz) {
  std::int64_t t = ts + tz;
  return t >= 0 ? t / kDayS : (t - kDayS + 1) / kDayS;
}

// 0 = Sunday; epoch day 0 (1970-01-01) was a Thursday.
int day_of_week(std::int64_t day) {
  return static_cast<int>(((day + 4) % 7 + 7) % 7);
}

bool is_weekday(std::int64_t day) {
  const int d = day_of_week(day);
  return d >= 1 && d <= 5;
}

// Overlap in seconds of [a0,a1) with [b0,b1).
std::int64_t overlap(std::int64_t a0, std::int64_t a1, std::int64_t b0,
                     std::int64_t b1) {
  return std::max<std::int64_t>(0, std::min(a1, b1) - std::max(a0, b0));
}

}  // namespace

void identify_anchors(std::vector<Poi>& pois,
                      const std::vector<StayPoint>& stays,
                      const AnchorConfig& cfg) {
  for (auto& p : pois) p.category = PoiCategory::Other;
  if (stays.empty()) return;

  // Observed local days = days touched by any stay.
  std::int64_t first_day = local_day(stays.front().start_ts, cfg.tz_offset_s);
  std::int64_t last_day = first_day;
  for (const auto& s : stays) {
    first_day = std::min(first_day, local_day(s.start_ts, cfg.tz_offset_s));
    last_day = std::max(last_day, local_day(s.end_ts, cfg.tz_offset_s));
  }
  const int n_days = static_cast<int>(last_day - first_day + 1);
  std::vector<bool> observed(n_days, false);
  for (const auto& s : stays) {
    const std::int64_t d0 = local_day(s.start_ts, cfg.tz_offset_s);
    const std::int64_t d1 = local_day(s.end_ts, cfg.tz_offset_s);
    for (std::int64_t d = d0; d <= d1; ++d) observed[d - first_day] = true;
  }
  int n_observed = 0, n_observed_weekdays = 0;
  for (int i = 0; i < n_days; ++i) {
    if (!observed[i]) continue;
    ++n_observed;
    if (is_weekday(first_day + i)) ++n_observed_weekdays;
  }

  int best_home = -1, best_school = -1;
  double best_home_time = 0, best_school_time = 0;
  for (std::size_t pi = 0; pi < pois.size(); ++pi) {
    const auto& poi = pois[pi];
    double total_stay = 0;
    int home_days = 0, school_days = 0;
    for (int i = 0; i < n_days; ++i) {
      if (!observed[i]) continue;
      const std::int64_t day_start =
          (first_day + i) * kDayS - cfg.tz_offset_s;  // back to UTC epoch
      std::int64_t home_cov = 0, school_cov = 0;
      for (int si : poi.member_stays) {
        const auto& s = stays[si];
        home_cov += overlap(s.start_ts, s.end_ts, day_start + cfg.home_start_s,
                            day_start + cfg.home_end_s);
        school_cov +=
            overlap(s.start_ts, s.end_ts, day_start + cfg.school_start_s,
                    day_start + cfg.school_end_s);
      }
      const std::int64_t home_win = cfg.home_end_s - cfg.home_start_s;
      const std::int64_t school_win = cfg.school_end_s - cfg.school_start_s;
      if (home_cov >= cfg.home_coverage * home_win) ++home_days;
      if (is_weekday(first_day + i) &&
          school_cov >= cfg.school_overlap * school_win)
        ++school_days;
    }
    for (int si : poi.member_stays)
      total_stay += static_cast<double>(stays[si].end_ts - stays[si].start_ts);

    if (n_observed > 0 && home_days >= cfg.home_day_frac * n_observed) {
      if (best_home < 0 || total_stay > best_home_time) {
        best_home = static_cast<int>(pi);
        best_home_time = total_stay;
      }
    }
    if (n_observed_weekdays > 0 &&
        school_days >= cfg.school_day_frac * n_observed_weekdays) {
      if (best_school < 0 || total_stay > best_school_time) {
        best_school = static_cast<int>(pi);
        best_school_time = total_stay;
      }
    }
  }
  // A PoI cannot be both; home takes precedence (overnight presence is the
  // stronger signal), school falls to the next candidate if any.
  if (best_home >= 0) pois[best_home].category = PoiCategory::Home;
  if (best_school >= 0 && best_school != best_home)
    pois[best_school].category = PoiCategory::School;
}

void write_stays_csv(
    std::ostream& out,
    const std::map<std::string, std::vector<StayPoint>>& all) {
  out << "device,lat,lon,start_ts,end_ts,n_points\n";
  for (const auto& [dev, stays] : all)
    for (const auto& s : stays)
      out << dev << ',' << csv::fmt(s.lat) << ',' << csv::fmt(s.lon) << ','
          << s.start_ts << ',' << s.end_ts << ',' << s.n_points << '\n';
}

std::map<std::string, std::vector<StayPoint>> read_stays_csv(
    std::istream& in) {
  std::map<std::string, std::vector<StayPoint>> all;
  csv::Reader reader(in, true);
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() != 6) throw IngestError("stays CSV row needs 6 fields");
    StayPoint s;
    s.device_id = row[0];
    s.lat = std::stod(row[1]);
    s.lon = std::stod(row[2]);
    s.start_ts = std::stoll(row[3]);
    s.end_ts = std::stoll(row[4]);
    s.n_points = std::stoi(row[5]);
    all[s.device_id].push_back(std::move(s));
  }
  return all;
}

void write_pois_csv(std::ostream& out,
                    const std::map<std::string, std::vector<Poi>>& all) {
  out << "device,poi_id,lat,lon,category\n";
  for (const auto& [dev, pois] : all)
    for (const auto& p : pois)
      out << dev << ',' << p.poi_id << ',' << csv::fmt(p.lat) << ','
          << csv::fmt(p.lon) << ',' << poi_category_name(p.category) << '\n';
}

std::map<std::string, std::vector<Poi>> read_pois_csv(std::istream& in) {
  std::map<std::string, std::vector<Poi>> all;
  csv::Reader reader(in, true);
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() != 5) throw IngestError("PoI CSV row needs 5 fields");
    Poi p;
    p.poi_id = std::stoi(row[1]);
    p.lat = std::stod(row[2]);
    p.lon = std::stod(row[3]);
    p.category = row[4] == "home"     ? PoiCategory::Home
                 : row[4] == "school" ? PoiCategory::School
                                      : PoiCategory::Other;
    all[row[0]].push_back(std::move(p));
  }
  return all;
}

namespace ref {

std::vector<int> dbscan_naive(const std::vector<StayPoint>& stays,
                              const DbscanParams& params) {
  const int n = static_cast<int>(stays.size());
  std::vector<int> labels(n, -2);
  auto region = [&](int i) {
    std::vector<int> out;
    for (int j = 0; j < n; ++j)
      if (geo::haversine_m(stays[i].pos(), stays[j].pos()) <= params.eps_m)
        out.push_back(j);
    return out;
  };
  int next_cluster = 0;
  for (int i = 0; i < n; ++i) {
    if (labels[i] != -2) continue;
    auto nb = region(i);
    if (static_cast<int>(nb.size()) < params.min_pts) {
      labels[i] = -1;
      continue;
    }
    const int c = next_cluster++;
    labels[i] = c;
    std::deque<int> queue(nb.begin(), nb.end());
    while (!queue.empty()) {
      const int j = queue.front();
      queue.pop_front();
      if (labels[j] == -1) labels[j] = c;
      if (labels[j] != -2) continue;
      labels[j] = c;
      auto nb2 = region(j);
      if (static_cast<int>(nb2.size()) >= params.min_pts)
        queue.insert(queue.end(), nb2.begin(), nb2.end());
    }
  }
  return labels;
}

std::vector<StayPoint> detect_stays_scan(const std::vector<LocationPoint>& t,
                                         double speed_threshold,
                                         std::int64_t min_duration) {
  // Enumerate all candidate [i, j] windows, keep maximal qualifying runs.
  std::vector<StayPoint> stays;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].speed_mps >= speed_threshold) continue;
    if (i > 0 && t[i - 1].speed_mps < speed_threshold) continue;  // not start
    std::size_t j = i;
    while (j + 1 < t.size() && t[j + 1].speed_mps < speed_threshold) ++j;
    if (j > i && t[j].timestamp - t[i].timestamp >= min_duration)
      stays.push_back(make_stay(t, i, j));
  }
  return stays;
}

}  // namespace ref

}  // namespace urbanflow::stay_poi
