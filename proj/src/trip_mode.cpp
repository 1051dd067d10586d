#include "urbanflow/trip_mode.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include "urbanflow/csv.hpp"
#include "urbanflow/rng.hpp"

namespace urbanflow::trip_mode {

using nlohmann::json;

std::vector<Trip> segment_trips(const std::vector<LocationPoint>& trace,
                                const std::vector<StayPoint>& stays,
                                const std::vector<int>& stay_to_poi) {
  std::vector<Trip> trips;
  for (std::size_t s = 0; s + 1 < stays.size(); ++s) {
    Trip trip;
    trip.origin_poi = stay_to_poi[s];
    trip.dest_poi = stay_to_poi[s + 1];
    for (const auto& p : trace)
      if (p.timestamp > stays[s].end_ts &&
          p.timestamp < stays[s + 1].start_ts)
        trip.points.push_back(p);
    if (trip.points.empty()) continue;
    trip.device_id = trip.points.front().device_id;
    trips.push_back(std::move(trip));
  }
  return trips;
}

std::vector<PointFeatures> compute_point_features(const Trip& trip,
                                                  int window) {
  if (window < 1 || window % 2 == 0)
    throw ConfigError("point-feature window must be odd and >= 1");
  const int n = static_cast<int>(trip.points.size());
  const int half = window / 2;
  std::vector<PointFeatures> out(n);
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double s = 0, a = 0;
    for (int j = lo; j <= hi; ++j) {
      s += trip.points[j].speed_mps;
      a += trip.points[j].accel_mps2;
    }
    out[i].speed = s / (hi - lo + 1);
    out[i].accel = a / (hi - lo + 1);
  }
  return out;
}

NetworkIndex NetworkIndex::build(const transit::TransitNetwork& net) {
  NetworkIndex idx;
  // Stops derived from edge endpoints: interchange nodes serve both modes
  // regardless of the kind label they were created with.
  std::set<int> bus_nodes, metro_nodes;
  for (const auto& e : net.edges) {
    if (e.mode == transit::LegMode::Bus) {
      bus_nodes.insert(e.from);
      bus_nodes.insert(e.to);
    } else if (e.mode == transit::LegMode::Metro) {
      metro_nodes.insert(e.from);
      metro_nodes.insert(e.to);
      idx.metro_lines.push_back(e.geometry);
    }
  }
  for (int i : bus_nodes) idx.bus_stops.push_back(net.nodes[i].pos);
  for (int i : metro_nodes) idx.metro_stations.push_back(net.nodes[i].pos);
  return idx;
}

namespace {

double nearest_rank_percentile(std::vector<double> v, double pct) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(pct / 100.0 * v.size()));
  return v[std::min(v.size() - 1, std::max<std::size_t>(1, rank) - 1)];
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0;
  return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0;
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / v.size());
}

double nearest_dist(const geo::LatLon& p,
                    const std::vector<geo::LatLon>& sites) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : sites) best = std::min(best, geo::haversine_m(p, s));
  return std::isfinite(best) ? best : 1e9;
}

}  // namespace

std::vector<double> compute_segment_features(const Trip& trip, int first,
                                             int last,
                                             const NetworkIndex& index,
                                             double wait_speed_threshold) {
  const auto& pts = trip.points;
  std::vector<double> speeds, accels;
  for (int i = first; i <= last; ++i) {
    speeds.push_back(pts[i].speed_mps);
    accels.push_back(std::fabs(pts[i].accel_mps2));
  }

  // Waiting time: maximal low-speed run immediately before the segment.
  double waiting = 0;
  {
    int i = first - 1;
    while (i >= 0 && pts[i].speed_mps < wait_speed_threshold) --i;
    if (i + 1 < first)
      waiting = static_cast<double>(pts[first - 1].timestamp -
                                    pts[i + 1].timestamp);
  }

  double length = 0;
  for (int i = first; i < last; ++i)
    length += geo::haversine_m(pts[i].pos(), pts[i + 1].pos());
  const double duration =
      static_cast<double>(pts[last].timestamp - pts[first].timestamp);

  double heading_change = 0;
  double prev_bearing = -1;
  for (int i = first; i < last; ++i) {
    if (geo::haversine_m(pts[i].pos(), pts[i + 1].pos()) < 1.0) continue;
    const double b = geo::bearing_deg(pts[i].pos(), pts[i + 1].pos());
    if (prev_bearing >= 0) {
      double d = std::fabs(b - prev_bearing);
      if (d > 180) d = 360 - d;
      heading_change += d;
    }
    prev_bearing = b;
  }

  int low_speed = 0, near_metro = 0;
  for (int i = first; i <= last; ++i) {
    if (pts[i].speed_mps < kLowSpeedMps) ++low_speed;
    for (const auto& line : index.metro_lines)
      if (geo::point_polyline_dist_m(pts[i].pos(), line) <=
          kMetroProximityM) {
        ++near_metro;
        break;
      }
  }
  const int n = last - first + 1;

  std::vector<double> f(kSegmentFeatureCount, 0.0);
  f[0] = nearest_rank_percentile(speeds, 85);
  f[1] = mean(speeds);
  f[2] = waiting;
  f[3] = nearest_rank_percentile(speeds, 50);
  f[4] = *std::max_element(speeds.begin(), speeds.end());
  f[5] = stddev(speeds);
  f[6] = mean(accels);
  f[7] = nearest_rank_percentile(accels, 85);
  f[8] = stddev(accels);
  f[9] = length;
  f[10] = duration;
  f[11] = duration > 0 ? heading_change / duration : 0;
  f[12] = static_cast<double>(low_speed) / n;
  f[13] = nearest_dist(pts[first].pos(), index.bus_stops);
  f[14] = nearest_dist(pts[first].pos(), index.metro_stations);
  f[15] = static_cast<double>(near_metro) / n;
  return f;
}

namespace {

double trip_length_m(const Trip& trip) {
  double len = 0;
  // Stride over ~60 s spans: summing every raw fix inflates the length badly
  // under localization jitter, especially on slow legs.
  std::size_t anchor = 0;
  for (std::size_t i = 1; i < trip.points.size(); ++i) {
    const bool last = i + 1 == trip.points.size();
    if (last ||
        trip.points[i].timestamp - trip.points[anchor].timestamp >= 60) {
      len += geo::haversine_m(trip.points[anchor].pos(), trip.points[i].pos());
      anchor = i;
    }
  }
  return len;
}

double candidate_score(const Trip& trip, const transit::RouteCandidate& c,
                       const LabelConfig& cfg) {
  double geom = 0;
  for (const auto& p : trip.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& leg : c.legs)
      best = std::min(best, geo::point_polyline_dist_m(p.pos(), leg.polyline));
    geom += best;
  }
  geom /= trip.points.size();

  const double tlen = trip_length_m(trip);
  const double tdur = static_cast<double>(trip.points.back().timestamp -
                                          trip.points.front().timestamp);
  const double dlen =
      c.total_length_m > 0 ? std::fabs(tlen - c.total_length_m) /
                                 c.total_length_m
                           : 0;
  const double ddur =
      c.total_duration_s > 0 ? std::fabs(tdur - c.total_duration_s) /
                                   c.total_duration_s
                             : 0;
  return cfg.w_g * geom + cfg.w_d * dlen + cfg.w_t * ddur;
}

}  // namespace

LabelResult auto_label_trip(const Trip& trip,
                            const std::vector<transit::RouteCandidate>& cands,
                            const LabelConfig& cfg) {
  LabelResult res;
  if (cands.empty() || trip.points.empty()) return res;
  std::vector<double> scores;
  for (const auto& c : cands) scores.push_back(candidate_score(trip, c, cfg));
  const auto best_it = std::min_element(scores.begin(), scores.end());
  const int best = static_cast<int>(best_it - scores.begin());
  res.best_score = *best_it;
  res.runner_up_score = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(scores.size()); ++i)
    if (i != best) res.runner_up_score = std::min(res.runner_up_score, scores[i]);
  if (res.best_score >= cfg.accept_score) return res;
  if (scores.size() > 1 &&
      res.runner_up_score - res.best_score < cfg.min_margin)
    return res;

  res.accepted = true;
  res.candidate = best;
  const auto& legs = cands[best].legs;
  // Assign points to legs with a monotone (in-order) alignment rather than
  // independent nearest-leg picks: localization bias makes per-point nearest
  // legs flip-flop near junctions and shared corridors. Cost is geometric
  // distance plus a time-consistency term that nudges each point toward the
  // leg whose expected time window (leg durations rescaled to the observed
  // trip duration) contains it; this disambiguates overlapping geometry such
  // as a boarding wait at a stop or a walk leg collinear with the ride.
  const std::size_t n = trip.points.size();
  const std::size_t L = legs.size();
  std::vector<double> cum(L + 1, 0.0);
  for (std::size_t l = 0; l < L; ++l)
    cum[l + 1] = cum[l] + std::max(1.0, legs[l].expected_duration_s);
  const double span = static_cast<double>(trip.points.back().timestamp -
                                          trip.points.front().timestamp);
  const double scale = span > 0 ? span / cum[L] : 0.0;
  constexpr double kTimeWeightMPerS = 0.5;
  std::vector<std::vector<double>> cost(n, std::vector<double>(L));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = trip.points[i];
    const double rel =
        static_cast<double>(p.timestamp - trip.points.front().timestamp);
    for (std::size_t l = 0; l < L; ++l) {
      double c = geo::point_polyline_dist_m(p.pos(), legs[l].polyline);
      const double lo = cum[l] * scale, hi = cum[l + 1] * scale;
      if (rel < lo) c += (lo - rel) * kTimeWeightMPerS;
      if (rel > hi) c += (rel - hi) * kTimeWeightMPerS;
      cost[i][l] = c;
    }
  }
  // dp[i][l] = best total cost with point i on leg l, leg index non-decreasing.
  std::vector<std::vector<double>> dp = cost;
  std::vector<std::vector<int>> from(n, std::vector<int>(L, 0));
  for (std::size_t i = 1; i < n; ++i) {
    double run = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (std::size_t l = 0; l < L; ++l) {
      if (dp[i - 1][l] < run) {
        run = dp[i - 1][l];
        arg = static_cast<int>(l);
      }
      dp[i][l] = cost[i][l] + run;
      from[i][l] = arg;
    }
  }
  std::vector<int> assign(n, 0);
  assign[n - 1] = static_cast<int>(
      std::min_element(dp[n - 1].begin(), dp[n - 1].end()) -
      dp[n - 1].begin());
  for (std::size_t i = n - 1; i > 0; --i)
    assign[i - 1] = from[i][assign[i]];

  res.point_modes.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    res.point_modes.push_back(transit::leg_to_mode(legs[assign[i]].mode));
  return res;
}

void write_corpus_csv(std::ostream& out,
                      const std::vector<LabeledTrip>& corpus) {
  out << "device,trip_id,ts,lat,lon,speed,accel,label\n";
  for (const auto& lt : corpus)
    for (std::size_t i = 0; i < lt.trip.points.size(); ++i) {
      const auto& p = lt.trip.points[i];
      out << lt.trip.device_id << ',' << lt.trip_id << ',' << p.timestamp
          << ',' << csv::fmt(p.lat) << ',' << csv::fmt(p.lon) << ','
          << csv::fmt(p.speed_mps) << ',' << csv::fmt(p.accel_mps2) << ','
          << mode_name(lt.point_modes[i]) << '\n';
    }
}

std::vector<LabeledTrip> read_corpus_csv(std::istream& in) {
  std::map<std::pair<std::string, int>, LabeledTrip> grouped;
  csv::Reader reader(in, true);
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() != 8) throw IngestError("corpus CSV row needs 8 fields");
    const std::pair<std::string, int> key{row[0], std::stoi(row[1])};
    auto& lt = grouped[key];
    lt.trip.device_id = row[0];
    lt.trip_id = key.second;
    LocationPoint p;
    p.device_id = row[0];
    p.timestamp = std::stoll(row[2]);
    p.lat = std::stod(row[3]);
    p.lon = std::stod(row[4]);
    p.speed_mps = std::stod(row[5]);
    p.accel_mps2 = std::stod(row[6]);
    lt.trip.points.push_back(std::move(p));
    lt.point_modes.push_back(parse_mode(row[7]));
  }
  std::vector<LabeledTrip> corpus;
  corpus.reserve(grouped.size());
  for (auto& [key, lt] : grouped) corpus.push_back(std::move(lt));
  return corpus;
}

int vehicle_class(Mode m) {
  switch (m) {
    case Mode::Bus: return 0;
    case Mode::Metro: return 1;
    case Mode::Car: return 2;
    default: throw ConfigError("not a vehicle mode");
  }
}

Mode vehicle_mode(int cls) {
  switch (cls) {
    case 0: return Mode::Bus;
    case 1: return Mode::Metro;
    case 2: return Mode::Car;
    default: throw ConfigError("bad vehicle class id");
  }
}

void ModeClassifier::save(std::ostream& out) const {
  json j = {{"format", "urbanflow-mode-classifier"},
            {"version", 1},
            {"seed", seed},
            {"n_rounds", n_rounds},
            {"n_trees", n_trees},
            {"window", window},
            {"stage1", stage1.to_json()},
            {"stage2", stage2.to_json()}};
  out << j.dump() << '\n';
}

ModeClassifier ModeClassifier::load(std::istream& in) {
  json j;
  in >> j;
  if (j.value("format", "") != "urbanflow-mode-classifier")
    throw ConfigError("not a mode-classifier model file");
  ModeClassifier clf;
  clf.seed = j.at("seed").get<std::uint64_t>();
  clf.n_rounds = j.at("n_rounds").get<int>();
  clf.n_trees = j.at("n_trees").get<int>();
  clf.window = j.at("window").get<int>();
  clf.stage1 = ml::AdaBoostStumps::from_json(j.at("stage1"));
  clf.stage2 = ml::RandomForest::from_json(j.at("stage2"));
  return clf;
}

namespace {

bool is_vehicle(Mode m) { return m != Mode::NonVehicle; }

// Deterministic device-level holdout split.
bool is_holdout_device(const std::string& device, double frac,
                       std::uint64_t seed) {
  return (rng::fnv1a(device, seed) % 1000) < frac * 1000;
}

struct Stage2Sample {
  std::vector<double> features;
  int cls;
};

void collect_samples(const std::vector<LabeledTrip>& corpus,
                     const NetworkIndex& index, const TrainConfig& cfg,
                     bool holdout, ml::Matrix& x1, std::vector<int>& y1,
                     ml::Matrix& x2, std::vector<int>& y2) {
  for (const auto& lt : corpus) {
    if (is_holdout_device(lt.trip.device_id, cfg.holdout_frac, cfg.seed) !=
        holdout)
      continue;
    const auto pf = compute_point_features(lt.trip, cfg.window);
    for (std::size_t i = 0; i < pf.size(); ++i) {
      x1.push_back({pf[i].speed, pf[i].accel});
      y1.push_back(is_vehicle(lt.point_modes[i]) ? 1 : 0);
    }
    // Ground-truth vehicle segments: maximal same-mode vehicle runs.
    std::size_t i = 0;
    while (i < lt.point_modes.size()) {
      if (!is_vehicle(lt.point_modes[i])) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j + 1 < lt.point_modes.size() &&
             lt.point_modes[j + 1] == lt.point_modes[i])
        ++j;
      x2.push_back(compute_segment_features(lt.trip, static_cast<int>(i),
                                            static_cast<int>(j), index,
                                            cfg.wait_speed_threshold));
      y2.push_back(vehicle_class(lt.point_modes[i]));
      i = j + 1;
    }
  }
}

}  // namespace

ModeClassifier train_classifiers(const std::vector<LabeledTrip>& corpus,
                                 const NetworkIndex& index,
                                 const TrainConfig& cfg, TrainReport* report) {
  ml::Matrix x1, x2, hx1, hx2;
  std::vector<int> y1, y2, hy1, hy2;
  collect_samples(corpus, index, cfg, false, x1, y1, x2, y2);
  collect_samples(corpus, index, cfg, true, hx1, hy1, hx2, hy2);
  if (x1.empty() || x2.empty())
    throw TrainingError("training corpus has no usable samples");

  ModeClassifier clf;
  clf.seed = cfg.seed;
  clf.n_rounds = cfg.boost_rounds;
  clf.n_trees = cfg.n_trees;
  clf.window = cfg.window;
  clf.stage1.train(x1, y1, cfg.boost_rounds);
  ml::RandomForest::Params fp;
  fp.n_trees = cfg.n_trees;
  fp.max_depth = cfg.max_depth;
  fp.seed = cfg.seed;
  clf.stage2.train(x2, y2, kVehicleClassCount, fp);

  if (report) {
    report->stage1_samples = x1.size();
    report->stage2_samples = x2.size();
    std::size_t ok = 0;
    for (std::size_t i = 0; i < hx1.size(); ++i)
      if (clf.stage1.predict(hx1[i]) == hy1[i]) ++ok;
    report->stage1_holdout_accuracy =
        hx1.empty() ? 0 : static_cast<double>(ok) / hx1.size();
    ok = 0;
    for (std::size_t i = 0; i < hx2.size(); ++i)
      if (clf.stage2.predict(hx2[i]) == hy2[i]) ++ok;
    report->stage2_holdout_accuracy =
        hx2.empty() ? 0 : static_cast<double>(ok) / hx2.size();
  }
  return clf;
}

std::vector<Mode> predict_modes(
    const ModeClassifier& clf, Trip& trip, const NetworkIndex& index,
    const PredictConfig& cfg,
    const std::vector<std::pair<std::int64_t, std::int64_t>>&
        poi_stay_intervals) {
  if (!clf.trained()) throw StateError("mode classifier not trained");
  const int n = static_cast<int>(trip.points.size());
  std::vector<Mode> modes(n, Mode::NonVehicle);
  if (n == 0) return modes;

  auto in_poi = [&](std::int64_t ts) {
    for (const auto& [a, b] : poi_stay_intervals)
      if (ts >= a && ts <= b) return true;
    return false;
  };

  const auto pf = compute_point_features(trip, cfg.window);
  std::vector<bool> vehicle(n, false);
  for (int i = 0; i < n; ++i) {
    if (in_poi(trip.points[i].timestamp)) continue;  // non-vehicle by fiat
    vehicle[i] = clf.stage1.predict({pf[i].speed, pf[i].accel}) == 1;
  }

  // Smooth: vehicle runs shorter than the minimum duration flip back.
  int i = 0;
  while (i < n) {
    if (!vehicle[i]) {
      ++i;
      continue;
    }
    int j = i;
    while (j + 1 < n && vehicle[j + 1]) ++j;
    const std::int64_t span =
        trip.points[j].timestamp - trip.points[i].timestamp;
    if (span < cfg.min_vehicle_run_s)
      for (int k = i; k <= j; ++k) vehicle[k] = false;
    i = j + 1;
  }

  trip.segments.clear();
  i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && vehicle[j + 1] == vehicle[i]) ++j;
    Segment seg;
    seg.first = i;
    seg.last = j;
    if (vehicle[i]) {
      seg.features = compute_segment_features(trip, i, j, index,
                                              cfg.wait_speed_threshold);
      seg.mode = vehicle_mode(clf.stage2.predict(seg.features));
      for (int k = i; k <= j; ++k) modes[k] = seg.mode;
    } else {
      seg.mode = Mode::NonVehicle;
    }
    trip.segments.push_back(std::move(seg));
    i = j + 1;
  }
  return modes;
}

}  // namespace urbanflow::trip_mode
