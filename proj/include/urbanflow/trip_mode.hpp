#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "urbanflow/ml.hpp"
#include "urbanflow/transit.hpp"
#include "urbanflow/types.hpp"

namespace urbanflow::trip_mode {

// One trip per consecutive pair of stays (each stay belongs to a PoI);
// points strictly between the first stay's end and the next stay's start.
// stay_to_poi maps stay index -> poi id.
std::vector<Trip> segment_trips(const std::vector<LocationPoint>& trace,
                                const std::vector<StayPoint>& stays,
                                const std::vector<int>& stay_to_poi);

struct PointFeatures {
  double speed = 0;
  double accel = 0;
};

// Centered moving average of speed and acceleration, window truncated at the
// trip edges. window must be odd and >= 1.
std::vector<PointFeatures> compute_point_features(const Trip& trip,
                                                  int window);

// Flattened geometry lookups so segment features don't rescan the network.
struct NetworkIndex {
  std::vector<geo::LatLon> bus_stops;
  std::vector<geo::LatLon> metro_stations;
  std::vector<std::vector<geo::LatLon>> metro_lines;

  static NetworkIndex build(const transit::TransitNetwork& net);
};

inline constexpr int kSegmentFeatureCount = 16;
inline constexpr double kLowSpeedMps = 0.5;
inline constexpr double kMetroProximityM = 50.0;

// 16 features over trip.points[first..last] (inclusive):
//  0 p85 speed (nearest-rank)   8 accel std
//  1 mean speed                 9 segment length m
//  2 pre-segment waiting time s 10 segment duration s
//  3 median speed               11 heading-change rate deg/s
//  4 max speed                  12 low-speed point fraction
//  5 speed std                  13 distance to nearest bus stop m
//  6 mean |accel|               14 distance to nearest metro station m
//  7 p85 |accel|                15 fraction of points near metro geometry
std::vector<double> compute_segment_features(const Trip& trip, int first,
                                             int last,
                                             const NetworkIndex& index,
                                             double wait_speed_threshold = 1.0);

struct LabelConfig {
  double w_g = 1.0 / 100.0;  // per meter of mean geometric distance
  double w_d = 1.0;
  double w_t = 1.0;
  double accept_score = 1.0;
  double min_margin = 0.2;
};

struct LabelResult {
  bool accepted = false;
  int candidate = -1;
  double best_score = 0;
  double runner_up_score = 0;
  std::vector<Mode> point_modes;  // one per trip point, when accepted
};

LabelResult auto_label_trip(const Trip& trip,
                            const std::vector<transit::RouteCandidate>& cands,
                            const LabelConfig& cfg = {});

struct LabeledTrip {
  Trip trip;
  std::vector<Mode> point_modes;
  int trip_id = 0;
};

// Labeled-corpus CSV: device,trip_id,ts,lat,lon,speed,accel,label
void write_corpus_csv(std::ostream& out,
                      const std::vector<LabeledTrip>& corpus);
std::vector<LabeledTrip> read_corpus_csv(std::istream& in);

struct TrainConfig {
  std::uint64_t seed = 1;
  int boost_rounds = 50;
  int n_trees = 100;
  int max_depth = 8;
  int window = 5;  // moving-average window for point features
  double holdout_frac = 0.2;
  double wait_speed_threshold = 1.0;
};

struct TrainReport {
  double stage1_holdout_accuracy = 0;
  double stage2_holdout_accuracy = 0;
  std::size_t stage1_samples = 0;
  std::size_t stage2_samples = 0;
};

class ModeClassifier {
 public:
  ml::AdaBoostStumps stage1;  // vehicle vs non-vehicle, point features
  ml::RandomForest stage2;    // bus / metro / car, segment features
  std::uint64_t seed = 0;
  int n_rounds = 0;
  int n_trees = 0;
  int window = 5;

  bool trained() const { return stage1.trained() && stage2.trained(); }
  void save(std::ostream& out) const;
  static ModeClassifier load(std::istream& in);
};

// Stage-2 class ids.
inline constexpr int kVehicleClassCount = 3;
int vehicle_class(Mode m);       // bus=0, metro=1, car=2
Mode vehicle_mode(int cls);

ModeClassifier train_classifiers(const std::vector<LabeledTrip>& corpus,
                                 const NetworkIndex& index,
                                 const TrainConfig& cfg,
                                 TrainReport* report = nullptr);

struct PredictConfig {
  int window = 5;
  std::int64_t min_vehicle_run_s = 60;
  double wait_speed_threshold = 1.0;
};

// Hierarchical prediction; fills trip.segments as a side effect. Points whose
// timestamps fall inside poi_stay_intervals are non-vehicle by fiat.
std::vector<Mode> predict_modes(
    const ModeClassifier& clf, Trip& trip, const NetworkIndex& index,
    const PredictConfig& cfg = {},
    const std::vector<std::pair<std::int64_t, std::int64_t>>&
        poi_stay_intervals = {});

}  // namespace urbanflow::trip_mode
