#include <doctest.h>

#include <sstream>

#include "urbanflow/geo.hpp"
#include "urbanflow/transit.hpp"
#include "urbanflow/trip_mode.hpp"

using namespace urbanflow;

namespace {

const geo::LatLon kBase{1.30, 103.80};

LocationPoint pt(std::int64_t ts, const geo::LatLon& p, double speed,
                 const char* dev = "d0") {
  LocationPoint lp;
  lp.device_id = dev;
  lp.timestamp = ts;
  lp.lat = p.lat;
  lp.lon = p.lon;
  lp.speed_mps = speed;
  return lp;
}

StayPoint stay_at(const geo::LatLon& p, std::int64_t start, std::int64_t end) {
  StayPoint s;
  s.device_id = "d0";
  s.lat = p.lat;
  s.lon = p.lon;
  s.start_ts = start;
  s.end_ts = end;
  s.n_points = 5;
  return s;
}

transit::RouteLeg make_leg(transit::LegMode mode, const geo::LatLon& a,
                           const geo::LatLon& b, double speed,
                           double extra_s = 0) {
  transit::RouteLeg leg;
  leg.mode = mode;
  leg.polyline = {a, b};
  leg.length_m = geo::haversine_m(a, b);
  leg.expected_duration_s = leg.length_m / speed + extra_s;
  return leg;
}

// walk 100 m east, bus 1000 m east (boarding wait included), walk 100 m east.
transit::RouteCandidate wbw_candidate() {
  auto p0 = kBase;
  auto p1 = geo::offset_m(kBase, 100, 0);
  auto p2 = geo::offset_m(kBase, 1100, 0);
  auto p3 = geo::offset_m(kBase, 1200, 0);
  transit::RouteCandidate rc;
  rc.legs.push_back(make_leg(transit::LegMode::Walk, p0, p1, 1.4));
  rc.legs.push_back(
      make_leg(transit::LegMode::Bus, p1, p2, 7.5, transit::kBoardingWaitS));
  rc.legs.push_back(make_leg(transit::LegMode::Walk, p2, p3, 1.4));
  for (const auto& l : rc.legs) {
    rc.total_duration_s += l.expected_duration_s;
    rc.total_length_m += l.length_m;
  }
  return rc;
}

// Trace the candidate exactly: walk, wait at the stop, ride, walk.
Trip trace_wbw(double lateral_offset_m = 0) {
  Trip trip;
  trip.device_id = "d0";
  const double t_walk1 = 100 / 1.4;                 // ~71 s
  const double t_bus_start = t_walk1 + transit::kBoardingWaitS;
  const double t_bus_end = t_bus_start + 1000 / 7.5;
  const double t_end = t_bus_end + 100 / 1.4;
  for (double t = 0; t <= t_end; t += 10) {
    double x, v;
    if (t < t_walk1) {
      x = 1.4 * t;
      v = 1.4;
    } else if (t < t_bus_start) {
      x = 100;
      v = 0;
    } else if (t < t_bus_end) {
      x = 100 + 7.5 * (t - t_bus_start);
      v = 7.5;
    } else {
      x = 1100 + 1.4 * (t - t_bus_end);
      v = 1.4;
    }
    trip.points.push_back(pt(static_cast<std::int64_t>(t),
                             geo::offset_m(kBase, x, lateral_offset_m), v));
  }
  return trip;
}

// Toy labeled corpus: slow walking half followed by a ride; alternating trips
// ride a slow bus or a fast car so stage 2 sees more than one class.
std::vector<trip_mode::LabeledTrip> toy_corpus(int n_trips) {
  std::vector<trip_mode::LabeledTrip> corpus;
  for (int k = 0; k < n_trips; ++k) {
    trip_mode::LabeledTrip lt;
    lt.trip_id = k;
    lt.trip.device_id = "d" + std::to_string(k);
    const bool car = k % 2 == 1;
    std::vector<Mode> modes;
    double x = k * 10.0;
    for (int i = 0; i < 60; ++i) {
      const bool walk = i < 30;
      const double ride = car ? 13.0 + 0.06 * (i % 5) : 8.0 + 0.05 * (i % 9);
      const double v = walk ? 1.1 + 0.01 * (i % 7) : ride;
      x += v * 15;
      lt.trip.points.push_back(
          pt(i * 15, geo::offset_m(kBase, x, 0), v, lt.trip.device_id.c_str()));
      modes.push_back(walk ? Mode::NonVehicle : (car ? Mode::Car : Mode::Bus));
    }
    lt.point_modes = std::move(modes);
    corpus.push_back(std::move(lt));
  }
  return corpus;
}

}  // namespace

TEST_CASE("segment_trips: a single PoI yields no trips") {
  std::vector<LocationPoint> trace;
  for (int i = 0; i < 100; ++i)
    trace.push_back(pt(i * 15, geo::offset_m(kBase, i, 0), 0.5));
  std::vector<StayPoint> stays{stay_at(kBase, 0, 1485)};
  CHECK(trip_mode::segment_trips(trace, stays, {0}).empty());
}

TEST_CASE("segment_trips: home-school-home makes two trips") {
  auto school = geo::offset_m(kBase, 3000, 0);
  std::vector<LocationPoint> trace;
  // Stay home 0..1000, travel, stay school 3000..7000, travel, home 9000..10000.
  for (std::int64_t t = 0; t <= 10000; t += 50) {
    geo::LatLon p = kBase;
    if (t > 1000 && t < 3000)
      p = geo::offset_m(kBase, 3000.0 * (t - 1000) / 2000.0, 0);
    else if (t >= 3000 && t <= 7000)
      p = school;
    else if (t > 7000 && t < 9000)
      p = geo::offset_m(kBase, 3000.0 * (9000 - t) / 2000.0, 0);
    trace.push_back(pt(t, p, 0));
  }
  std::vector<StayPoint> stays{stay_at(kBase, 0, 1000),
                               stay_at(school, 3000, 7000),
                               stay_at(kBase, 9000, 10000)};
  auto trips = trip_mode::segment_trips(trace, stays, {7, 4, 7});
  REQUIRE(trips.size() == 2);
  CHECK(trips[0].origin_poi == 7);
  CHECK(trips[0].dest_poi == 4);
  CHECK(trips[1].origin_poi == 4);
  CHECK(trips[1].dest_poi == 7);
  // Points lie strictly between the bounding stays.
  for (const auto& p : trips[0].points) {
    CHECK(p.timestamp > 1000);
    CHECK(p.timestamp < 3000);
  }
}

TEST_CASE("point features: window 1 is the identity") {
  auto trip = trace_wbw();
  auto f = trip_mode::compute_point_features(trip, 1);
  REQUIRE(f.size() == trip.points.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(f[i].speed == doctest::Approx(trip.points[i].speed_mps));
    CHECK(f[i].accel == doctest::Approx(trip.points[i].accel_mps2));
  }
}

TEST_CASE("point features: constant speed is preserved by averaging") {
  Trip trip;
  for (int i = 0; i < 40; ++i)
    trip.points.push_back(pt(i * 15, geo::offset_m(kBase, i * 45.0, 0), 3.0));
  auto f = trip_mode::compute_point_features(trip, 5);
  for (const auto& pf : f) CHECK(pf.speed == doctest::Approx(3.0));
}

TEST_CASE("point features: window 5 equals a brute-force windowed mean") {
  auto trip = trace_wbw();
  auto f = trip_mode::compute_point_features(trip, 5);
  const int n = static_cast<int>(trip.points.size());
  for (int i = 0; i < n; ++i) {
    double sum = 0;
    int cnt = 0;
    for (int j = std::max(0, i - 2); j <= std::min(n - 1, i + 2); ++j) {
      sum += trip.points[j].speed_mps;
      ++cnt;
    }
    CHECK(f[i].speed == doctest::Approx(sum / cnt));
  }
}

TEST_CASE("segment features: constant 10 m/s gives mean = p85 = 10") {
  Trip trip;
  for (int i = 0; i < 30; ++i)
    trip.points.push_back(pt(i * 15, geo::offset_m(kBase, i * 150.0, 0), 10.0));
  trip_mode::NetworkIndex index;
  auto f = trip_mode::compute_segment_features(trip, 0, 29, index);
  REQUIRE(f.size() == trip_mode::kSegmentFeatureCount);
  CHECK(f[0] == doctest::Approx(10.0));  // p85 speed
  CHECK(f[1] == doctest::Approx(10.0));  // mean speed
  CHECK(f[12] == doctest::Approx(0.0));  // low-speed fraction
}

TEST_CASE("segment features: pre-segment waiting time") {
  Trip trip;
  // 0..120 s stationary (9 points), then a moving segment.
  for (int i = 0; i <= 8; ++i)
    trip.points.push_back(pt(i * 15, kBase, 0.0));
  for (int i = 9; i < 29; ++i)
    trip.points.push_back(
        pt(i * 15, geo::offset_m(kBase, (i - 8) * 100.0, 0), 7.0));
  trip_mode::NetworkIndex index;
  auto f = trip_mode::compute_segment_features(trip, 9, 28, index);
  CHECK(f[2] == doctest::Approx(120.0));
}

TEST_CASE("auto_label: exact trace along the sole candidate is accepted with leg-mode labels") {
  auto trip = trace_wbw();
  auto lr = trip_mode::auto_label_trip(trip, {wbw_candidate()});
  REQUIRE(lr.accepted);
  REQUIRE(lr.point_modes.size() == trip.points.size());
  const double t_walk1 = 100 / 1.4;
  const double t_bus_end = t_walk1 + transit::kBoardingWaitS + 1000 / 7.5;
  for (std::size_t i = 0; i < trip.points.size(); ++i) {
    const double t = static_cast<double>(trip.points[i].timestamp);
    // The boarding wait belongs to the transit leg.
    const Mode want = (t < t_walk1 - 5 || t > t_bus_end + 5)
                          ? Mode::NonVehicle
                          : (t > t_walk1 + 5 && t < t_bus_end - 5)
                                ? Mode::Bus
                                : lr.point_modes[i];  // boundary sample: either
    CHECK(lr.point_modes[i] == want);
  }
}

TEST_CASE("auto_label: sub-threshold margin leaves the trip unlabeled") {
  auto trip = trace_wbw();
  // Two geometrically identical candidates tie; margin 0 < 0.2.
  auto lr = trip_mode::auto_label_trip(trip, {wbw_candidate(), wbw_candidate()});
  CHECK_FALSE(lr.accepted);
  CHECK(lr.runner_up_score - lr.best_score < 0.2);
}

TEST_CASE("auto_label acceptance is monotone in geometric distance") {
  bool prev_accepted = true;
  for (double off = 0; off <= 800; off += 50) {
    auto lr = trip_mode::auto_label_trip(trace_wbw(off), {wbw_candidate()});
    if (!prev_accepted) CHECK_FALSE(lr.accepted);
    prev_accepted = lr.accepted;
  }
  CHECK(trip_mode::auto_label_trip(trace_wbw(0), {wbw_candidate()}).accepted);
  CHECK_FALSE(
      trip_mode::auto_label_trip(trace_wbw(800), {wbw_candidate()}).accepted);
}

TEST_CASE("corpus CSV round-trips") {
  auto corpus = toy_corpus(3);
  std::ostringstream out;
  trip_mode::write_corpus_csv(out, corpus);
  std::istringstream in(out.str());
  auto back = trip_mode::read_corpus_csv(in);
  REQUIRE(back.size() == corpus.size());
  std::ostringstream out2;
  trip_mode::write_corpus_csv(out2, back);
  CHECK(out.str() == out2.str());
}

TEST_CASE("vehicle class ids round-trip") {
  for (Mode m : {Mode::Bus, Mode::Metro, Mode::Car})
    CHECK(trip_mode::vehicle_mode(trip_mode::vehicle_class(m)) == m);
}

TEST_CASE("classifier training is reproducible and reload is bit-exact") {
  auto corpus = toy_corpus(12);
  trip_mode::NetworkIndex index;
  trip_mode::TrainConfig tc;
  tc.n_trees = 10;
  tc.boost_rounds = 10;
  auto clf_a = trip_mode::train_classifiers(corpus, index, tc);
  auto clf_b = trip_mode::train_classifiers(corpus, index, tc);
  std::ostringstream sa, sb;
  clf_a.save(sa);
  clf_b.save(sb);
  CHECK(sa.str() == sb.str());

  std::istringstream in(sa.str());
  auto loaded = trip_mode::ModeClassifier::load(in);
  std::ostringstream sc;
  loaded.save(sc);
  CHECK(sc.str() == sa.str());
}

TEST_CASE("predict_modes honors PoI windows and smooths short vehicle runs") {
  auto corpus = toy_corpus(12);
  trip_mode::NetworkIndex index;
  trip_mode::TrainConfig tc;
  tc.n_trees = 10;
  tc.boost_rounds = 10;
  auto clf = trip_mode::train_classifiers(corpus, index, tc);

  // A trip entirely inside a PoI stay interval: non-vehicle by fiat.
  auto inside = toy_corpus(1)[0].trip;
  auto pm = trip_mode::predict_modes(clf, inside, index, {},
                                     {{-10, inside.points.back().timestamp + 10}});
  for (Mode m : pm) CHECK(m == Mode::NonVehicle);
  // Segments partition the point list.
  REQUIRE(!inside.segments.empty());
  int covered = 0;
  for (std::size_t s = 0; s < inside.segments.size(); ++s) {
    const auto& seg = inside.segments[s];
    covered += seg.last - seg.first + 1;
    if (s > 0) CHECK(seg.first == inside.segments[s - 1].last + 1);
  }
  CHECK(covered == static_cast<int>(inside.points.size()));

  // A 30 s fast blip inside a walking trip is smoothed away.
  Trip blip;
  double x = 0;
  for (int i = 0; i < 60; ++i) {
    const bool fast = i == 30 || i == 31;
    const double v = fast ? 9.0 : 1.2;
    x += v * 15;
    blip.points.push_back(pt(i * 15, geo::offset_m(kBase, x, 0), v));
  }
  auto pm2 = trip_mode::predict_modes(clf, blip, index);
  for (Mode m : pm2) CHECK(m == Mode::NonVehicle);
}
