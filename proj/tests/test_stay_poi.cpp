#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "urbanflow/geo.hpp"
#include "urbanflow/rng.hpp"
#include "urbanflow/stay_poi.hpp"

using namespace urbanflow;

namespace {

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

// Cluster labels -> partition equality irrespective of label values.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> fwd, rev;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] < 0) != (b[i] < 0)) return false;
    if (a[i] < 0) continue;
    auto f = fwd.emplace(a[i], b[i]);
    auto r = rev.emplace(b[i], a[i]);
    if (f.first->second != b[i] || r.first->second != a[i]) return false;
  }
  return true;
}

std::vector<StayPoint> random_stays(int n, rng::Rng& rng, double extent_m) {
  std::vector<StayPoint> stays;
  std::int64_t t = 1000;
  for (int i = 0; i < n; ++i) {
    auto p = geo::offset_m({1.30, 103.80}, rng.uniform(0, extent_m),
                           rng.uniform(0, extent_m));
    stays.push_back(stay_at(p, t, t + 700));
    t += 1000;
  }
  return stays;
}

}  // namespace

TEST_CASE("detect_stays: 20 stationary minutes make one stay") {
  geo::LatLon a{1.30, 103.80};
  std::vector<LocationPoint> trace;
  for (int i = 0; i <= 80; ++i) trace.push_back(pt(i * 15, a, 0.0));
  auto stays = stay_poi::detect_stays(trace);
  REQUIRE(stays.size() == 1);
  CHECK(stays[0].start_ts == 0);
  CHECK(stays[0].end_ts == 1200);
  CHECK(stays[0].n_points == 81);
  CHECK(geo::haversine_m(stays[0].pos(), a) < 1.0);
}

TEST_CASE("detect_stays: sub-threshold runs are skipped") {
  geo::LatLon a{1.30, 103.80};
  std::vector<LocationPoint> trace;
  for (int i = 0; i < 30; ++i)  // 7.5 minutes < 10 minute minimum
    trace.push_back(pt(i * 15, a, 0.0));
  CHECK(stay_poi::detect_stays(trace).empty());
}

TEST_CASE("detect_stays matches the scan oracle and yields ordered disjoint intervals") {
  rng::Rng rng(21);
  geo::LatLon a{1.30, 103.80};
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<LocationPoint> trace;
    std::int64_t ts = 0;
    for (int i = 0; i < 2000; ++i) {
      const double speed = (i / (20 + rep * 7)) % 2 == 0 ? rng.uniform(0, 0.9)
                                                         : rng.uniform(1.2, 9.0);
      trace.push_back(pt(ts, geo::offset_m(a, rng.uniform(0, 50), 0), speed));
      ts += 10 + static_cast<std::int64_t>(rng.below(20));
    }
    auto fast = stay_poi::detect_stays(trace);
    auto ref = stay_poi::ref::detect_stays_scan(trace, 1.0, 600);
    REQUIRE(fast.size() == ref.size());
    for (std::size_t i = 0; i < fast.size(); ++i) {
      CHECK(fast[i].start_ts == ref[i].start_ts);
      CHECK(fast[i].end_ts == ref[i].end_ts);
      CHECK(fast[i].n_points == ref[i].n_points);
      CHECK(fast[i].lat == doctest::Approx(ref[i].lat));
      if (i > 0) CHECK(fast[i - 1].end_ts < fast[i].start_ts);
      CHECK(fast[i].end_ts - fast[i].start_ts >= 600);
      CHECK(fast[i].n_points >= 2);
    }
  }
}

TEST_CASE("merge_stays consolidates nearby fragments") {
  geo::LatLon a{1.30, 103.80};
  std::vector<StayPoint> stays{stay_at(a, 0, 700),
                               stay_at(geo::offset_m(a, 50, 0), 800, 1500),
                               stay_at(geo::offset_m(a, 5000, 0), 2000, 2700)};
  auto merged = stay_poi::merge_stays(stays, 180, 200);
  REQUIRE(merged.size() == 2);
  CHECK(merged[0].start_ts == 0);
  CHECK(merged[0].end_ts == 1500);
  CHECK(merged[0].n_points == 10);
  CHECK(merged[1].start_ts == 2000);
}

TEST_CASE("cluster_pois: one stay becomes its own PoI") {
  geo::LatLon a{1.30, 103.80};
  auto pois = stay_poi::cluster_pois({stay_at(a, 0, 700)}, {});
  REQUIRE(pois.size() == 1);
  CHECK(geo::haversine_m(pois[0].pos(), a) < 1.0);
  CHECK(pois[0].member_stays == std::vector<int>{0});
}

TEST_CASE("cluster_pois: three stays within 50 m cluster into one PoI") {
  geo::LatLon a{1.30, 103.80};
  std::vector<StayPoint> stays{stay_at(a, 0, 700),
                               stay_at(geo::offset_m(a, 40, 0), 1000, 1700),
                               stay_at(geo::offset_m(a, 0, 45), 2000, 2700)};
  auto pois = stay_poi::cluster_pois(stays, {300.0, 2});
  REQUIRE(pois.size() == 1);
  CHECK(pois[0].member_stays.size() == 3);
}

TEST_CASE("every stay lands in exactly one PoI") {
  rng::Rng rng(22);
  auto stays = random_stays(300, rng, 3000);
  auto pois = stay_poi::cluster_pois(stays, {});
  std::vector<int> seen(stays.size(), 0);
  for (const auto& p : pois) {
    CHECK(!p.member_stays.empty());
    for (int si : p.member_stays) ++seen[si];
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

TEST_CASE("dbscan equals the naive reference on 500 random stays") {
  rng::Rng rng(23);
  auto stays = random_stays(500, rng, 5000);
  stay_poi::DbscanParams params;
  CHECK(same_partition(stay_poi::dbscan(stays, params),
                       stay_poi::ref::dbscan_naive(stays, params)));
}

TEST_CASE("dbscan partition is permutation-invariant") {
  rng::Rng rng(24);
  auto stays = random_stays(200, rng, 2000);
  stay_poi::DbscanParams params;
  auto base = stay_poi::dbscan(stays, params);

  std::vector<int> perm(stays.size());
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<StayPoint> shuffled(stays.size());
  for (std::size_t i = 0; i < perm.size(); ++i) shuffled[i] = stays[perm[i]];
  auto labels = stay_poi::dbscan(shuffled, params);
  std::vector<int> unshuffled(stays.size());
  for (std::size_t i = 0; i < perm.size(); ++i) unshuffled[perm[i]] = labels[i];
  CHECK(same_partition(base, unshuffled));
}

TEST_CASE("identify_anchors: nightly occupation marks home") {
  geo::LatLon a{1.30, 103.80};
  std::vector<StayPoint> stays;
  const std::int64_t day0 = 1672588800;  // local midnight at UTC+8
  for (int d = 0; d < 5; ++d) {
    // 20:00 to 07:00 next day, local time.
    stays.push_back(stay_at(a, day0 + d * 86400 + 20 * 3600,
                            day0 + (d + 1) * 86400 + 7 * 3600));
  }
  auto pois = stay_poi::cluster_pois(stays, {});
  stay_poi::AnchorConfig cfg;
  cfg.tz_offset_s = 8 * 3600;
  stay_poi::identify_anchors(pois, stays, cfg);
  REQUIRE(pois.size() == 1);
  CHECK(pois[0].category == PoiCategory::Home);
}

TEST_CASE("identify_anchors: weekday school hours mark school") {
  geo::LatLon home{1.30, 103.80};
  auto school = geo::offset_m(home, 2000, 0);
  std::vector<StayPoint> stays;
  const std::int64_t day0 = 1672588800;  // local Monday midnight at UTC+8
  for (int d = 0; d < 5; ++d) {
    stays.push_back(stay_at(home, day0 + d * 86400 + 18 * 3600,
                            day0 + (d + 1) * 86400 + 7 * 3600));
    stays.push_back(stay_at(school, day0 + d * 86400 + 8 * 3600,
                            day0 + d * 86400 + 13 * 3600 + 1800));
  }
  auto pois = stay_poi::cluster_pois(stays, {});
  stay_poi::AnchorConfig cfg;
  cfg.tz_offset_s = 8 * 3600;
  stay_poi::identify_anchors(pois, stays, cfg);
  REQUIRE(pois.size() == 2);
  int homes = 0, schools = 0;
  for (const auto& p : pois) {
    homes += p.category == PoiCategory::Home;
    schools += p.category == PoiCategory::School;
    if (p.category == PoiCategory::School)
      CHECK(geo::haversine_m(p.pos(), school) < 10.0);
  }
  CHECK(homes == 1);
  CHECK(schools == 1);
}

TEST_CASE("stays and pois CSV round-trip") {
  geo::LatLon a{1.30, 103.80};
  std::map<std::string, std::vector<StayPoint>> all;
  all["d0"] = {stay_at(a, 0, 700), stay_at(geo::offset_m(a, 900, 0), 1000, 1800)};
  std::ostringstream out;
  stay_poi::write_stays_csv(out, all);
  std::istringstream in(out.str());
  auto back = stay_poi::read_stays_csv(in);
  REQUIRE(back.at("d0").size() == 2);
  CHECK(back.at("d0")[1].start_ts == 1000);
  std::ostringstream out2;
  stay_poi::write_stays_csv(out2, back);
  CHECK(out.str() == out2.str());

  std::map<std::string, std::vector<Poi>> pois;
  pois["d0"] = stay_poi::cluster_pois(all["d0"], {});
  pois["d0"][0].category = PoiCategory::Home;
  std::ostringstream pout;
  stay_poi::write_pois_csv(pout, pois);
  std::istringstream pin(pout.str());
  auto pback = stay_poi::read_pois_csv(pin);
  REQUIRE(pback.at("d0").size() == pois["d0"].size());
  CHECK(pback.at("d0")[0].category == PoiCategory::Home);
}
