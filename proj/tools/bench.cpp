// Benchmarks the parallel kernels against their serial reference
// implementations and checks that both agree.

#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "urbanflow/ml.hpp"
#include "urbanflow/probe_flow.hpp"
#include "urbanflow/rng.hpp"
#include "urbanflow/stay_poi.hpp"

using namespace urbanflow;
using Clock = std::chrono::steady_clock;

namespace {

template <typename F>
double time_s(F&& fn) {
  const auto t0 = Clock::now();
  fn();
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<StayPoint> random_stays(int n, rng::Rng& rng) {
  std::vector<StayPoint> stays(n);
  std::int64_t t = 0;
  for (auto& s : stays) {
    s.device_id = "bench";
    s.lat = 1.30 + rng.uniform() * 0.05;
    s.lon = 103.80 + rng.uniform() * 0.05;
    s.start_ts = t;
    t += 700 + static_cast<std::int64_t>(rng.below(600));
    s.end_ts = t;
    s.n_points = 40;
    t += 100;
  }
  return stays;
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> fwd, rev;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] < 0) != (b[i] < 0)) return false;
    if (a[i] < 0) continue;
    auto [fit, fnew] = fwd.emplace(a[i], b[i]);
    auto [rit, rnew] = rev.emplace(b[i], a[i]);
    if (fit->second != b[i] || rit->second != a[i]) return false;
  }
  return true;
}

void bench_stays() {
  rng::Rng rng(11);
  std::vector<LocationPoint> trace;
  std::int64_t ts = 0;
  for (int i = 0; i < 200000; ++i) {
    LocationPoint p;
    p.device_id = "bench";
    p.timestamp = ts;
    ts += 15;
    p.lat = 1.30 + rng.uniform() * 0.01;
    p.lon = 103.80;
    p.speed_mps = (i / 100) % 2 == 0 ? 0.3 : 3.0;
    trace.push_back(p);
  }
  std::vector<StayPoint> a, b;
  const double t1 = time_s([&] { a = stay_poi::detect_stays(trace); });
  const double t2 =
      time_s([&] { b = stay_poi::ref::detect_stays_scan(trace, 1.0, 600); });
  std::printf("detect_stays      %8.3f s   ref %8.3f s   agree=%s\n", t1, t2,
              a.size() == b.size() ? "yes" : "NO");
}

void bench_dbscan() {
  rng::Rng rng(12);
  auto stays = random_stays(4000, rng);
  stay_poi::DbscanParams params;
  std::vector<int> a, b;
  const double t1 = time_s([&] { a = stay_poi::dbscan(stays, params); });
  const double t2 =
      time_s([&] { b = stay_poi::ref::dbscan_naive(stays, params); });
  std::printf("dbscan            %8.3f s   ref %8.3f s   agree=%s\n", t1, t2,
              same_partition(a, b) ? "yes" : "NO");
}

void bench_dedup() {
  rng::Rng rng(13);
  probe_flow::SiteTopology topo;
  for (char c = 'A'; c <= 'G'; ++c) topo.buildings[std::string(1, c)] = "";
  std::vector<ProbeRecord> records;
  for (int i = 0; i < 200000; ++i) {
    ProbeRecord r;
    r.mac_hash = "m" + std::to_string(rng.below(5000));
    r.building_id = std::string(1, static_cast<char>('A' + rng.below(7)));
    r.check_in_ts = static_cast<std::int64_t>(rng.below(86400));
    r.check_out_ts = r.check_in_ts + static_cast<std::int64_t>(rng.below(120));
    r.rssi = -60;
    records.push_back(std::move(r));
  }
  std::vector<ProbeRecord> a, b;
  const double t1 =
      time_s([&] { a = probe_flow::dedup_records(records, topo, 60); });
  const double t2 = time_s([&] {
    b = probe_flow::ref::dedup_interval_union(
        records, topo, 60, probe_flow::DedupGranularity::Building);
  });
  std::printf("dedup_records     %8.3f s   ref %8.3f s   agree=%s\n", t1, t2,
              a == b ? "yes" : "NO");
}

void bench_forest() {
  rng::Rng rng(14);
  ml::Matrix x;
  std::vector<int> y;
  for (int i = 0; i < 20000; ++i) {
    std::vector<double> row(16);
    for (auto& v : row) v = rng.uniform();
    y.push_back(row[3] + row[7] > 1.0 ? 1 : (row[0] > 0.5 ? 2 : 0));
    x.push_back(std::move(row));
  }
  ml::RandomForest::Params params;
  ml::RandomForest parallel_forest, serial_forest;
  const double t1 =
      time_s([&] { parallel_forest.train(x, y, 3, params); });
#ifdef _OPENMP
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
#endif
  const double t2 = time_s([&] { serial_forest.train(x, y, 3, params); });
#ifdef _OPENMP
  omp_set_num_threads(saved);
#endif
  const bool agree = parallel_forest.to_json() == serial_forest.to_json();
  std::printf("forest train      %8.3f s   1thr %7.3f s   agree=%s\n", t1, t2,
              agree ? "yes" : "NO");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("openmp: disabled\n");
#endif
  std::printf("%-18s %10s    %12s\n", "kernel", "parallel", "serial ref");
  bench_stays();
  bench_dbscan();
  bench_dedup();
  bench_forest();
  return 0;
}
