// urbanflow CLI: one subcommand per pipeline stage.
//
//   urbanflow <stage> --config <path> [--set key=value ...]
//
// Machine-readable one-line JSON summary on stdout; prose on stderr.
// Exit codes: 0 ok, 1 internal error, 2 missing input, 3 config error.

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fcntl.h>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "urbanflow/aggregate.hpp"
#include "urbanflow/csv.hpp"
#include "urbanflow/ingest.hpp"
#include "urbanflow/probe_flow.hpp"
#include "urbanflow/rng.hpp"
#include "urbanflow/simgen.hpp"
#include "urbanflow/stay_poi.hpp"
#include "urbanflow/transit.hpp"
#include "urbanflow/trip_mode.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace urbanflow;

namespace {

struct MissingInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- config ----

json default_config() {
  return json{
      {"seed", 1},
      {"output_dir", "out"},
      {"tz_offset_s", simgen::kDefaultTzOffsetS},
      {"world",
       {{"extent_km", 8.0},
        {"origin_lat", 1.30},
        {"origin_lon", 103.80},
        {"n_homes", 200},
        {"n_schools", 10},
        {"n_bus_lines", 4},
        {"bus_stop_spacing_m", 500.0},
        {"n_metro_lines", 2},
        {"metro_stop_spacing_m", 1000.0},
        {"road_spacing_m", 1000.0},
        {"ap_density_per_km2", 300.0},
        {"walk_speed", 1.4},
        {"bus_speed", 7.5},
        {"metro_speed", 16.0},
        {"car_speed", 13.0},
        {"bus_dwell_s", 20.0}}},
      {"agents", {{"n_agents", 100}, {"n_days", 7}}},
      {"noise", {{"sigma_m", 30.0}, {"tau_s", 1800.0}}},
      {"probe_scenario",
       {{"n_buildings", 7},
        {"building_spacing_m", 150.0},
        {"n_commuters_morning", 300},
        {"n_commuters_evening", 300},
        {"downward_frac_morning", 0.8},
        {"downward_frac_evening", 0.2},
        {"n_building_c_visitors", 200},
        {"pass_through_frac", 0.6},
        {"short_stay_s", 240},
        {"long_stay_s", 3600},
        {"mac_salt", "urbanflow"},
        {"sample_step_s", 5},
        {"gateway_range_m", 50.0}}},
      {"ingest", {{"max_speed_mps", 70.0}, {"max_gap_s", 300}, {"step_s", 15}}},
      {"stays",
       {{"speed_threshold_mps", 1.0},
        {"min_duration_s", 600},
        {"merge_gap_s", 180},
        {"merge_dist_m", 200.0}}},
      {"pois", {{"eps_m", 300.0}, {"min_pts", 2}}},
      {"anchors",
       {{"home_start_s", 0},
        {"home_end_s", 5 * 3600},
        {"school_start_s", 8 * 3600},
        {"school_end_s", 14 * 3600},
        {"home_coverage", 0.8},
        {"home_day_frac", 0.5},
        {"school_overlap", 0.5},
        {"school_day_frac", 0.5}}},
      {"label",
       {{"k_routes", 8},
        {"w_g", 0.01},
        {"w_d", 1.0},
        {"w_t", 1.0},
        {"accept_score", 1.0},
        {"min_margin", 0.2}}},
      {"train",
       {{"boost_rounds", 50},
        {"n_trees", 100},
        {"max_depth", 8},
        {"window", 5},
        {"holdout_frac", 0.2},
        {"wait_speed_threshold", 1.0}}},
      {"classify",
       {{"window", 5},
        {"min_vehicle_run_s", 60},
        {"wait_speed_threshold", 1.0}}},
      {"odmatrix", {{"zoning", "grid"}, {"cell_m", 1000.0}}},
      {"modefrac", {{"bin_m", 1000.0}}},
      {"fitdist", {{"x_min", 1.0}, {"samples", ""}}},
      {"motifs", {{"max_nodes", 6}}},
      {"probe",
       {{"merge_gap_s", 60},
        {"max_transition_gap_s", 1800},
        {"normalization", "system"},
        {"period_start", 0},
        {"period_end", 0},
        {"density_granularity_s", 3600},
        {"stay_threshold_s", 600},
        {"session_timeout_s", 4 * 3600},
        {"building", "C"}}},
      {"export", {{"kind", "density-heatmap"}, {"input", ""}}},
  };
}

void reject_unknown_keys(const json& cfg, const json& schema,
                         const std::string& prefix) {
  for (const auto& [key, value] : cfg.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!schema.contains(key))
      throw ConfigError("unknown config key: " + path);
    if (value.is_object() && schema.at(key).is_object())
      reject_unknown_keys(value, schema.at(key), path);
  }
}

void merge_into(json& base, const json& overlay) {
  for (const auto& [key, value] : overlay.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object())
      merge_into(base[key], value);
    else
      base[key] = value;
  }
}

void apply_set(json& cfg, const json& schema, const std::string& expr) {
  const std::size_t eq = expr.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects key=value, got: " + expr);
  const std::string path = expr.substr(0, eq);
  const std::string raw = expr.substr(eq + 1);

  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("--set expects key=value, got: " + expr);

  const json* sch = &schema;
  json* node = &cfg;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!sch->contains(parts[i]))
      throw ConfigError("unknown config key: " + path);
    sch = &sch->at(parts[i]);
    node = &(*node)[parts[i]];
  }
  if (!sch->contains(parts.back()))
    throw ConfigError("unknown config key: " + path);

  json value;
  try {
    value = json::parse(raw);
    if (value.is_object() || value.is_array()) value = raw;
  } catch (const json::parse_error&) {
    value = raw;
  }
  (*node)[parts.back()] = value;
}

// ------------------------------------------------------------------- io -----

std::ifstream open_input(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw MissingInputError("missing input: " + p.string());
  return in;
}

// Write to <path>.tmp, then rename into place.
class AtomicFile {
 public:
  explicit AtomicFile(fs::path path)
      : path_(std::move(path)), tmp_(path_.string() + ".tmp"), out_(tmp_) {
    if (!out_) throw std::runtime_error("cannot write " + tmp_.string());
  }
  std::ostream& stream() { return out_; }
  void commit() {
    out_.close();
    fs::rename(tmp_, path_);
    committed_ = true;
  }
  ~AtomicFile() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      fs::remove(tmp_, ec);
    }
  }

 private:
  fs::path path_;
  fs::path tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

// One stage process at a time per output directory.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".urbanflow.lock") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw StateError("output directory is locked (remove " + path_.string() +
                       " if stale)");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd_, pid.c_str(), pid.size());
  }
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }

 private:
  fs::path path_;
  int fd_ = -1;
};

// ------------------------------------------------ stage-local file formats --

struct TripFile {
  // trips keyed by (device, trip_id), ordered.
  std::vector<trip_mode::LabeledTrip> trips;  // point_modes empty/ignored
};

void write_trips_csv(std::ostream& out,
                     const std::vector<trip_mode::LabeledTrip>& trips) {
  out << "device,trip_id,origin_poi,dest_poi,ts,lat,lon,speed_mps,accel_mps2\n";
  for (const auto& t : trips)
    for (const auto& p : t.trip.points)
      out << t.trip.device_id << ',' << t.trip_id << ',' << t.trip.origin_poi
          << ',' << t.trip.dest_poi << ',' << p.timestamp << ','
          << csv::fmt(p.lat) << ',' << csv::fmt(p.lon) << ','
          << csv::fmt(p.speed_mps) << ',' << csv::fmt(p.accel_mps2) << '\n';
}

std::vector<trip_mode::LabeledTrip> read_trips_csv(std::istream& in) {
  std::vector<trip_mode::LabeledTrip> trips;
  csv::Reader reader(in, true);
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() != 9) throw CorruptInputError("bad trips.csv row");
    const std::string& dev = row[0];
    const int tid = std::stoi(row[1]);
    if (trips.empty() || trips.back().trip.device_id != dev ||
        trips.back().trip_id != tid) {
      trip_mode::LabeledTrip t;
      t.trip.device_id = dev;
      t.trip_id = tid;
      t.trip.origin_poi = std::stoi(row[2]);
      t.trip.dest_poi = std::stoi(row[3]);
      trips.push_back(std::move(t));
    }
    LocationPoint p;
    p.device_id = dev;
    p.timestamp = std::stoll(row[4]);
    p.lat = std::stod(row[5]);
    p.lon = std::stod(row[6]);
    p.speed_mps = std::stod(row[7]);
    p.accel_mps2 = std::stod(row[8]);
    trips.back().trip.points.push_back(std::move(p));
  }
  return trips;
}

void write_stay_poi_map_csv(
    std::ostream& out,
    const std::map<std::string, std::vector<int>>& stay_to_poi) {
  out << "device,stay_index,poi_id\n";
  for (const auto& [dev, ids] : stay_to_poi)
    for (std::size_t i = 0; i < ids.size(); ++i)
      out << dev << ',' << i << ',' << ids[i] << '\n';
}

std::map<std::string, std::vector<int>> read_stay_poi_map_csv(
    std::istream& in) {
  std::map<std::string, std::vector<int>> map;
  csv::Reader reader(in, true);
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() != 3) throw CorruptInputError("bad stay_poi_map.csv row");
    auto& ids = map[row[0]];
    const std::size_t idx = std::stoul(row[1]);
    if (ids.size() <= idx) ids.resize(idx + 1, -1);
    ids[idx] = std::stoi(row[2]);
  }
  return map;
}

void write_modes_csv(std::ostream& out,
                     const std::vector<trip_mode::LabeledTrip>& trips) {
  out << "device,trip_id,ts,mode\n";
  for (const auto& t : trips)
    for (std::size_t i = 0; i < t.trip.points.size(); ++i)
      out << t.trip.device_id << ',' << t.trip_id << ','
          << t.trip.points[i].timestamp << ',' << mode_name(t.point_modes[i])
          << '\n';
}

std::map<std::pair<std::string, int>, std::vector<Mode>> read_modes_csv(
    std::istream& in) {
  std::map<std::pair<std::string, int>, std::vector<Mode>> modes;
  csv::Reader reader(in, true);
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() != 4) throw CorruptInputError("bad modes.csv row");
    modes[{row[0], std::stoi(row[1])}].push_back(parse_mode(row[3]));
  }
  return modes;
}

// ---------------------------------------------------------- config mapping --

simgen::WorldConfig world_config(const json& cfg) {
  const json& w = cfg.at("world");
  simgen::WorldConfig wc;
  wc.extent_km = w.at("extent_km").get<double>();
  wc.origin = {w.at("origin_lat").get<double>(),
               w.at("origin_lon").get<double>()};
  wc.n_homes = w.at("n_homes").get<int>();
  wc.n_schools = w.at("n_schools").get<int>();
  wc.n_bus_lines = w.at("n_bus_lines").get<int>();
  wc.bus_stop_spacing_m = w.at("bus_stop_spacing_m").get<double>();
  wc.n_metro_lines = w.at("n_metro_lines").get<int>();
  wc.metro_stop_spacing_m = w.at("metro_stop_spacing_m").get<double>();
  wc.road_spacing_m = w.at("road_spacing_m").get<double>();
  wc.ap_density_per_km2 = w.at("ap_density_per_km2").get<double>();
  wc.walk_speed = w.at("walk_speed").get<double>();
  wc.bus_speed = w.at("bus_speed").get<double>();
  wc.metro_speed = w.at("metro_speed").get<double>();
  wc.car_speed = w.at("car_speed").get<double>();
  wc.bus_dwell_s = w.at("bus_dwell_s").get<double>();
  wc.seed = cfg.at("seed").get<std::uint64_t>();
  return wc;
}

simgen::ProbeScenarioConfig probe_config(const json& cfg) {
  const json& p = cfg.at("probe_scenario");
  simgen::ProbeScenarioConfig pc;
  pc.n_buildings = p.at("n_buildings").get<int>();
  pc.building_spacing_m = p.at("building_spacing_m").get<double>();
  pc.n_commuters_morning = p.at("n_commuters_morning").get<int>();
  pc.n_commuters_evening = p.at("n_commuters_evening").get<int>();
  pc.downward_frac_morning = p.at("downward_frac_morning").get<double>();
  pc.downward_frac_evening = p.at("downward_frac_evening").get<double>();
  pc.n_building_c_visitors = p.at("n_building_c_visitors").get<int>();
  pc.pass_through_frac = p.at("pass_through_frac").get<double>();
  pc.short_stay_s = p.at("short_stay_s").get<std::int64_t>();
  pc.long_stay_s = p.at("long_stay_s").get<std::int64_t>();
  pc.mac_salt = p.at("mac_salt").get<std::string>();
  pc.sample_step_s = p.at("sample_step_s").get<std::int64_t>();
  pc.gateway_range_m = p.at("gateway_range_m").get<double>();
  pc.seed = rng::derive_seed(cfg.at("seed").get<std::uint64_t>(), "probe");
  return pc;
}

stay_poi::AnchorConfig anchor_config(const json& cfg) {
  const json& a = cfg.at("anchors");
  stay_poi::AnchorConfig ac;
  ac.tz_offset_s = cfg.at("tz_offset_s").get<int>();
  ac.home_start_s = a.at("home_start_s").get<int>();
  ac.home_end_s = a.at("home_end_s").get<int>();
  ac.school_start_s = a.at("school_start_s").get<int>();
  ac.school_end_s = a.at("school_end_s").get<int>();
  ac.home_coverage = a.at("home_coverage").get<double>();
  ac.home_day_frac = a.at("home_day_frac").get<double>();
  ac.school_overlap = a.at("school_overlap").get<double>();
  ac.school_day_frac = a.at("school_day_frac").get<double>();
  return ac;
}

// ------------------------------------------------------------------ stages --

using Summary = json;

Summary stage_simgen(const json& cfg, const fs::path& dir) {
  auto world = simgen::generate_world(world_config(cfg));
  {
    AtomicFile f(dir / "world.json");
    simgen::save_world(f.stream(), world);
    f.commit();
  }
  {
    AtomicFile f(dir / "ap_table.csv");
    ingest::save_ap_table(f.stream(), world.ap_table());
    f.commit();
  }

  simgen::ScheduleConfig sc;
  sc.n_agents = cfg.at("agents").at("n_agents").get<int>();
  sc.n_days = cfg.at("agents").at("n_days").get<int>();
  sc.seed = rng::derive_seed(cfg.at("seed").get<std::uint64_t>(), "schedules");
  auto schedules = simgen::generate_schedules(world, sc);
  auto sim = simgen::simulate_agents(world, schedules,
                                     cfg.at("noise").at("sigma_m").get<double>(),
                                     cfg.at("noise").at("tau_s").get<double>());
  {
    AtomicFile f(dir / "scans.jsonl");
    ingest::write_scan_log(f.stream(), sim.scans);
    f.commit();
  }
  {
    AtomicFile f(dir / "truth.csv");
    simgen::write_truth_csv(f.stream(), sim.truth);
    f.commit();
  }

  const auto pc = probe_config(cfg);
  auto probe_world = simgen::generate_probe_world(pc);
  auto probe_sim = simgen::simulate_pedestrians(probe_world, pc);
  {
    AtomicFile f(dir / "topology.json");
    probe_flow::save_topology(f.stream(), probe_world.topology);
    f.commit();
  }
  {
    AtomicFile f(dir / "probe_log.jsonl");
    probe_flow::write_probe_log(f.stream(), probe_sim.records);
    f.commit();
  }

  std::cerr << "simgen: " << schedules.size() << " agents, "
            << sim.scans.size() << " scans, " << probe_sim.records.size()
            << " probe records\n";
  return {{"stage", "simgen"},
          {"agents", schedules.size()},
          {"scans", sim.scans.size()},
          {"probe_records", probe_sim.records.size()},
          {"outputs",
           {"world.json", "ap_table.csv", "scans.jsonl", "truth.csv",
            "topology.json", "probe_log.jsonl"}}};
}

Summary stage_ingest(const json& cfg, const fs::path& dir) {
  auto scans_in = open_input(dir / "scans.jsonl");
  auto parse = ingest::parse_scan_log(scans_in);
  auto table_in = open_input(dir / "ap_table.csv");
  auto table = ingest::load_ap_table(table_in);

  auto resolved = ingest::resolve_locations(parse.records, table);
  ingest::FilterStats fstats;
  auto filtered = ingest::filter_anomalies(
      resolved.traces, cfg.at("ingest").at("max_speed_mps").get<double>(),
      &fstats);
  auto traces = ingest::interpolate_gaps(
      filtered, cfg.at("ingest").at("max_gap_s").get<std::int64_t>(),
      cfg.at("ingest").at("step_s").get<std::int64_t>());

  std::size_t points = 0;
  for (const auto& [dev, t] : traces) points += t.size();
  AtomicFile f(dir / "points.csv");
  ingest::write_points_csv(f.stream(), traces);
  f.commit();

  std::cerr << "ingest: " << parse.records.size() << " records -> " << points
            << " points (" << parse.malformed_lines << " malformed, "
            << resolved.dropped_unknown_ap << " unknown-AP, " << fstats.removed
            << " filtered)\n";
  return {{"stage", "ingest"},
          {"records", parse.records.size()},
          {"malformed", parse.malformed_lines},
          {"dropped_unknown_ap", resolved.dropped_unknown_ap},
          {"filtered", fstats.removed},
          {"devices", traces.size()},
          {"points", points},
          {"outputs", {"points.csv"}}};
}

Summary stage_stays(const json& cfg, const fs::path& dir) {
  auto in = open_input(dir / "points.csv");
  auto traces = ingest::read_points_csv(in);
  const double thresh = cfg.at("stays").at("speed_threshold_mps").get<double>();
  const std::int64_t min_dur =
      cfg.at("stays").at("min_duration_s").get<std::int64_t>();
  const std::int64_t merge_gap =
      cfg.at("stays").at("merge_gap_s").get<std::int64_t>();
  const double merge_dist = cfg.at("stays").at("merge_dist_m").get<double>();

  std::map<std::string, std::vector<StayPoint>> all;
  std::size_t n = 0;
  for (const auto& [dev, trace] : traces) {
    auto stays = stay_poi::merge_stays(
        stay_poi::detect_stays(trace, thresh, min_dur), merge_gap, merge_dist);
    n += stays.size();
    all[dev] = std::move(stays);
  }
  AtomicFile f(dir / "stays.csv");
  stay_poi::write_stays_csv(f.stream(), all);
  f.commit();
  std::cerr << "stays: " << n << " stay points over " << all.size()
            << " devices\n";
  return {{"stage", "stays"},
          {"devices", all.size()},
          {"stays", n},
          {"outputs", {"stays.csv"}}};
}

Summary stage_pois(const json& cfg, const fs::path& dir) {
  auto in = open_input(dir / "stays.csv");
  auto all = stay_poi::read_stays_csv(in);
  stay_poi::DbscanParams params{cfg.at("pois").at("eps_m").get<double>(),
                                cfg.at("pois").at("min_pts").get<int>()};
  const auto anchor_cfg = anchor_config(cfg);

  std::map<std::string, std::vector<Poi>> pois;
  std::map<std::string, std::vector<int>> stay_to_poi;
  std::size_t n_pois = 0, homes = 0, schools = 0;
  for (const auto& [dev, stays] : all) {
    auto ps = stay_poi::cluster_pois(stays, params);
    stay_poi::identify_anchors(ps, stays, anchor_cfg);
    auto& map = stay_to_poi[dev];
    map.assign(stays.size(), -1);
    for (const auto& p : ps) {
      for (int si : p.member_stays) map[si] = p.poi_id;
      homes += p.category == PoiCategory::Home;
      schools += p.category == PoiCategory::School;
    }
    n_pois += ps.size();
    pois[dev] = std::move(ps);
  }
  {
    AtomicFile f(dir / "pois.csv");
    stay_poi::write_pois_csv(f.stream(), pois);
    f.commit();
  }
  {
    AtomicFile f(dir / "stay_poi_map.csv");
    write_stay_poi_map_csv(f.stream(), stay_to_poi);
    f.commit();
  }
  std::cerr << "pois: " << n_pois << " PoIs (" << homes << " homes, "
            << schools << " schools)\n";
  return {{"stage", "pois"},
          {"devices", pois.size()},
          {"pois", n_pois},
          {"homes", homes},
          {"schools", schools},
          {"outputs", {"pois.csv", "stay_poi_map.csv"}}};
}

Summary stage_trips(const json&, const fs::path& dir) {
  auto pin = open_input(dir / "points.csv");
  auto traces = ingest::read_points_csv(pin);
  auto sin = open_input(dir / "stays.csv");
  auto all_stays = stay_poi::read_stays_csv(sin);
  auto min = open_input(dir / "stay_poi_map.csv");
  auto stay_to_poi = read_stay_poi_map_csv(min);

  std::vector<trip_mode::LabeledTrip> trips;
  for (const auto& [dev, trace] : traces) {
    const auto& stays = all_stays[dev];
    auto ts = trip_mode::segment_trips(trace, stays, stay_to_poi[dev]);
    for (auto& t : ts) {
      trip_mode::LabeledTrip lt;
      lt.trip = std::move(t);
      lt.trip_id = static_cast<int>(trips.size());
      trips.push_back(std::move(lt));
    }
  }
  AtomicFile f(dir / "trips.csv");
  write_trips_csv(f.stream(), trips);
  f.commit();
  std::cerr << "trips: " << trips.size() << " trips\n";
  return {{"stage", "trips"},
          {"trips", trips.size()},
          {"outputs", {"trips.csv"}}};
}

Summary stage_label(const json& cfg, const fs::path& dir) {
  auto tin = open_input(dir / "trips.csv");
  auto trips = read_trips_csv(tin);
  auto win = open_input(dir / "world.json");
  auto world = simgen::load_world(win);

  trip_mode::LabelConfig lc;
  const json& l = cfg.at("label");
  lc.w_g = l.at("w_g").get<double>();
  lc.w_d = l.at("w_d").get<double>();
  lc.w_t = l.at("w_t").get<double>();
  lc.accept_score = l.at("accept_score").get<double>();
  lc.min_margin = l.at("min_margin").get<double>();
  const int k = l.at("k_routes").get<int>();

  std::vector<trip_mode::LabeledTrip> corpus;
  for (auto& t : trips) {
    if (t.trip.points.size() < 2) continue;
    auto cands = transit::enumerate_routes(world.network,
                                           t.trip.points.front().pos(),
                                           t.trip.points.back().pos(), k, {});
    auto lr = trip_mode::auto_label_trip(t.trip, cands, lc);
    if (!lr.accepted) continue;
    corpus.push_back({t.trip, lr.point_modes, t.trip_id});
  }
  AtomicFile f(dir / "corpus.csv");
  trip_mode::write_corpus_csv(f.stream(), corpus);
  f.commit();
  std::cerr << "label: " << corpus.size() << " of " << trips.size()
            << " trips accepted\n";
  return {{"stage", "label"},
          {"trips", trips.size()},
          {"accepted", corpus.size()},
          {"outputs", {"corpus.csv"}}};
}

Summary stage_train(const json& cfg, const fs::path& dir) {
  auto cin = open_input(dir / "corpus.csv");
  auto corpus = trip_mode::read_corpus_csv(cin);
  auto win = open_input(dir / "world.json");
  auto world = simgen::load_world(win);
  auto index = trip_mode::NetworkIndex::build(world.network);

  trip_mode::TrainConfig tc;
  const json& t = cfg.at("train");
  tc.seed = rng::derive_seed(cfg.at("seed").get<std::uint64_t>(), "train");
  tc.boost_rounds = t.at("boost_rounds").get<int>();
  tc.n_trees = t.at("n_trees").get<int>();
  tc.max_depth = t.at("max_depth").get<int>();
  tc.window = t.at("window").get<int>();
  tc.holdout_frac = t.at("holdout_frac").get<double>();
  tc.wait_speed_threshold = t.at("wait_speed_threshold").get<double>();

  trip_mode::TrainReport report;
  auto clf = trip_mode::train_classifiers(corpus, index, tc, &report);
  AtomicFile f(dir / "model.json");
  clf.save(f.stream());
  f.commit();
  std::cerr << "train: stage1 holdout " << report.stage1_holdout_accuracy
            << ", stage2 holdout " << report.stage2_holdout_accuracy << "\n";
  return {{"stage", "train"},
          {"corpus_trips", corpus.size()},
          {"stage1_holdout_accuracy", report.stage1_holdout_accuracy},
          {"stage2_holdout_accuracy", report.stage2_holdout_accuracy},
          {"stage1_samples", report.stage1_samples},
          {"stage2_samples", report.stage2_samples},
          {"outputs", {"model.json"}}};
}

Summary stage_classify(const json& cfg, const fs::path& dir) {
  auto min = open_input(dir / "model.json");
  auto clf = trip_mode::ModeClassifier::load(min);
  auto tin = open_input(dir / "trips.csv");
  auto trips = read_trips_csv(tin);
  auto win = open_input(dir / "world.json");
  auto world = simgen::load_world(win);
  auto index = trip_mode::NetworkIndex::build(world.network);

  trip_mode::PredictConfig pc;
  const json& c = cfg.at("classify");
  pc.window = c.at("window").get<int>();
  pc.min_vehicle_run_s = c.at("min_vehicle_run_s").get<std::int64_t>();
  pc.wait_speed_threshold = c.at("wait_speed_threshold").get<double>();

  std::size_t points = 0;
  for (auto& t : trips) {
    t.point_modes = trip_mode::predict_modes(clf, t.trip, index, pc);
    points += t.point_modes.size();
  }
  AtomicFile f(dir / "modes.csv");
  write_modes_csv(f.stream(), trips);
  f.commit();
  std::cerr << "classify: " << trips.size() << " trips, " << points
            << " points labeled\n";
  return {{"stage", "classify"},
          {"trips", trips.size()},
          {"points", points},
          {"outputs", {"modes.csv"}}};
}

Summary stage_odmatrix(const json& cfg, const fs::path& dir) {
  auto tin = open_input(dir / "trips.csv");
  auto trips = read_trips_csv(tin);

  const std::string zoning = cfg.at("odmatrix").at("zoning").get<std::string>();
  std::vector<aggregate::OdTrip> od_trips;
  if (zoning == "grid") {
    aggregate::GridZoning z;
    z.origin = {cfg.at("world").at("origin_lat").get<double>(),
                cfg.at("world").at("origin_lon").get<double>()};
    z.cell_m = cfg.at("odmatrix").at("cell_m").get<double>();
    z.extent_m = cfg.at("world").at("extent_km").get<double>() * 1000.0;
    for (const auto& t : trips)
      od_trips.push_back(
          {aggregate::grid_zone(z, t.trip.points.front().pos()),
           aggregate::grid_zone(z, t.trip.points.back().pos()),
           static_cast<double>(t.trip.points.back().timestamp -
                               t.trip.points.front().timestamp)});
  } else if (zoning == "per_poi") {
    for (const auto& t : trips)
      od_trips.push_back(
          {t.trip.device_id + ":" + std::to_string(t.trip.origin_poi),
           t.trip.device_id + ":" + std::to_string(t.trip.dest_poi),
           static_cast<double>(t.trip.points.back().timestamp -
                               t.trip.points.front().timestamp)});
  } else {
    throw ConfigError("odmatrix.zoning must be grid or per_poi");
  }
  auto m = aggregate::build_od_matrix(od_trips);
  AtomicFile f(dir / "od.csv");
  aggregate::write_od_csv(f.stream(), m);
  f.commit();
  std::cerr << "odmatrix: " << m.total << " trips over " << m.cells.size()
            << " cells\n";
  return {{"stage", "odmatrix"},
          {"total", m.total},
          {"cells", m.cells.size()},
          {"outputs", {"od.csv"}}};
}

Summary stage_modefrac(const json& cfg, const fs::path& dir) {
  auto tin = open_input(dir / "trips.csv");
  auto trips = read_trips_csv(tin);
  auto min = open_input(dir / "modes.csv");
  auto modes = read_modes_csv(min);
  auto pin = open_input(dir / "pois.csv");
  auto pois = stay_poi::read_pois_csv(pin);

  // Geodesic home-school distance per device (requires both anchors).
  std::map<std::string, double> dist;
  for (const auto& [dev, ps] : pois) {
    const Poi* home = nullptr;
    const Poi* school = nullptr;
    for (const auto& p : ps) {
      if (p.category == PoiCategory::Home) home = &p;
      if (p.category == PoiCategory::School) school = &p;
    }
    if (home && school)
      dist[dev] = geo::haversine_m(home->pos(), school->pos());
  }

  std::vector<aggregate::ModedTrip> moded;
  for (const auto& t : trips) {
    auto it = modes.find({t.trip.device_id, t.trip_id});
    if (it == modes.end()) continue;
    std::vector<std::int64_t> ts;
    ts.reserve(t.trip.points.size());
    for (const auto& p : t.trip.points) ts.push_back(p.timestamp);
    moded.push_back(
        {t.trip.device_id, aggregate::dominant_mode(it->second, ts)});
  }
  std::size_t excluded = 0;
  auto bins = aggregate::mode_fraction_by_distance(
      moded, dist, cfg.at("modefrac").at("bin_m").get<double>(), &excluded);
  AtomicFile f(dir / "modefrac.csv");
  aggregate::write_mode_fraction_csv(f.stream(), bins);
  f.commit();
  std::cerr << "modefrac: " << bins.size() << " bins, " << excluded
            << " trips excluded (no anchors)\n";
  return {{"stage", "modefrac"},
          {"bins", bins.size()},
          {"excluded", excluded},
          {"outputs", {"modefrac.csv"}}};
}

Summary stage_fitdist(const json& cfg, const fs::path& dir) {
  std::vector<double> samples;
  const std::string samples_path =
      cfg.at("fitdist").at("samples").get<std::string>();
  if (!samples_path.empty()) {
    auto in = open_input(samples_path);
    double v;
    while (in >> v) samples.push_back(v);
  } else {
    // Default: trip path lengths in km.
    auto tin = open_input(dir / "trips.csv");
    auto trips = read_trips_csv(tin);
    for (const auto& t : trips) {
      double len = 0;
      for (std::size_t i = 0; i + 1 < t.trip.points.size(); ++i)
        len += geo::haversine_m(t.trip.points[i].pos(),
                                t.trip.points[i + 1].pos());
      samples.push_back(len / 1000.0);
    }
  }
  auto fit = aggregate::fit_truncated_power_law(
      samples, cfg.at("fitdist").at("x_min").get<double>());
  AtomicFile f(dir / "fit.json");
  aggregate::write_fit_json(f.stream(), fit);
  f.commit();
  std::cerr << "fitdist: alpha=" << fit.alpha << " kappa=" << fit.kappa
            << " over " << fit.n << " samples\n";
  return {{"stage", "fitdist"},
          {"alpha", fit.alpha},
          {"kappa", fit.kappa},
          {"n", fit.n},
          {"outputs", {"fit.json"}}};
}

Summary stage_motifs(const json& cfg, const fs::path& dir) {
  auto sin = open_input(dir / "stays.csv");
  auto all_stays = stay_poi::read_stays_csv(sin);
  auto min = open_input(dir / "stay_poi_map.csv");
  auto stay_to_poi = read_stay_poi_map_csv(min);

  aggregate::MotifHistogram hist;
  const int tz = cfg.at("tz_offset_s").get<int>();
  const int max_nodes = cfg.at("motifs").at("max_nodes").get<int>();
  for (const auto& [dev, stays] : all_stays)
    aggregate::merge(hist, aggregate::extract_daily_motifs(
                               stays, stay_to_poi[dev], tz, max_nodes));
  AtomicFile f(dir / "motifs.csv");
  aggregate::write_motif_csv(f.stream(), hist);
  f.commit();
  std::int64_t days = hist.complex_days;
  for (const auto& [id, c] : hist.counts) days += c;
  std::cerr << "motifs: " << hist.counts.size() << " distinct motifs over "
            << days << " device-days\n";
  return {{"stage", "motifs"},
          {"distinct", hist.counts.size()},
          {"device_days", days},
          {"complex_days", hist.complex_days},
          {"outputs", {"motifs.csv"}}};
}

Summary stage_probe_dedup(const json& cfg, const fs::path& dir) {
  auto lin = open_input(dir / "probe_log.jsonl");
  std::size_t malformed = 0;
  auto records = probe_flow::parse_probe_log(lin, &malformed);
  auto tin = open_input(dir / "topology.json");
  auto topo = probe_flow::load_topology(tin);
  const std::int64_t gap =
      cfg.at("probe").at("merge_gap_s").get<std::int64_t>();

  std::size_t rejected = 0;
  auto building = probe_flow::dedup_records(
      records, topo, gap, probe_flow::DedupGranularity::Building, &rejected);
  auto entrance = probe_flow::dedup_records(
      records, topo, gap, probe_flow::DedupGranularity::Entrance);
  {
    AtomicFile f(dir / "probe_dedup.jsonl");
    probe_flow::write_probe_log(f.stream(), building);
    f.commit();
  }
  {
    AtomicFile f(dir / "probe_dedup_entrance.jsonl");
    probe_flow::write_probe_log(f.stream(), entrance);
    f.commit();
  }
  std::cerr << "probe-dedup: " << records.size() << " -> " << building.size()
            << " building-level records (" << rejected << " rejected)\n";
  return {{"stage", "probe-dedup"},
          {"records", records.size()},
          {"malformed", malformed},
          {"rejected", rejected},
          {"building_level", building.size()},
          {"entrance_level", entrance.size()},
          {"outputs", {"probe_dedup.jsonl", "probe_dedup_entrance.jsonl"}}};
}

Summary stage_probe_density(const json& cfg, const fs::path& dir) {
  auto lin = open_input(dir / "probe_dedup.jsonl");
  auto records = probe_flow::parse_probe_log(lin);
  auto series = probe_flow::density_series(
      records, cfg.at("probe").at("density_granularity_s").get<std::int64_t>());
  AtomicFile f(dir / "density.csv");
  probe_flow::write_density_csv(f.stream(), series);
  f.commit();
  std::cerr << "probe-density: " << series.size() << " buildings\n";
  return {{"stage", "probe-density"},
          {"buildings", series.size()},
          {"outputs", {"density.csv"}}};
}

Summary stage_probe_flow(const json& cfg, const fs::path& dir) {
  auto lin = open_input(dir / "probe_dedup.jsonl");
  auto records = probe_flow::parse_probe_log(lin);
  auto tin = open_input(dir / "topology.json");
  auto topo = probe_flow::load_topology(tin);

  std::int64_t start = cfg.at("probe").at("period_start").get<std::int64_t>();
  std::int64_t end = cfg.at("probe").at("period_end").get<std::int64_t>();
  if (start == 0 && end == 0 && !records.empty()) {
    start = std::numeric_limits<std::int64_t>::max();
    for (const auto& r : records) {
      start = std::min(start, r.check_in_ts);
      end = std::max(end, r.check_out_ts + 1);
    }
  }
  const std::string norm =
      cfg.at("probe").at("normalization").get<std::string>();
  if (norm != "system" && norm != "per_link")
    throw ConfigError("probe.normalization must be system or per_link");
  auto m = probe_flow::flow_matrix(
      records, start, end, topo,
      cfg.at("probe").at("max_transition_gap_s").get<std::int64_t>(),
      norm == "system" ? probe_flow::FlowNormalization::SystemWide
                       : probe_flow::FlowNormalization::PerLink);
  AtomicFile f(dir / "flow.csv");
  probe_flow::write_flow_csv(f.stream(), m);
  f.commit();
  std::cerr << "probe-flow: " << m.total << " transitions, " << m.off_network
            << " off-network\n";
  return {{"stage", "probe-flow"},
          {"total", m.total},
          {"off_network", m.off_network},
          {"outputs", {"flow.csv"}}};
}

Summary stage_probe_staytime(const json& cfg, const fs::path& dir) {
  auto lin = open_input(dir / "probe_dedup_entrance.jsonl");
  auto records = probe_flow::parse_probe_log(lin);
  auto b = probe_flow::entrance_stay_breakdown(
      records, cfg.at("probe").at("building").get<std::string>(),
      cfg.at("probe").at("stay_threshold_s").get<std::int64_t>(),
      cfg.at("probe").at("session_timeout_s").get<std::int64_t>(),
      cfg.at("tz_offset_s").get<int>());
  AtomicFile f(dir / "staytime.csv");
  probe_flow::write_stay_breakdown_csv(f.stream(), b);
  f.commit();
  std::cerr << "probe-staytime: " << b.entries << " entries, " << b.unpaired
            << " unpaired\n";
  return {{"stage", "probe-staytime"},
          {"entries", b.entries},
          {"unpaired", b.unpaired},
          {"outputs", {"staytime.csv"}}};
}

// -------------------------------------------------------------- plot export -

void check_header(const fs::path& path, const std::string& expected) {
  auto in = open_input(path);
  std::string header;
  std::getline(in, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header != expected)
    throw ConfigError("artifact schema mismatch for " + path.string() +
                      ": expected header '" + expected + "', got '" + header +
                      "'");
}

Summary stage_export_plots(const json& cfg, const fs::path& dir) {
  const std::string kind = cfg.at("export").at("kind").get<std::string>();
  std::string input = cfg.at("export").at("input").get<std::string>();

  struct Spec {
    const char* default_input;
    const char* header;
  };
  const std::map<std::string, Spec> specs = {
      {"density-heatmap",
       {"density.csv", "building,bucket_start,unique_devices"}},
      {"flow-diagram", {"flow.csv", "from,to,count,pct"}},
      {"mode-fraction-bars",
       {"modefrac.csv",
        "lo_m,hi_m,trips,non_vehicle,bus,metro,car"}},
      {"stay-histogram",
       {"staytime.csv", "entry,exit,hour,short_stays,long_stays"}},
  };
  auto it = specs.find(kind);
  if (it == specs.end())
    throw ConfigError("unknown export kind: " + kind);
  if (input.empty()) input = (dir / it->second.default_input).string();
  check_header(input, it->second.header);

  const fs::path out_path = dir / (kind + ".gnuplot");
  AtomicFile f(out_path);
  auto& out = f.stream();
  out << "# gnuplot script for " << kind << "; data: " << input << "\n";
  out << "set datafile separator ','\n";
  if (kind == "density-heatmap") {
    out << "set title 'Unique devices per building per hour'\n"
        << "set xlabel 'hour bucket'\nset ylabel 'building'\n"
        << "set view map\nset palette rgb 33,13,10\n"
        << "splot '" << input
        << "' skip 1 using 2:(column(1)):3 with points pt 5 ps 3 palette "
           "notitle\n";
  } else if (kind == "flow-diagram") {
    out << "set title 'Directed link flows (% of overpass-system traffic)'\n"
        << "set style fill solid\nset boxwidth 0.6\n"
        << "set xlabel 'directed link'\nset ylabel 'share (%)'\n"
        << "plot '" << input
        << "' skip 1 using 0:4:xtic(sprintf('%s>%s', "
           "stringcolumn(1), stringcolumn(2))) with boxes notitle\n";
  } else if (kind == "mode-fraction-bars") {
    out << "set title 'Mode fraction vs home-school distance'\n"
        << "set style data histograms\nset style histogram rowstacked\n"
        << "set style fill solid\nset ylabel 'fraction of trips'\n"
        << "set xlabel 'distance bin (m)'\nset key outside\n"
        << "plot '" << input
        << "' skip 1 using 4:xtic(1) title 'non-vehicle', '' using 5 title "
           "'bus', '' using 6 title 'metro', '' using 7 title 'car'\n";
  } else {  // stay-histogram
    out << "set title 'Entrance stays split at the 10-minute threshold'\n"
        << "set style data histograms\nset style histogram rowstacked\n"
        << "set style fill solid\nset ylabel 'devices'\n"
        << "set xlabel 'entry>exit @ hour'\nset key outside\n"
        << "plot '" << input
        << "' skip 1 using 4:xtic(sprintf('%s>%s@%s', stringcolumn(1), "
           "stringcolumn(2), stringcolumn(3))) title '<=10 min', '' using 5 "
           "title '>10 min'\n";
  }
  f.commit();
  std::cerr << "export-plots: wrote " << out_path.string() << "\n";
  return {{"stage", "export-plots"},
          {"kind", kind},
          {"input", input},
          {"outputs", {out_path.filename().string()}}};
}

// -------------------------------------------------------------------- main --

using StageFn = Summary (*)(const json&, const fs::path&);

const std::map<std::string, StageFn> kStages = {
    {"simgen", stage_simgen},
    {"ingest", stage_ingest},
    {"stays", stage_stays},
    {"pois", stage_pois},
    {"trips", stage_trips},
    {"label", stage_label},
    {"train", stage_train},
    {"classify", stage_classify},
    {"odmatrix", stage_odmatrix},
    {"modefrac", stage_modefrac},
    {"fitdist", stage_fitdist},
    {"motifs", stage_motifs},
    {"probe-dedup", stage_probe_dedup},
    {"probe-density", stage_probe_density},
    {"probe-flow", stage_probe_flow},
    {"probe-staytime", stage_probe_staytime},
    {"export-plots", stage_export_plots},
};

void usage(std::ostream& out) {
  out << "usage: urbanflow <stage> [--config <path>] [--set key=value ...]\n"
         "stages:";
  for (const auto& [name, fn] : kStages) out << ' ' << name;
  out << "\n";
}

int run(int argc, char** argv) {
  if (argc < 2) {
    usage(std::cerr);
    return 3;
  }
  const std::string stage = argv[1];
  if (stage == "-h" || stage == "--help") {
    usage(std::cout);
    return 0;
  }
  auto it = kStages.find(stage);
  if (it == kStages.end()) throw ConfigError("unknown stage: " + stage);

  std::string config_path;
  std::vector<std::string> sets;
  for (int i = 2; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      config_path = argv[++i];
    } else if (arg == "--set" && i + 1 < argc) {
      sets.push_back(argv[++i]);
    } else {
      throw ConfigError("unknown argument: " + arg);
    }
  }

  const json schema = default_config();
  json cfg = schema;
  if (!config_path.empty()) {
    auto in = open_input(config_path);
    json user;
    try {
      user = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown_keys(user, schema, "");
    merge_into(cfg, user);
  }
  for (const auto& s : sets) apply_set(cfg, schema, s);
  if (const char* env = std::getenv("URBANFLOW_SEED"))
    cfg["seed"] = std::stoull(env);

  const fs::path dir = cfg.at("output_dir").get<std::string>();
  fs::create_directories(dir);
  DirLock lock(dir);

  Summary summary = it->second(cfg, dir);
  std::cout << summary.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const MissingInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
