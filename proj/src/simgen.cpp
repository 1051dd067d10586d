#include "urbanflow/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <queue>
#include <sstream>

#include <json.hpp>

namespace urbanflow::simgen {

using geo::LatLon;
using nlohmann::json;

namespace {

std::string ap_mac(int idx) {
  char buf[18];
  std::snprintf(buf, sizeof(buf), "02:00:00:%02x:%02x:%02x",
                (idx >> 16) & 0xff, (idx >> 8) & 0xff, idx & 0xff);
  return buf;
}

// Snap line offsets to the stop-spacing grid so crossing lines share nodes.
double snapped(double v, double spacing) {
  return std::round(v / spacing) * spacing;
}

struct NodeKey {
  long x, y;
  bool operator<(const NodeKey& o) const {
    return std::tie(x, y) < std::tie(o.x, o.y);
  }
};

}  // namespace

ApLocationTable SyntheticWorld::ap_table() const {
  ApLocationTable table;
  for (const auto& [mac, pos] : aps)
    table[mac] = {pos.lat, pos.lon, 30.0};
  return table;
}

SyntheticWorld generate_world(const WorldConfig& config) {
  if (config.extent_km <= 0 || config.ap_density_per_km2 <= 0 ||
      config.n_homes < 1 || config.n_schools < 1)
    throw ConfigError("invalid world config");
  if (config.n_bus_lines < 0 || config.n_metro_lines < 0)
    throw ConfigError("negative transit line count");

  SyntheticWorld world;
  world.config = config;
  const double extent = config.extent_km * 1000.0;

  // Shared node pool keyed by grid position.
  std::map<NodeKey, int> node_at;
  auto node_for = [&](double x, double y, const std::string& kind) {
    const NodeKey key{static_cast<long>(std::llround(x)),
                      static_cast<long>(std::llround(y))};
    auto it = node_at.find(key);
    if (it != node_at.end()) return it->second;
    transit::Node n;
    n.id = kind.substr(0, 1) + std::to_string(world.network.nodes.size());
    n.kind = kind;
    n.pos = geo::offset_m(config.origin, x, y);
    const int idx = static_cast<int>(world.network.nodes.size());
    world.network.nodes.push_back(std::move(n));
    node_at[key] = idx;
    return idx;
  };
  auto add_edge = [&](int a, int b, transit::LegMode mode, double speed,
                      double extra_s) {
    transit::Edge e;
    e.from = a;
    e.to = b;
    e.mode = mode;
    e.geometry = {world.network.nodes[a].pos, world.network.nodes[b].pos};
    e.length_m = geo::haversine_m(e.geometry.front(), e.geometry.back());
    e.travel_s = e.length_m / speed + extra_s;
    world.network.edges.push_back(std::move(e));
  };

  // Bus grid: n horizontal + n vertical lines on major corridors.
  const double bs = config.bus_stop_spacing_m;
  for (int i = 0; i < config.n_bus_lines; ++i) {
    const double off = snapped((i + 0.5) * extent / config.n_bus_lines, bs);
    int prev_h = -1, prev_v = -1;
    for (double s = 0; s <= extent + 1; s += bs) {
      const int h = node_for(s, off, "bus_stop");
      if (prev_h >= 0)
        add_edge(prev_h, h, transit::LegMode::Bus, config.bus_speed,
                 config.bus_dwell_s);
      prev_h = h;
      const int v = node_for(off, s, "bus_stop");
      if (prev_v >= 0)
        add_edge(prev_v, v, transit::LegMode::Bus, config.bus_speed,
                 config.bus_dwell_s);
      prev_v = v;
    }
  }
  // Minor street grid for cars, denser than the bus corridors.
  const double rs = config.road_spacing_m;
  for (double off = 0; off <= extent + 1; off += rs) {
    int prev_h = -1, prev_v = -1;
    for (double s = 0; s <= extent + 1; s += bs) {
      const int h = node_for(s, off, "road");
      if (prev_h >= 0)
        add_edge(prev_h, h, transit::LegMode::Car, config.car_speed, 0);
      prev_h = h;
      const int v = node_for(off, s, "road");
      if (prev_v >= 0)
        add_edge(prev_v, v, transit::LegMode::Car, config.car_speed, 0);
      prev_v = v;
    }
  }
  // Metro: alternating horizontal / vertical trunk lines through the center.
  const double ms = config.metro_stop_spacing_m;
  for (int i = 0; i < config.n_metro_lines; ++i) {
    const bool horizontal = i % 2 == 0;
    const double off = snapped(extent / 2, ms);
    int prev = -1;
    for (double s = 0; s <= extent + 1; s += ms) {
      const int n = horizontal ? node_for(s, off, "metro_station")
                               : node_for(off, s, "metro_station");
      if (prev >= 0)
        add_edge(prev, n, transit::LegMode::Metro, config.metro_speed, 0);
      prev = n;
    }
  }

  // Small deterministic spread on edge times so shortest paths are unique;
  // a perfect grid otherwise has many equal-cost staircase routes.
  rng::Rng edge_rng(rng::derive_seed(config.seed, "edge-times"));
  for (auto& e : world.network.edges) e.travel_s *= 1.0 + 0.03 * edge_rng.uniform();

  rng::Rng ap_rng(rng::derive_seed(config.seed, "aps"));
  const int n_aps = ap_rng.poisson(config.ap_density_per_km2 *
                                   config.extent_km * config.extent_km);
  for (int i = 0; i < n_aps; ++i) {
    const double x = ap_rng.uniform(0, extent);
    const double y = ap_rng.uniform(0, extent);
    world.aps.push_back({ap_mac(i), geo::offset_m(config.origin, x, y)});
  }

  rng::Rng place_rng(rng::derive_seed(config.seed, "places"));
  for (int i = 0; i < config.n_homes; ++i)
    world.homes.push_back(geo::offset_m(config.origin,
                                        place_rng.uniform(100, extent - 100),
                                        place_rng.uniform(100, extent - 100)));
  for (int i = 0; i < config.n_schools; ++i)
    world.schools.push_back(
        geo::offset_m(config.origin, place_rng.uniform(100, extent - 100),
                      place_rng.uniform(100, extent - 100)));
  return world;
}

void save_world(std::ostream& out, const SyntheticWorld& world) {
  json cfg = {{"extent_km", world.config.extent_km},
              {"origin", {world.config.origin.lat, world.config.origin.lon}},
              {"n_homes", world.config.n_homes},
              {"n_schools", world.config.n_schools},
              {"n_bus_lines", world.config.n_bus_lines},
              {"bus_stop_spacing_m", world.config.bus_stop_spacing_m},
              {"n_metro_lines", world.config.n_metro_lines},
              {"metro_stop_spacing_m", world.config.metro_stop_spacing_m},
              {"road_spacing_m", world.config.road_spacing_m},
              {"ap_density_per_km2", world.config.ap_density_per_km2},
              {"seed", world.config.seed},
              {"walk_speed", world.config.walk_speed},
              {"bus_speed", world.config.bus_speed},
              {"metro_speed", world.config.metro_speed},
              {"car_speed", world.config.car_speed},
              {"bus_dwell_s", world.config.bus_dwell_s}};
  std::ostringstream net;
  transit::save_network(net, world.network);
  json homes = json::array(), schools = json::array(), aps = json::array();
  for (const auto& h : world.homes) homes.push_back({h.lat, h.lon});
  for (const auto& s : world.schools) schools.push_back({s.lat, s.lon});
  for (const auto& [mac, p] : world.aps)
    aps.push_back({{"mac", mac}, {"lat", p.lat}, {"lon", p.lon}});
  out << json{{"config", cfg},
              {"network", json::parse(net.str())},
              {"homes", homes},
              {"schools", schools},
              {"aps", aps}}
             .dump(1)
      << '\n';
}

SyntheticWorld load_world(std::istream& in) {
  json j;
  in >> j;
  SyntheticWorld world;
  const auto& cfg = j.at("config");
  world.config.extent_km = cfg.at("extent_km").get<double>();
  world.config.origin = {cfg.at("origin")[0].get<double>(),
                         cfg.at("origin")[1].get<double>()};
  world.config.n_homes = cfg.at("n_homes").get<int>();
  world.config.n_schools = cfg.at("n_schools").get<int>();
  world.config.n_bus_lines = cfg.at("n_bus_lines").get<int>();
  world.config.bus_stop_spacing_m = cfg.at("bus_stop_spacing_m").get<double>();
  world.config.n_metro_lines = cfg.at("n_metro_lines").get<int>();
  world.config.metro_stop_spacing_m =
      cfg.at("metro_stop_spacing_m").get<double>();
  world.config.road_spacing_m = cfg.at("road_spacing_m").get<double>();
  world.config.ap_density_per_km2 = cfg.at("ap_density_per_km2").get<double>();
  world.config.seed = cfg.at("seed").get<std::uint64_t>();
  world.config.walk_speed = cfg.at("walk_speed").get<double>();
  world.config.bus_speed = cfg.at("bus_speed").get<double>();
  world.config.metro_speed = cfg.at("metro_speed").get<double>();
  world.config.car_speed = cfg.at("car_speed").get<double>();
  world.config.bus_dwell_s = cfg.at("bus_dwell_s").get<double>();
  std::stringstream net(j.at("network").dump());
  world.network = transit::load_network(net);
  for (const auto& h : j.at("homes"))
    world.homes.push_back({h[0].get<double>(), h[1].get<double>()});
  for (const auto& s : j.at("schools"))
    world.schools.push_back({s[0].get<double>(), s[1].get<double>()});
  for (const auto& a : j.at("aps"))
    world.aps.push_back({a.at("mac").get<std::string>(),
                         {a.at("lat").get<double>(),
                          a.at("lon").get<double>()}});
  return world;
}

namespace {

int distance_band(double dist_m) {
  if (dist_m < 1500) return 0;
  if (dist_m < 4000) return 1;
  if (dist_m < 8000) return 2;
  return 3;
}

Mode pick_mode(const ScheduleConfig& cfg, double dist_m, bool bus_ok,
               bool metro_ok, rng::Rng& rng) {
  const int band = distance_band(dist_m);
  const double u = rng.uniform();
  double acc = 0;
  Mode m = Mode::Car;
  for (int mi = 0; mi < 4; ++mi) {
    acc += cfg.mode_probs[band][mi];
    if (u < acc) {
      m = static_cast<Mode>(mi);
      break;
    }
  }
  // Transit picks degrade to the next-best feasible choice when the stop
  // network isn't within walking reach of both endpoints.
  if (m == Mode::Metro && !metro_ok) m = bus_ok ? Mode::Bus : Mode::Car;
  if (m == Mode::Bus && !bus_ok) m = Mode::Car;
  return m;
}

// Distance from p to the nearest node touched by an edge of the given mode.
double nearest_stop_dist(const SyntheticWorld& world, transit::LegMode mode,
                         const LatLon& p) {
  std::vector<bool> served(world.network.nodes.size(), false);
  for (const auto& e : world.network.edges)
    if (e.mode == mode) served[e.from] = served[e.to] = true;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < world.network.nodes.size(); ++i)
    if (served[i])
      best = std::min(best, geo::haversine_m(p, world.network.nodes[i].pos));
  return best;
}

}  // namespace

std::vector<AgentSchedule> generate_schedules(const SyntheticWorld& world,
                                              const ScheduleConfig& cfg) {
  bool has_bus = false, has_metro = false;
  for (const auto& e : world.network.edges) {
    has_bus |= e.mode == transit::LegMode::Bus;
    has_metro |= e.mode == transit::LegMode::Metro;
  }
  std::vector<AgentSchedule> schedules;
  for (int a = 0; a < cfg.n_agents; ++a) {
    AgentSchedule sched;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "agent%04d", a);
    sched.agent_id = buf;
    rng::Rng rng(rng::derive_seed(cfg.seed, sched.agent_id));
    sched.n_days = cfg.n_days;
    sched.home = static_cast<int>(rng.below(world.homes.size()));
    sched.school = static_cast<int>(rng.below(world.schools.size()));
    const LatLon home = world.homes[sched.home];
    const LatLon school = world.schools[sched.school];
    const double dist = geo::haversine_m(home, school);
    const double kAccessM = 1200;
    const bool bus_ok =
        has_bus &&
        nearest_stop_dist(world, transit::LegMode::Bus, home) <= kAccessM &&
        nearest_stop_dist(world, transit::LegMode::Bus, school) <= kAccessM;
    const bool metro_ok =
        has_metro &&
        nearest_stop_dist(world, transit::LegMode::Metro, home) <= kAccessM &&
        nearest_stop_dist(world, transit::LegMode::Metro, school) <= kAccessM;
    for (int d = 0; d < cfg.n_days; ++d) {
      // Day 0 of kBaseEpoch is a Monday; school days are weekdays.
      if (d % 7 >= 5) continue;
      Journey out;
      out.day = d;
      out.depart_local_s = 7 * 3600 + static_cast<std::int64_t>(rng.below(1800));
      out.to_school = true;
      out.mode = pick_mode(cfg, dist, bus_ok, metro_ok, rng);
      Journey back;
      back.day = d;
      back.depart_local_s =
          14 * 3600 + 1800 + static_cast<std::int64_t>(rng.below(3600));
      back.to_school = false;
      back.mode = pick_mode(cfg, dist, bus_ok, metro_ok, rng);
      if ((out.mode == Mode::Bus || back.mode == Mode::Bus) && !has_bus)
        throw ConfigError("bus journey scheduled but world has no bus lines");
      if ((out.mode == Mode::Metro || back.mode == Mode::Metro) && !has_metro)
        throw ConfigError(
            "metro journey scheduled but world has no metro lines");
      sched.journeys.push_back(out);
      sched.journeys.push_back(back);
    }
    schedules.push_back(std::move(sched));
  }
  return schedules;
}

namespace {

// Piecewise-linear timeline: position and true mode between breakpoints.
struct Breakpoint {
  double t = 0;  // epoch seconds
  LatLon pos;
  Mode mode = Mode::NonVehicle;  // mode of the interval starting here
};

class Timeline {
 public:
  void hold(double until, const LatLon& pos, Mode mode) {
    if (points_.empty() || until > points_.back().t) {
      // The held interval itself carries `mode`: relabel the breakpoint that
      // opens it, since a breakpoint's mode covers the interval it starts.
      if (!points_.empty()) points_.back().mode = mode;
      points_.push_back({until, pos, mode});
    }
  }
  void move(double from_t, const LatLon& a, const LatLon& b, double speed,
            Mode mode) {
    if (points_.empty()) points_.push_back({from_t, a, mode});
    points_.back().mode = mode;
    const double dur = geo::haversine_m(a, b) / speed;
    points_.push_back({points_.back().t + dur, b, mode});
  }
  double end_t() const { return points_.empty() ? 0 : points_.back().t; }

  LatLon position(double t, Mode* mode) const {
    if (t <= points_.front().t) {
      if (mode) *mode = points_.front().mode;
      return points_.front().pos;
    }
    for (std::size_t i = 0; i + 1 < points_.size(); ++i)
      if (t <= points_[i + 1].t) {
        const auto& a = points_[i];
        const auto& b = points_[i + 1];
        if (mode) *mode = a.mode;
        const double f = (t - a.t) / std::max(1e-9, b.t - a.t);
        return {a.pos.lat + f * (b.pos.lat - a.pos.lat),
                a.pos.lon + f * (b.pos.lon - a.pos.lon)};
      }
    if (mode) *mode = Mode::NonVehicle;
    return points_.back().pos;
  }

  void set_start(double t, const LatLon& pos) {
    points_.push_back({t, pos, Mode::NonVehicle});
  }

  // Mode occupying the most time within [t0, t1]; cursor points at a segment
  // no later than t1 (as maintained by sample()).
  Mode dominant_mode(double t0, double t1, std::size_t cursor) const {
    std::size_t i = cursor;
    while (i > 0 && points_[i].t > t0) --i;
    double share[4] = {0, 0, 0, 0};
    for (; i + 1 < points_.size() && points_[i].t < t1; ++i) {
      const double lo = std::max(t0, points_[i].t);
      const double hi = std::min(t1, points_[i + 1].t);
      if (hi > lo) share[static_cast<int>(points_[i].mode)] += hi - lo;
    }
    int best = 0;
    for (int m = 1; m < 4; ++m)
      if (share[m] > share[best]) best = m;
    return static_cast<Mode>(best);
  }

  // Advance an index-based cursor for linear-time sampling.
  LatLon sample(double t, Mode* mode, std::size_t& cursor) const {
    while (cursor + 1 < points_.size() && points_[cursor + 1].t < t) ++cursor;
    if (t <= points_[cursor].t || cursor + 1 >= points_.size()) {
      if (mode) *mode = cursor + 1 >= points_.size() ? Mode::NonVehicle
                                                     : points_[cursor].mode;
      return cursor + 1 >= points_.size() ? points_.back().pos
                                          : points_[cursor].pos;
    }
    const auto& a = points_[cursor];
    const auto& b = points_[cursor + 1];
    if (mode) *mode = a.mode;
    const double f = (t - a.t) / std::max(1e-9, b.t - a.t);
    return {a.pos.lat + f * (b.pos.lat - a.pos.lat),
            a.pos.lon + f * (b.pos.lon - a.pos.lon)};
  }

 private:
  std::vector<Breakpoint> points_;
};

// Mode-restricted shortest path over the world network; returns the node
// sequence of the ride, or empty when no usable path exists. Board/alight
// stops are chosen jointly with the ride: the agent minimizes access walk
// plus ride time over the few nearest stops, like any sane commuter.
std::vector<int> plan_ride(const SyntheticWorld& world, transit::LegMode mode,
                           const LatLon& from, const LatLon& to, int& board,
                           int& alight) {
  const auto& net = world.network;
  const int n = static_cast<int>(net.nodes.size());
  std::vector<bool> served(n, false);
  std::vector<std::vector<std::pair<int, double>>> adj(n);
  for (const auto& e : net.edges) {
    if (e.mode != mode) continue;
    served[e.from] = served[e.to] = true;
    adj[e.from].push_back({e.to, e.travel_s});
    adj[e.to].push_back({e.from, e.travel_s});
  }
  auto access = [&](const LatLon& p) {
    std::vector<std::pair<double, int>> near;
    for (int i = 0; i < n; ++i)
      if (served[i])
        near.push_back({geo::haversine_m(p, net.nodes[i].pos), i});
    std::sort(near.begin(), near.end());
    if (near.size() > 4) near.resize(4);
    return near;
  };
  const auto board_cands = access(from);
  const auto alight_cands = access(to);
  if (board_cands.empty() || alight_cands.empty()) return {};

  const double kWalk = world.config.walk_speed;
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<int> prev(n, -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  for (const auto& [d, i] : board_cands) {
    const double t = d / kWalk;
    if (t < dist[i]) {
      dist[i] = t;
      pq.push({t, i});
    }
  }
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    for (const auto& [v, w] : adj[u])
      if (d + w < dist[v]) {
        dist[v] = d + w;
        prev[v] = u;
        pq.push({dist[v], v});
      }
  }
  alight = -1;
  double best_total = std::numeric_limits<double>::infinity();
  for (const auto& [d, i] : alight_cands) {
    const double total = dist[i] + d / kWalk;
    if (total < best_total) {
      best_total = total;
      alight = i;
    }
  }
  if (alight < 0 || !std::isfinite(best_total)) return {};
  std::vector<int> path;
  for (int u = alight; u != -1; u = prev[u]) path.push_back(u);
  std::reverse(path.begin(), path.end());
  board = path.front();
  if (board == alight) return {};
  return path;
}

void append_journey(Timeline& tl, const SyntheticWorld& world,
                    const LatLon& from, const LatLon& to, Mode mode,
                    rng::Rng& rng) {
  const auto& cfg = world.config;
  if (mode == Mode::NonVehicle) {
    tl.move(tl.end_t(), from, to, cfg.walk_speed, Mode::NonVehicle);
    return;
  }
  const transit::LegMode leg = mode == Mode::Bus     ? transit::LegMode::Bus
                               : mode == Mode::Metro ? transit::LegMode::Metro
                                                     : transit::LegMode::Car;
  const double speed = mode == Mode::Bus     ? cfg.bus_speed
                       : mode == Mode::Metro ? cfg.metro_speed
                                             : cfg.car_speed;
  int board = -1, alight = -1;
  const auto path = plan_ride(world, leg, from, to, board, alight);
  if (path.empty()) {  // fall back to walking
    tl.move(tl.end_t(), from, to, cfg.walk_speed, Mode::NonVehicle);
    return;
  }
  const auto& nodes = world.network.nodes;
  tl.move(tl.end_t(), from, nodes[path.front()].pos, cfg.walk_speed,
          Mode::NonVehicle);
  // Boarding wait (cars depart immediately). The wait at the stop counts as
  // part of the transit leg, matching how the route planner budgets it.
  if (mode != Mode::Car)
    tl.hold(tl.end_t() + 30 + static_cast<double>(rng.below(150)),
            nodes[path.front()].pos, mode);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    tl.move(tl.end_t(), nodes[path[i]].pos, nodes[path[i + 1]].pos, speed,
            mode);
    if (mode == Mode::Bus && i + 2 < path.size())
      tl.hold(tl.end_t() + cfg.bus_dwell_s, nodes[path[i + 1]].pos, mode);
  }
  tl.move(tl.end_t(), nodes[path.back()].pos, to, cfg.walk_speed,
          Mode::NonVehicle);
}

}  // namespace

SimResult simulate_agents(const SyntheticWorld& world,
                          const std::vector<AgentSchedule>& schedules,
                          double noise_sigma_m, double noise_tau_s) {
  SimResult result;

  // Spatial grid over the AP field; cells sized to the sensing radius.
  const double kSenseRadius = 250;
  const geo::LocalFrame frame(world.config.origin);
  std::map<std::pair<int, int>, std::vector<int>> ap_grid;
  std::vector<std::pair<double, double>> ap_xy(world.aps.size());
  for (std::size_t i = 0; i < world.aps.size(); ++i) {
    double x, y;
    frame.to_xy(world.aps[i].second, x, y);
    ap_xy[i] = {x, y};
    ap_grid[{static_cast<int>(std::floor(x / kSenseRadius)),
             static_cast<int>(std::floor(y / kSenseRadius))}]
        .push_back(static_cast<int>(i));
  }
  auto nearby_aps = [&](double x, double y,
                        std::vector<std::pair<double, int>>& out) {
    out.clear();
    const int cx = static_cast<int>(std::floor(x / kSenseRadius));
    const int cy = static_cast<int>(std::floor(y / kSenseRadius));
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy) {
        auto it = ap_grid.find({cx + dx, cy + dy});
        if (it == ap_grid.end()) continue;
        for (int ai : it->second) {
          const double ddx = x - ap_xy[ai].first, ddy = y - ap_xy[ai].second;
          const double d = std::sqrt(ddx * ddx + ddy * ddy);
          if (d <= kSenseRadius) out.push_back({d, ai});
        }
      }
  };

  for (const auto& sched : schedules)
    if (sched.home >= static_cast<int>(world.homes.size()) ||
        sched.school >= static_cast<int>(world.schools.size()))
      throw ConfigError("schedule references missing home or school");

  // Agents are independent given the immutable world; simulate in parallel
  // into per-agent slots and merge in schedule order.
  std::vector<std::vector<RawScanRecord>> agent_scans(schedules.size());
  std::vector<AgentTruth> agent_truth(schedules.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t si = 0; si < schedules.size(); ++si) {
    const auto& sched = schedules[si];
    rng::Rng rng(rng::derive_seed(world.config.seed, "sim:" + sched.agent_id));
    const LatLon home = world.homes[sched.home];
    const LatLon school = world.schools[sched.school];

    AgentTruth truth;
    truth.home = home;
    truth.school = school;

    int horizon = sched.n_days;
    for (const auto& j : sched.journeys) horizon = std::max(horizon, j.day + 1);
    const std::int64_t t0 = kBaseEpoch;
    const std::int64_t t1 = kBaseEpoch + horizon * 86400LL;

    Timeline tl;
    tl.set_start(static_cast<double>(t0), home);
    truth.stays.push_back({0, t0, t1});
    LatLon at = home;
    for (const auto& j : sched.journeys) {
      const double depart =
          static_cast<double>(kBaseEpoch + j.day * 86400 + j.depart_local_s);
      const LatLon from = j.to_school ? home : school;
      const LatLon to = j.to_school ? school : home;
      if (depart < tl.end_t()) continue;  // schedule slip; skip
      tl.hold(depart, from, Mode::NonVehicle);
      const double trip_start = tl.end_t();
      append_journey(tl, world, from, to, j.mode, rng);
      truth.stays.back().end_ts = static_cast<std::int64_t>(trip_start);
      at = to;
      ++truth.journey_count;
      truth.journey_modes.push_back(j.mode);
      truth.stays.push_back({j.to_school ? 1 : 0,
                             static_cast<std::int64_t>(tl.end_t()), t1});
    }
    tl.hold(static_cast<double>(t1), at, Mode::NonVehicle);

    // Sample the timeline and emit scans.
    std::size_t cursor = 0;
    const double rho =
        noise_tau_s > 0
            ? std::exp(-static_cast<double>(sched.scan_cadence_s) / noise_tau_s)
            : 0.0;
    const double kick = noise_sigma_m * std::sqrt(1.0 - rho * rho);
    double ex = noise_sigma_m > 0 ? rng.normal(0, noise_sigma_m) : 0.0;
    double ey = noise_sigma_m > 0 ? rng.normal(0, noise_sigma_m) : 0.0;
    std::vector<std::pair<double, int>> cand;
    for (std::int64_t ts = t0; ts < t1; ts += sched.scan_cadence_s) {
      Mode mode;
      const LatLon pos = tl.sample(static_cast<double>(ts), &mode, cursor);
      // Label with the dominant mode over the elapsed scan interval: scan
      // samples summarize the interval since the previous scan, and interval
      // labels are what measurement-side consumers can be graded against.
      if (ts > t0)
        mode = tl.dominant_mode(
            static_cast<double>(ts - sched.scan_cadence_s),
            static_cast<double>(ts), cursor);
      TruthSample sample;
      sample.ts = ts;
      sample.pos = pos;
      sample.mode = mode;
      sample.poi_id = -1;
      // Inside a scripted stay interval?
      for (const auto& st : truth.stays)
        if (ts >= st.start_ts && ts < st.end_ts) {
          sample.poi_id = st.poi_id;
          break;
        }
      truth.samples.push_back(sample);

      // AP visibility tracks the true position; noise perturbs the measured
      // signal strengths (drifting multipath error), not the resolved fix.
      if (noise_sigma_m > 0) {
        ex = rho * ex + rng.normal(0, kick);
        ey = rho * ey + rng.normal(0, kick);
      }
      double px, py;
      frame.to_xy(pos, px, py);
      nearby_aps(px, py, cand);
      if (cand.empty()) continue;
      std::sort(cand.begin(), cand.end());
      RawScanRecord rec;
      rec.device_id = sched.agent_id;
      rec.timestamp = ts;
      for (std::size_t i = 0; i < cand.size() && i < 5; ++i) {
        const int ai = cand[i].second;
        const double ddx = (px + ex) - ap_xy[ai].first;
        const double ddy = (py + ey) - ap_xy[ai].second;
        const double d = std::sqrt(ddx * ddx + ddy * ddy);
        rec.observations.push_back(
            {world.aps[ai].first, static_cast<int>(std::lround(-30 - d))});
      }
      agent_scans[si].push_back(std::move(rec));
    }
    agent_truth[si] = std::move(truth);
  }

  for (std::size_t si = 0; si < schedules.size(); ++si) {
    result.scans.insert(result.scans.end(),
                        std::make_move_iterator(agent_scans[si].begin()),
                        std::make_move_iterator(agent_scans[si].end()));
    result.truth[schedules[si].agent_id] = std::move(agent_truth[si]);
  }

  std::stable_sort(result.scans.begin(), result.scans.end(),
                   [](const RawScanRecord& a, const RawScanRecord& b) {
                     return std::tie(a.timestamp, a.device_id) <
                            std::tie(b.timestamp, b.device_id);
                   });
  return result;
}

void write_truth_csv(std::ostream& out,
                     const std::map<std::string, AgentTruth>& truth) {
  out << "agent,ts,true_lat,true_lon,true_mode,poi_id\n";
  char buf[64];
  for (const auto& [agent, tr] : truth)
    for (const auto& s : tr.samples) {
      std::snprintf(buf, sizeof(buf), "%.10g,%.10g", s.pos.lat, s.pos.lon);
      out << agent << ',' << s.ts << ',' << buf << ',' << mode_name(s.mode)
          << ',' << s.poi_id << '\n';
    }
}

// ---- Building-wide probe scenario ----

namespace {

std::string building_name(int i) { return std::string(1, char('A' + i)); }

struct Walker {
  std::string tag;
  double start_t = 0;
  // Waypoints in local meters (x along the chain, y off-axis), with dwell
  // holds encoded as repeated positions.
  std::vector<std::pair<double, std::pair<double, double>>> path;  // (t, xy)
};

}  // namespace

ProbeWorld generate_probe_world(const ProbeScenarioConfig& cfg) {
  if (cfg.n_buildings < 2 || cfg.n_buildings > 26)
    throw ConfigError("probe world needs 2..26 buildings");
  ProbeWorld world;
  for (int i = 0; i < cfg.n_buildings; ++i) {
    const std::string id = building_name(i);
    world.topology.buildings[id] = "Building " + id;
    if (i > 0) {
      std::string a = building_name(i - 1), b = id;
      if (b < a) std::swap(a, b);
      world.topology.links.insert({a, b});
    }
    for (int e = 1; e <= 2; ++e) {
      probe_flow::Entrance ent;
      ent.building_id = id;
      ent.entrance_id = id + std::to_string(e);
      const std::string gw = "gw_" + ent.entrance_id;
      ent.gateways.push_back(gw);
      const double x =
          i * cfg.building_spacing_m + (e == 1 ? -60.0 : 60.0);
      world.gateway_pos[gw] = geo::offset_m(cfg.origin, x, 0);
      world.topology.entrances.push_back(std::move(ent));
    }
  }
  return world;
}

ProbeSimResult simulate_pedestrians(const ProbeWorld& world,
                                    const ProbeScenarioConfig& cfg) {
  ProbeSimResult result;
  rng::Rng rng(rng::derive_seed(cfg.seed, "pedestrians"));
  const double walk = 1.4;
  std::vector<Walker> walkers;

  auto bx = [&](int b) { return b * cfg.building_spacing_m; };

  auto add_commuter = [&](int idx, double t0, bool downward) {
    Walker w;
    w.tag = "c" + std::to_string(idx);
    w.start_t = t0;
    int from, to;
    if (downward) {
      from = static_cast<int>(rng.below(2));                       // A or B
      to = 2 + static_cast<int>(rng.below(cfg.n_buildings - 2));   // C..end
    } else {
      from = 2 + static_cast<int>(rng.below(cfg.n_buildings - 2));
      to = static_cast<int>(rng.below(2));
    }
    if (from == to) to = downward ? to + 1 : to - 1;
    const double x0 = bx(from), x1 = bx(to);
    double t = t0;
    w.path.push_back({t, {x0, 0}});
    t += std::fabs(x1 - x0) / walk;
    w.path.push_back({t, {x1, 0}});
    walkers.push_back(std::move(w));
    // Scripted ground-truth transitions.
    const int step = x1 > x0 ? 1 : -1;
    for (int b = from; b != to; b += step) {
      const double tb =
          t0 + std::fabs(bx(b + step) - x0) / walk;
      result.truth.transitions.push_back(
          {building_name(b), building_name(b + step),
           static_cast<std::int64_t>(tb)});
    }
  };

  for (int i = 0; i < cfg.n_commuters_morning; ++i) {
    const double t0 = kBaseEpoch + 8 * 3600 + rng.uniform(0, 2 * 3600);
    add_commuter(i, t0, rng.uniform() < cfg.downward_frac_morning);
  }
  for (int i = 0; i < cfg.n_commuters_evening; ++i) {
    const double t0 = kBaseEpoch + 17 * 3600 + rng.uniform(0, 2 * 3600);
    add_commuter(cfg.n_commuters_morning + i, t0,
                 rng.uniform() < cfg.downward_frac_evening);
  }

  // Building C visitors: enter via C1; pass-through exits C2 quickly,
  // dwellers exit C1 after a long stay.
  const double xc = bx(2);
  for (int i = 0; i < cfg.n_building_c_visitors; ++i) {
    Walker w;
    w.tag = "v" + std::to_string(i);
    const bool pass_through = rng.uniform() < cfg.pass_through_frac;
    (pass_through ? result.truth.pass_through : result.truth.dwellers)++;
    double t = kBaseEpoch + 11 * 3600 + rng.uniform(0, 5 * 3600);
    w.start_t = t;
    auto push = [&](double x, double y) {
      const auto& last = w.path.empty()
                             ? std::make_pair(x, y)
                             : w.path.back().second;
      const double dx = x - last.first, dy = y - last.second;
      if (!w.path.empty()) t += std::sqrt(dx * dx + dy * dy) / walk;
      w.path.push_back({t, {x, y}});
    };
    push(xc - 130, 0);  // approach C1 from outside gateway range
    push(xc - 60, 0);   // at entrance C1
    push(xc, 80);       // inside, out of gateway range
    t += static_cast<double>(pass_through ? cfg.short_stay_s
                                          : cfg.long_stay_s);
    w.path.push_back({t, {xc, 80}});
    if (pass_through) {
      push(xc + 60, 0);   // exit via C2
      push(xc + 130, 0);
    } else {
      push(xc - 60, 0);   // exit via C1
      push(xc - 130, 0);
    }
    walkers.push_back(std::move(w));
  }

  // Sample each walker's path; a record per contiguous in-range span.
  geo::LocalFrame frame(world.gateway_pos.begin()->second);
  std::map<std::string, std::pair<double, double>> gw_xy;
  for (const auto& [gw, pos] : world.gateway_pos) {
    double x, y;
    frame.to_xy(pos, x, y);
    gw_xy[gw] = {x, y};
  }
  std::map<std::string, std::pair<std::string, std::string>> gw_meta;
  for (const auto& e : world.topology.entrances)
    for (const auto& gw : e.gateways)
      gw_meta[gw] = {e.building_id, e.entrance_id};
  // Gateways sit at y = 0 of the same frame as the walker coordinates.
  const double x_off = [&] {
    // frame reference is some gateway; recover its x offset in chain coords.
    const auto& [gw, xy] = *gw_xy.begin();
    const auto& [building, entrance] = gw_meta.at(gw);
    const int b = building[0] - 'A';
    const double chain_x =
        b * cfg.building_spacing_m + (entrance.back() == '1' ? -60.0 : 60.0);
    return chain_x - xy.first;
  }();

  for (const auto& w : walkers) {
    const std::string mac_hash = [&] {
      char buf[17];
      std::snprintf(buf, sizeof(buf), "%016llx",
                    static_cast<unsigned long long>(rng::fnv1a(
                        w.tag, rng::fnv1a(cfg.mac_salt))));
      return std::string(buf);
    }();
    struct Span {
      std::int64_t in = 0, out = 0;
      int rssi = -100;
      bool open = false;
    };
    std::map<std::string, Span> spans;
    const double t_end = w.path.back().first;
    std::size_t seg = 0;
    for (double t = w.start_t; t <= t_end + cfg.sample_step_s;
         t += static_cast<double>(cfg.sample_step_s)) {
      const double tc = std::min(t, t_end);
      while (seg + 1 < w.path.size() && w.path[seg + 1].first < tc) ++seg;
      const auto& a = w.path[seg];
      const auto& b = w.path[std::min(seg + 1, w.path.size() - 1)];
      const double f = b.first > a.first
                           ? std::clamp((tc - a.first) / (b.first - a.first),
                                        0.0, 1.0)
                           : 0.0;
      const double x = a.second.first + f * (b.second.first - a.second.first);
      const double y =
          a.second.second + f * (b.second.second - a.second.second);
      for (const auto& [gw, xy] : gw_xy) {
        const double dx = (x - x_off) - xy.first, dy = y - xy.second;
        const double d = std::sqrt(dx * dx + dy * dy);
        auto& span = spans[gw];
        if (d <= cfg.gateway_range_m) {
          const std::int64_t ts = static_cast<std::int64_t>(tc);
          if (!span.open) {
            span.open = true;
            span.in = ts;
            span.rssi = -100;
          }
          span.out = ts;
          span.rssi = std::max(
              span.rssi, static_cast<int>(std::lround(-30 - d)));
        } else if (span.open) {
          result.records.push_back({mac_hash, gw, gw_meta.at(gw).first,
                                    gw_meta.at(gw).second, span.in, span.out,
                                    span.rssi});
          span.open = false;
        }
      }
    }
    for (auto& [gw, span] : spans)
      if (span.open)
        result.records.push_back({mac_hash, gw, gw_meta.at(gw).first,
                                  gw_meta.at(gw).second, span.in, span.out,
                                  span.rssi});
  }

  std::sort(result.records.begin(), result.records.end(),
            [](const ProbeRecord& a, const ProbeRecord& b) {
              return std::tie(a.check_in_ts, a.mac_hash, a.gateway_id) <
                     std::tie(b.check_in_ts, b.mac_hash, b.gateway_id);
            });
  std::sort(result.truth.transitions.begin(), result.truth.transitions.end(),
            [](const auto& a, const auto& b) {
              return std::get<2>(a) < std::get<2>(b);
            });
  return result;
}

}  // namespace urbanflow::simgen
