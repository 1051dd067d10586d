#include "urbanflow/transit.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <queue>
#include <set>

#include <json.hpp>

namespace urbanflow::transit {

using nlohmann::json;

int TransitNetwork::node_index(const std::string& id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

void TransitNetwork::bounding_box(geo::LatLon& lo, geo::LatLon& hi) const {
  lo = {90, 180};
  hi = {-90, -180};
  for (const auto& n : nodes) {
    lo.lat = std::min(lo.lat, n.pos.lat);
    lo.lon = std::min(lo.lon, n.pos.lon);
    hi.lat = std::max(hi.lat, n.pos.lat);
    hi.lon = std::max(hi.lon, n.pos.lon);
  }
}

namespace {

LegMode parse_leg_mode(const std::string& s) {
  if (s == "walk") return LegMode::Walk;
  if (s == "bus") return LegMode::Bus;
  if (s == "metro") return LegMode::Metro;
  if (s == "car") return LegMode::Car;
  throw ConfigError("unknown transit edge mode: " + s);
}

}  // namespace

TransitNetwork load_network(std::istream& in) {
  json j;
  in >> j;
  TransitNetwork net;
  std::map<std::string, int> index;
  for (const auto& n : j.at("nodes")) {
    Node node;
    node.id = n.at("id").get<std::string>();
    node.kind = n.at("kind").get<std::string>();
    node.pos = {n.at("lat").get<double>(), n.at("lon").get<double>()};
    index[node.id] = static_cast<int>(net.nodes.size());
    net.nodes.push_back(std::move(node));
  }
  for (const auto& e : j.at("edges")) {
    Edge edge;
    edge.from = index.at(e.at("from").get<std::string>());
    edge.to = index.at(e.at("to").get<std::string>());
    edge.mode = parse_leg_mode(e.at("mode").get<std::string>());
    for (const auto& p : e.at("geometry"))
      edge.geometry.push_back({p[0].get<double>(), p[1].get<double>()});
    edge.travel_s = e.at("travel_s").get<double>();
    edge.length_m = e.at("length_m").get<double>();
    if (edge.travel_s <= 0) throw ConfigError("edge travel time must be > 0");
    net.edges.push_back(std::move(edge));
  }
  return net;
}

void save_network(std::ostream& out, const TransitNetwork& net) {
  json nodes = json::array();
  for (const auto& n : net.nodes)
    nodes.push_back({{"id", n.id},
                     {"kind", n.kind},
                     {"lat", n.pos.lat},
                     {"lon", n.pos.lon}});
  json edges = json::array();
  for (const auto& e : net.edges) {
    json geom = json::array();
    for (const auto& p : e.geometry) geom.push_back({p.lat, p.lon});
    edges.push_back({{"from", net.nodes[e.from].id},
                     {"to", net.nodes[e.to].id},
                     {"mode", leg_mode_name(e.mode)},
                     {"geometry", geom},
                     {"travel_s", e.travel_s},
                     {"length_m", e.length_m}});
  }
  out << json{{"nodes", nodes}, {"edges", edges}}.dump(1) << '\n';
}

namespace {

struct Arc {
  int to;
  LegMode mode;
  double duration_s;
  double length_m;
  std::vector<geo::LatLon> geometry;
};

struct Graph {
  std::vector<std::vector<int>> adj;  // node -> arc ids
  std::vector<Arc> arcs;
  std::vector<geo::LatLon> pos;

  void add_arc(int from, const Arc& a) {
    adj[from].push_back(static_cast<int>(arcs.size()));
    arcs.push_back(a);
  }
};

std::vector<geo::LatLon> straight(const geo::LatLon& a, const geo::LatLon& b) {
  return {a, b};
}

// Dijkstra over arcs, skipping banned arcs / nodes. Returns arc sequence or
// empty when unreachable (src == dst yields empty too; callers special-case).
std::vector<int> dijkstra(const Graph& g, const std::vector<int>& tails,
                          int src, int dst, const std::set<int>& banned_arcs,
                          const std::vector<bool>& banned_nodes) {
  const int n = static_cast<int>(g.adj.size());
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<int> via_arc(n, -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[src] = 0;
  pq.push({0, src});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    if (u == dst) break;
    for (int ai : g.adj[u]) {
      if (banned_arcs.count(ai)) continue;
      const Arc& a = g.arcs[ai];
      if (banned_nodes[a.to]) continue;
      const double nd = d + a.duration_s;
      if (nd < dist[a.to]) {
        dist[a.to] = nd;
        via_arc[a.to] = ai;
        pq.push({nd, a.to});
      }
    }
  }
  if (via_arc[dst] < 0) return {};
  std::vector<int> path;
  int u = dst;
  while (u != src) {
    const int ai = via_arc[u];
    path.push_back(ai);
    u = tails[ai];
  }
  std::reverse(path.begin(), path.end());
  return path;
}

double path_duration(const Graph& g, const std::vector<int>& path) {
  double d = 0;
  for (int ai : path) d += g.arcs[ai].duration_s;
  return d;
}

RouteCandidate to_candidate(const Graph& g, const std::vector<int>& path) {
  RouteCandidate rc;
  for (int ai : path) {
    const Arc& a = g.arcs[ai];
    if (rc.legs.empty() || rc.legs.back().mode != a.mode) {
      RouteLeg leg;
      leg.mode = a.mode;
      leg.polyline = a.geometry;
      leg.expected_duration_s = a.duration_s;
      leg.length_m = a.length_m;
      if (a.mode == LegMode::Bus || a.mode == LegMode::Metro) {
        leg.expected_duration_s += kBoardingWaitS;
        rc.total_duration_s += kBoardingWaitS;
      }
      rc.legs.push_back(std::move(leg));
    } else {
      RouteLeg& leg = rc.legs.back();
      leg.polyline.insert(leg.polyline.end(), a.geometry.begin() + 1,
                          a.geometry.end());
      leg.expected_duration_s += a.duration_s;
      leg.length_m += a.length_m;
    }
    rc.total_duration_s += a.duration_s;
    rc.total_length_m += a.length_m;
  }
  return rc;
}

std::vector<int> arc_tails(const Graph& g) {
  std::vector<int> tail(g.arcs.size(), -1);
  for (std::size_t v = 0; v < g.adj.size(); ++v)
    for (int ai : g.adj[v]) tail[ai] = static_cast<int>(v);
  return tail;
}

}  // namespace

namespace {

// Yen's k-shortest arc paths.
std::vector<std::vector<int>> yen(const Graph& g, const std::vector<int>& tails,
                                  int src, int dst, int want) {
  std::vector<bool> no_banned_nodes(g.adj.size(), false);
  std::vector<std::vector<int>> accepted;
  auto first = dijkstra(g, tails, src, dst, {}, no_banned_nodes);
  if (first.empty()) return accepted;
  accepted.push_back(first);
  // Candidate pool, ordered by duration then path for determinism.
  std::set<std::pair<double, std::vector<int>>> pool;
  while (static_cast<int>(accepted.size()) < want) {
    const auto& prev = accepted.back();
    for (std::size_t spur = 0; spur < prev.size(); ++spur) {
      const int spur_node = tails[prev[spur]];
      std::set<int> banned_arcs;
      for (const auto& p : accepted)
        if (p.size() > spur &&
            std::equal(p.begin(), p.begin() + spur, prev.begin()))
          banned_arcs.insert(p[spur]);
      std::vector<bool> banned_nodes(g.adj.size(), false);
      for (std::size_t i = 0; i < spur; ++i)
        banned_nodes[tails[prev[i]]] = true;
      auto tail_path =
          dijkstra(g, tails, spur_node, dst, banned_arcs, banned_nodes);
      if (tail_path.empty()) continue;
      std::vector<int> full(prev.begin(), prev.begin() + spur);
      full.insert(full.end(), tail_path.begin(), tail_path.end());
      pool.insert({path_duration(g, full), full});
    }
    bool advanced = false;
    while (!pool.empty()) {
      auto it = pool.begin();
      auto cand = it->second;
      pool.erase(it);
      if (std::find(accepted.begin(), accepted.end(), cand) ==
          accepted.end()) {
        accepted.push_back(cand);
        advanced = true;
        break;
      }
    }
    if (!advanced) break;
  }
  return accepted;
}

}  // namespace

std::vector<RouteCandidate> enumerate_routes(const TransitNetwork& net,
                                             const geo::LatLon& origin,
                                             const geo::LatLon& dest, int k,
                                             const RoutingOptions& opt) {
  if (k <= 0) return {};
  const double od_dist = geo::haversine_m(origin, dest);
  if (od_dist < 1.0) {
    RouteCandidate rc;
    RouteLeg leg;
    leg.mode = LegMode::Walk;
    leg.polyline = {origin, dest};
    rc.legs.push_back(std::move(leg));
    return {rc};
  }

  const int n = static_cast<int>(net.nodes.size());

  // One graph per travel profile: a car trip never hops onto a train
  // mid-route, and transit riders don't borrow car arcs.
  auto build = [&](bool with_bus, bool with_metro, bool with_car, int& src,
                   int& dst) {
    Graph g;
    g.adj.resize(n + 2);
    g.pos.reserve(n + 2);
    for (const auto& node : net.nodes) g.pos.push_back(node.pos);
    src = n;
    dst = n + 1;
    g.pos.push_back(origin);
    g.pos.push_back(dest);

    std::vector<bool> used(n, false);
    for (const auto& e : net.edges) {
      if ((e.mode == LegMode::Bus && !with_bus) ||
          (e.mode == LegMode::Metro && !with_metro) ||
          (e.mode == LegMode::Car && !with_car))
        continue;
      if (with_car && e.mode != LegMode::Car) continue;
      used[e.from] = used[e.to] = true;
      Arc fwd{e.to, e.mode, e.travel_s, e.length_m, e.geometry};
      g.add_arc(e.from, fwd);
      Arc rev{e.from, e.mode, e.travel_s, e.length_m,
              {e.geometry.rbegin(), e.geometry.rend()}};
      g.add_arc(e.to, rev);
    }
    // Implicit walk transfers between nearby stops (transit only).
    if (!with_car)
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
          if (!used[i] || !used[j]) continue;
          const double d = geo::haversine_m(g.pos[i], g.pos[j]);
          if (d <= opt.transfer_radius_m) {
            // Co-located stops (shared interchange) still need a nonzero hop.
            const double dur = std::max(d, 1.0) / kWalkSpeedMps;
            g.add_arc(i,
                      {j, LegMode::Walk, dur, d, straight(g.pos[i], g.pos[j])});
            g.add_arc(j,
                      {i, LegMode::Walk, dur, d, straight(g.pos[j], g.pos[i])});
          }
        }
    // Access links: origin/dest to their nearest served stops.
    auto add_access = [&](int endpoint, bool outbound) {
      std::vector<std::pair<double, int>> near;
      for (int i = 0; i < n; ++i)
        if (used[i])
          near.push_back({geo::haversine_m(g.pos[endpoint], g.pos[i]), i});
      std::sort(near.begin(), near.end());
      int added = 0;
      for (const auto& [d, i] : near) {
        if (d > opt.max_access_dist_m || added >= opt.max_access_stops) break;
        if (outbound)
          g.add_arc(endpoint, {i, LegMode::Walk, d / kWalkSpeedMps, d,
                               straight(g.pos[endpoint], g.pos[i])});
        else
          g.add_arc(i, {endpoint, LegMode::Walk, d / kWalkSpeedMps, d,
                        straight(g.pos[i], g.pos[endpoint])});
        ++added;
      }
    };
    add_access(src, true);
    add_access(dst, false);
    return g;
  };

  std::vector<RouteCandidate> out;
  std::set<std::vector<LegMode>> seen_modes;
  auto push = [&](RouteCandidate rc) {
    std::vector<LegMode> modes;
    for (const auto& leg : rc.legs) modes.push_back(leg.mode);
    if (seen_modes.insert(modes).second) out.push_back(std::move(rc));
  };

  // Walk-only candidate.
  if (od_dist <= opt.max_access_dist_m) {
    RouteCandidate rc;
    RouteLeg leg;
    leg.mode = LegMode::Walk;
    leg.polyline = {origin, dest};
    leg.length_m = od_dist;
    leg.expected_duration_s = od_dist / kWalkSpeedMps;
    rc.total_length_m = od_dist;
    rc.total_duration_s = leg.expected_duration_s;
    rc.legs.push_back(std::move(leg));
    push(std::move(rc));
  }

  // Car profile: shortest drive with walk access.
  {
    int src, dst;
    Graph g = build(false, false, true, src, dst);
    const std::vector<int> tails = arc_tails(g);
    for (const auto& path : yen(g, tails, src, dst, 2))
      push(to_candidate(g, path));
  }

  // Transit profiles: single-mode first so pure bus / pure metro always
  // surface, then the mixed network for interchange routes.
  const struct {
    bool bus, metro;
    int want, keep;
  } profiles[] = {{true, false, 8, 2}, {false, true, 8, 2}, {true, true, k * 4, k}};
  for (const auto& pr : profiles) {
    int src, dst;
    Graph g = build(pr.bus, pr.metro, false, src, dst);
    const std::vector<int> tails = arc_tails(g);
    const std::size_t before = out.size();
    for (const auto& path : yen(g, tails, src, dst, pr.want)) {
      push(to_candidate(g, path));
      if (out.size() >= before + static_cast<std::size_t>(pr.keep)) break;
    }
  }

  std::stable_sort(out.begin(), out.end(),
                   [](const RouteCandidate& a, const RouteCandidate& b) {
                     return a.total_duration_s < b.total_duration_s;
                   });
  return out;
}

}  // namespace urbanflow::transit
