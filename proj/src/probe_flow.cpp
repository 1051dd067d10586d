#include "urbanflow/probe_flow.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "urbanflow/csv.hpp"

namespace urbanflow::probe_flow {

using nlohmann::json;

SiteTopology load_topology(std::istream& in) {
  json j;
  in >> j;
  SiteTopology topo;
  for (const auto& b : j.at("buildings"))
    topo.buildings[b.at("id").get<std::string>()] =
        b.value("name", b.at("id").get<std::string>());
  for (const auto& l : j.at("links")) {
    std::string a = l[0].get<std::string>(), b = l[1].get<std::string>();
    if (!topo.buildings.count(a) || !topo.buildings.count(b))
      throw ConfigError("topology link references unknown building");
    if (b < a) std::swap(a, b);
    topo.links.insert({a, b});
  }
  for (const auto& e : j.at("entrances")) {
    Entrance ent;
    ent.building_id = e.at("building").get<std::string>();
    ent.entrance_id = e.at("entrance").get<std::string>();
    for (const auto& g : e.at("gateways"))
      ent.gateways.push_back(g.get<std::string>());
    if (!topo.buildings.count(ent.building_id))
      throw ConfigError("entrance references unknown building");
    topo.entrances.push_back(std::move(ent));
  }
  return topo;
}

void save_topology(std::ostream& out, const SiteTopology& topo) {
  json buildings = json::array();
  for (const auto& [id, name] : topo.buildings)
    buildings.push_back({{"id", id}, {"name", name}});
  json links = json::array();
  for (const auto& [a, b] : topo.links) links.push_back({a, b});
  json entrances = json::array();
  for (const auto& e : topo.entrances)
    entrances.push_back({{"building", e.building_id},
                         {"entrance", e.entrance_id},
                         {"gateways", e.gateways}});
  out << json{{"buildings", buildings},
              {"links", links},
              {"entrances", entrances}}
             .dump(1)
      << '\n';
}

std::vector<ProbeRecord> parse_probe_log(std::istream& in,
                                         std::size_t* malformed) {
  if (!in) throw IngestError("unreadable probe log stream");
  std::vector<ProbeRecord> out;
  std::size_t bad = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("mac_hash") ||
        !j.contains("building") || !j.contains("in") || !j.contains("out")) {
      ++bad;
      continue;
    }
    ProbeRecord r;
    r.mac_hash = j["mac_hash"].get<std::string>();
    r.gateway_id = j.value("gw", "");
    r.building_id = j["building"].get<std::string>();
    r.entrance_id =
        j.contains("entrance") && j["entrance"].is_string()
            ? j["entrance"].get<std::string>()
            : "";
    r.check_in_ts = j["in"].get<std::int64_t>();
    r.check_out_ts = j["out"].get<std::int64_t>();
    r.rssi = j.value("rssi", 0);
    if (r.check_out_ts < r.check_in_ts) {
      ++bad;
      continue;
    }
    out.push_back(std::move(r));
  }
  if (malformed) *malformed = bad;
  return out;
}

void write_probe_log(std::ostream& out,
                     const std::vector<ProbeRecord>& recs) {
  for (const auto& r : recs) {
    json j = {{"mac_hash", r.mac_hash}, {"gw", r.gateway_id},
              {"building", r.building_id},
              {"entrance", r.entrance_id.empty()
                               ? json(nullptr)
                               : json(r.entrance_id)},
              {"in", r.check_in_ts},   {"out", r.check_out_ts},
              {"rssi", r.rssi}};
    out << j.dump() << '\n';
  }
}

namespace {

using GroupKey = std::tuple<std::string, std::string, std::string>;

GroupKey group_key(const ProbeRecord& r, DedupGranularity g) {
  return {r.mac_hash, r.building_id,
          g == DedupGranularity::Entrance ? r.entrance_id : std::string()};
}

}  // namespace

std::vector<ProbeRecord> dedup_records(const std::vector<ProbeRecord>& records,
                                       const SiteTopology& topo,
                                       std::int64_t merge_gap,
                                       DedupGranularity granularity,
                                       std::size_t* rejected) {
  std::map<GroupKey, std::vector<ProbeRecord>> groups;
  std::size_t bad = 0;
  for (const auto& r : records) {
    if (!topo.buildings.count(r.building_id)) {
      ++bad;
      continue;
    }
    groups[group_key(r, granularity)].push_back(r);
  }
  if (rejected) *rejected = bad;

  // Groups are independent; merge each in parallel, concatenate, then apply
  // the deterministic global sort.
  std::vector<std::vector<ProbeRecord>*> group_list;
  group_list.reserve(groups.size());
  for (auto& [key, group] : groups) group_list.push_back(&group);
  std::vector<std::vector<ProbeRecord>> merged(group_list.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t gi = 0; gi < group_list.size(); ++gi) {
    auto& group = *group_list[gi];
    std::sort(group.begin(), group.end(),
              [](const ProbeRecord& a, const ProbeRecord& b) {
                return std::tie(a.check_in_ts, a.check_out_ts) <
                       std::tie(b.check_in_ts, b.check_out_ts);
              });
    ProbeRecord cur = group.front();
    for (std::size_t i = 1; i < group.size(); ++i) {
      const auto& r = group[i];
      if (r.check_in_ts - cur.check_out_ts <= merge_gap) {
        cur.check_out_ts = std::max(cur.check_out_ts, r.check_out_ts);
        cur.rssi = std::max(cur.rssi, r.rssi);
        // Keep a deterministic representative gateway for the merged span.
        cur.gateway_id = std::min(cur.gateway_id, r.gateway_id);
        if (granularity == DedupGranularity::Building) cur.entrance_id = "";
      } else {
        merged[gi].push_back(cur);
        cur = r;
      }
    }
    merged[gi].push_back(cur);
  }
  std::vector<ProbeRecord> out;
  for (auto& m : merged)
    out.insert(out.end(), std::make_move_iterator(m.begin()),
               std::make_move_iterator(m.end()));
  std::sort(out.begin(), out.end(),
            [](const ProbeRecord& a, const ProbeRecord& b) {
              return std::tie(a.mac_hash, a.building_id, a.entrance_id,
                              a.check_in_ts) <
                     std::tie(b.mac_hash, b.building_id, b.entrance_id,
                              b.check_in_ts);
            });
  return out;
}

DensitySeries density_series(const std::vector<ProbeRecord>& records,
                             std::int64_t granularity_s) {
  if (granularity_s <= 0) throw ConfigError("density granularity must be > 0");
  std::map<std::pair<std::string, std::int64_t>, std::set<std::string>> sets;
  for (const auto& r : records) {
    const std::int64_t first = r.check_in_ts / granularity_s;
    // A zero-length interval still touches its containing bucket.
    std::int64_t last = r.check_out_ts / granularity_s;
    if (r.check_out_ts % granularity_s == 0 && r.check_out_ts > r.check_in_ts)
      --last;  // [in, out) style intersection at exact bucket boundary
    for (std::int64_t b = first; b <= last; ++b)
      sets[{r.building_id, b * granularity_s}].insert(r.mac_hash);
  }
  DensitySeries series;
  for (const auto& [key, macs] : sets)
    series[key.first][key.second] = static_cast<std::int64_t>(macs.size());
  return series;
}

void write_density_csv(std::ostream& out, const DensitySeries& series) {
  out << "building,bucket_start,unique_devices\n";
  for (const auto& [building, buckets] : series)
    for (const auto& [start, count] : buckets)
      out << building << ',' << start << ',' << count << '\n';
}

FlowMatrix flow_matrix(const std::vector<ProbeRecord>& records,
                       std::int64_t period_start, std::int64_t period_end,
                       const SiteTopology& topo,
                       std::int64_t max_transition_gap,
                       FlowNormalization norm) {
  FlowMatrix m;
  m.period_start = period_start;
  m.period_end = period_end;

  std::map<std::string, std::vector<const ProbeRecord*>> per_mac;
  for (const auto& r : records) {
    if (r.check_in_ts < period_start || r.check_in_ts >= period_end) continue;
    per_mac[r.mac_hash].push_back(&r);
  }
  for (auto& [mac, recs] : per_mac) {
    std::sort(recs.begin(), recs.end(),
              [](const ProbeRecord* a, const ProbeRecord* b) {
                return a->check_in_ts < b->check_in_ts;
              });
    for (std::size_t i = 0; i + 1 < recs.size(); ++i) {
      const auto& a = *recs[i];
      const auto& b = *recs[i + 1];
      if (a.building_id == b.building_id) continue;
      if (b.check_in_ts - a.check_out_ts > max_transition_gap) continue;
      if (topo.linked(a.building_id, b.building_id)) {
        ++m.counts[{a.building_id, b.building_id}];
        ++m.total;
      } else {
        ++m.off_network;
      }
    }
  }
  if (m.total > 0) {
    for (const auto& [key, count] : m.counts) {
      double denom = static_cast<double>(m.total);
      if (norm == FlowNormalization::PerLink) {
        auto rev = m.counts.find({key.second, key.first});
        denom = static_cast<double>(
            count + (rev != m.counts.end() ? rev->second : 0));
      }
      m.percentages[key] = 100.0 * static_cast<double>(count) / denom;
    }
  }
  return m;
}

void write_flow_csv(std::ostream& out, const FlowMatrix& m) {
  out << "from,to,count,pct\n";
  for (const auto& [key, count] : m.counts) {
    const auto pct = m.percentages.find(key);
    out << key.first << ',' << key.second << ',' << count << ','
        << csv::fmt(pct != m.percentages.end() ? pct->second : 0) << '\n';
  }
}

EntranceStayBreakdown entrance_stay_breakdown(
    const std::vector<ProbeRecord>& records, const std::string& building_id,
    std::int64_t stay_threshold, std::int64_t session_timeout,
    int tz_offset_s) {
  EntranceStayBreakdown out;
  std::map<std::string, std::vector<const ProbeRecord*>> per_mac;
  for (const auto& r : records) {
    if (r.building_id != building_id || r.entrance_id.empty()) continue;
    per_mac[r.mac_hash].push_back(&r);
  }
  for (auto& [mac, recs] : per_mac) {
    std::sort(recs.begin(), recs.end(),
              [](const ProbeRecord* a, const ProbeRecord* b) {
                return a->check_in_ts < b->check_in_ts;
              });
    for (std::size_t i = 0; i < recs.size();) {
      const auto& entry = *recs[i];
      ++out.entries;
      if (i + 1 < recs.size() &&
          recs[i + 1]->check_in_ts - entry.check_out_ts <= session_timeout) {
        const auto& exit = *recs[i + 1];
        const std::int64_t stay = exit.check_in_ts - entry.check_out_ts;
        StayBreakdownKey key;
        key.entry_entrance = entry.entrance_id;
        key.exit_entrance = exit.entrance_id;
        key.hour = static_cast<int>(
            ((entry.check_in_ts + tz_offset_s) % 86400 + 86400) % 86400 /
            3600);
        auto& cell = out.cells[key];
        if (stay <= stay_threshold)
          ++cell.short_stays;
        else
          ++cell.long_stays;
        i += 2;
      } else {
        ++out.unpaired;
        ++i;
      }
    }
  }
  return out;
}

void write_stay_breakdown_csv(std::ostream& out,
                              const EntranceStayBreakdown& b) {
  out << "entry,exit,hour,short_stays,long_stays\n";
  for (const auto& [key, cell] : b.cells)
    out << key.entry_entrance << ',' << key.exit_entrance << ',' << key.hour
        << ',' << cell.short_stays << ',' << cell.long_stays << '\n';
  out << "unpaired,,," << b.unpaired << ",0\n";
}

namespace ref {

std::vector<ProbeRecord> dedup_interval_union(
    const std::vector<ProbeRecord>& records, const SiteTopology& topo,
    std::int64_t merge_gap, DedupGranularity granularity) {
  // Repeatedly merge any mergeable pair until a fixed point.
  std::map<GroupKey, std::vector<ProbeRecord>> groups;
  for (const auto& r : records) {
    if (!topo.buildings.count(r.building_id)) continue;
    groups[group_key(r, granularity)].push_back(r);
  }
  std::vector<ProbeRecord> out;
  for (auto& [key, group] : groups) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t i = 0; i < group.size() && !changed; ++i)
        for (std::size_t j = i + 1; j < group.size() && !changed; ++j) {
          const std::int64_t gap =
              std::max(group[i].check_in_ts, group[j].check_in_ts) -
              std::min(group[i].check_out_ts, group[j].check_out_ts);
          if (gap <= merge_gap) {
            group[i].check_in_ts =
                std::min(group[i].check_in_ts, group[j].check_in_ts);
            group[i].check_out_ts =
                std::max(group[i].check_out_ts, group[j].check_out_ts);
            group[i].rssi = std::max(group[i].rssi, group[j].rssi);
            group[i].gateway_id =
                std::min(group[i].gateway_id, group[j].gateway_id);
            if (granularity == DedupGranularity::Building)
              group[i].entrance_id = "";
            group.erase(group.begin() + j);
            changed = true;
          }
        }
    }
    out.insert(out.end(), group.begin(), group.end());
  }
  std::sort(out.begin(), out.end(),
            [](const ProbeRecord& a, const ProbeRecord& b) {
              return std::tie(a.mac_hash, a.building_id, a.entrance_id,
                              a.check_in_ts) <
                     std::tie(b.mac_hash, b.building_id, b.entrance_id,
                              b.check_in_ts);
            });
  return out;
}

}  // namespace ref

}  // namespace urbanflow::probe_flow
