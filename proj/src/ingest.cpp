#include "urbanflow/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "urbanflow/csv.hpp"

namespace urbanflow::ingest {

using nlohmann::json;

namespace {

bool valid_mac(const std::string& s) {
  if (s.size() != 17) return false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i % 3 == 2) {
      if (s[i] != ':') return false;
    } else {
      const char c = s[i];
      if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
    }
  }
  return true;
}

bool parse_line(const std::string& line, RawScanRecord& rec) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return false;
  if (!j.contains("device") || !j["device"].is_string()) return false;
  if (!j.contains("ts") || !j["ts"].is_number_integer()) return false;
  if (!j.contains("aps") || !j["aps"].is_array() || j["aps"].empty())
    return false;
  rec.device_id = j["device"].get<std::string>();
  rec.timestamp = j["ts"].get<std::int64_t>();
  if (rec.timestamp <= 0) return false;
  rec.observations.clear();
  for (const auto& a : j["aps"]) {
    if (!a.is_object() || !a.contains("mac") || !a["mac"].is_string() ||
        !a.contains("rssi") || !a["rssi"].is_number_integer())
      return false;
    ApObservation obs;
    obs.ap_mac = a["mac"].get<std::string>();
    obs.rssi = a["rssi"].get<int>();
    if (!valid_mac(obs.ap_mac)) return false;
    rec.observations.push_back(std::move(obs));
  }
  return true;
}

}  // namespace

ParseResult parse_scan_log(std::istream& in) {
  if (!in) throw IngestError("unreadable scan log stream");
  ParseResult res;
  std::string line;
  std::size_t total = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++total;
    RawScanRecord rec;
    if (parse_line(line, rec))
      res.records.push_back(std::move(rec));
    else
      ++res.malformed_lines;
  }
  if (in.bad()) throw IngestError("I/O error while reading scan log");
  if (total > 0 && res.malformed_lines * 2 > total)
    throw CorruptInputError("more than 50% malformed lines (" +
                            std::to_string(res.malformed_lines) + "/" +
                            std::to_string(total) + ")");
  return res;
}

std::string to_jsonl(const RawScanRecord& rec) {
  json aps = json::array();
  for (const auto& o : rec.observations)
    aps.push_back({{"mac", o.ap_mac}, {"rssi", o.rssi}});
  json j = {{"device", rec.device_id}, {"ts", rec.timestamp}, {"aps", aps}};
  return j.dump();
}

void write_scan_log(std::ostream& out,
                    const std::vector<RawScanRecord>& recs) {
  for (const auto& r : recs) out << to_jsonl(r) << '\n';
}

ApLocationTable load_ap_table(std::istream& in) {
  ApLocationTable table;
  csv::Reader reader(in, /*has_header=*/true);
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() != 4) throw IngestError("AP table row needs 4 fields");
    ApLocation loc;
    loc.lat = std::stod(row[1]);
    loc.lon = std::stod(row[2]);
    loc.horizontal_uncertainty_m = std::stod(row[3]);
    if (!geo::valid_coords(loc.lat, loc.lon) ||
        loc.horizontal_uncertainty_m <= 0)
      throw IngestError("invalid AP table entry for " + row[0]);
    table[row[0]] = loc;
  }
  return table;
}

void save_ap_table(std::ostream& out, const ApLocationTable& table) {
  out << "mac,lat,lon,uncertainty_m\n";
  for (const auto& [mac, loc] : table)
    out << mac << ',' << csv::fmt(loc.lat) << ',' << csv::fmt(loc.lon) << ','
        << csv::fmt(loc.horizontal_uncertainty_m) << '\n';
}

ResolveResult resolve_locations(const std::vector<RawScanRecord>& records,
                                const ApLocationTable& table) {
  if (table.empty()) throw ConfigError("AP location table is empty");
  ResolveResult res;
  for (const auto& rec : records) {
    double wsum = 0, lat = 0, lon = 0;
    for (const auto& obs : rec.observations) {
      auto it = table.find(obs.ap_mac);
      if (it == table.end()) continue;
      const double w = 1.0 / (1.0 + std::max(0, -30 - obs.rssi));
      wsum += w;
      lat += w * it->second.lat;
      lon += w * it->second.lon;
    }
    if (wsum == 0) {
      ++res.dropped_unknown_ap;
      continue;
    }
    LocationPoint p;
    p.device_id = rec.device_id;
    p.timestamp = rec.timestamp;
    p.lat = lat / wsum;
    p.lon = lon / wsum;
    res.traces[p.device_id].push_back(std::move(p));
  }
  for (auto& [dev, trace] : res.traces) {
    std::stable_sort(trace.begin(), trace.end(),
                     [](const LocationPoint& a, const LocationPoint& b) {
                       return a.timestamp < b.timestamp;
                     });
    recompute_kinematics(trace);
  }
  return res;
}

void recompute_kinematics(std::vector<LocationPoint>& trace) {
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (i == 0) {
      trace[i].speed_mps = 0;
      trace[i].accel_mps2 = 0;
      continue;
    }
    const double dt =
        static_cast<double>(trace[i].timestamp - trace[i - 1].timestamp);
    const double dist = geo::haversine_m(trace[i - 1].pos(), trace[i].pos());
    trace[i].speed_mps = dt > 0 ? dist / dt : 0;
    trace[i].accel_mps2 =
        (i >= 2 && dt > 0)
            ? (trace[i].speed_mps - trace[i - 1].speed_mps) / dt
            : 0;
  }
}

std::vector<LocationPoint> filter_anomalies(
    const std::vector<LocationPoint>& trace, double max_speed,
    FilterStats* stats) {
  std::vector<LocationPoint> kept;
  kept.reserve(trace.size());
  for (const auto& p : trace) {
    if (!geo::valid_coords(p.lat, p.lon)) continue;
    if (!kept.empty()) {
      if (p.timestamp == kept.back().timestamp) continue;  // keep first
      const double dt =
          static_cast<double>(p.timestamp - kept.back().timestamp);
      const double dist = geo::haversine_m(kept.back().pos(), p.pos());
      if (dist / dt > max_speed) continue;
    }
    kept.push_back(p);
  }
  if (stats) stats->removed += trace.size() - kept.size();
  recompute_kinematics(kept);
  return kept;
}

TraceSet filter_anomalies(const TraceSet& traces, double max_speed,
                          FilterStats* stats) {
  TraceSet out;
  for (const auto& [dev, trace] : traces)
    out[dev] = filter_anomalies(trace, max_speed, stats);
  return out;
}

std::vector<LocationPoint> interpolate_gaps(
    const std::vector<LocationPoint>& trace, std::int64_t max_gap,
    std::int64_t step) {
  if (step <= 0 || max_gap < step)
    throw ConfigError("interpolate_gaps requires step > 0 and max_gap >= step");
  std::vector<LocationPoint> out;
  out.reserve(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (i > 0) {
      const std::int64_t gap = trace[i].timestamp - trace[i - 1].timestamp;
      if (gap > step && gap <= max_gap) {
        for (std::int64_t t = trace[i - 1].timestamp + step;
             t < trace[i].timestamp; t += step) {
          const double f =
              static_cast<double>(t - trace[i - 1].timestamp) / gap;
          LocationPoint p;
          p.device_id = trace[i].device_id;
          p.timestamp = t;
          p.lat = trace[i - 1].lat + f * (trace[i].lat - trace[i - 1].lat);
          p.lon = trace[i - 1].lon + f * (trace[i].lon - trace[i - 1].lon);
          p.flag = QualityFlag::Interpolated;
          out.push_back(std::move(p));
        }
      }
    }
    out.push_back(trace[i]);
  }
  recompute_kinematics(out);
  // Restore original kinematics on source points so they pass unchanged.
  std::size_t j = 0;
  for (const auto& src : trace) {
    while (j < out.size() && out[j].timestamp != src.timestamp) ++j;
    if (j < out.size()) {
      out[j].speed_mps = src.speed_mps;
      out[j].accel_mps2 = src.accel_mps2;
    }
  }
  return out;
}

TraceSet interpolate_gaps(const TraceSet& traces, std::int64_t max_gap,
                          std::int64_t step) {
  TraceSet out;
  for (const auto& [dev, trace] : traces)
    out[dev] = interpolate_gaps(trace, max_gap, step);
  return out;
}

void write_points_csv(std::ostream& out, const TraceSet& traces) {
  out << "device,ts,lat,lon,speed_mps,accel_mps2,flag\n";
  for (const auto& [dev, trace] : traces)
    for (const auto& p : trace)
      out << dev << ',' << p.timestamp << ',' << csv::fmt(p.lat) << ','
          << csv::fmt(p.lon) << ',' << csv::fmt(p.speed_mps) << ','
          << csv::fmt(p.accel_mps2) << ','
          << (p.flag == QualityFlag::Interpolated ? "interpolated" : "ok")
          << '\n';
}

TraceSet read_points_csv(std::istream& in) {
  TraceSet traces;
  csv::Reader reader(in, /*has_header=*/true);
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() != 7) throw IngestError("points CSV row needs 7 fields");
    LocationPoint p;
    p.device_id = row[0];
    p.timestamp = std::stoll(row[1]);
    p.lat = std::stod(row[2]);
    p.lon = std::stod(row[3]);
    p.speed_mps = std::stod(row[4]);
    p.accel_mps2 = std::stod(row[5]);
    p.flag = row[6] == "interpolated" ? QualityFlag::Interpolated
                                      : QualityFlag::Ok;
    traces[p.device_id].push_back(std::move(p));
  }
  return traces;
}

}  // namespace urbanflow::ingest
