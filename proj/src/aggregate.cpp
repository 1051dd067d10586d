#include "urbanflow/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "urbanflow/csv.hpp"

namespace urbanflow::aggregate {

OdMatrix build_od_matrix(const std::vector<OdTrip>& trips) {
  OdMatrix m;
  std::map<std::pair<std::string, std::string>, double> time_sums;
  for (const auto& t : trips) {
    auto& cell = m.cells[{t.origin_zone, t.dest_zone}];
    ++cell.count;
    time_sums[{t.origin_zone, t.dest_zone}] += t.travel_s;
    ++m.total;
  }
  for (auto& [key, cell] : m.cells)
    cell.mean_travel_s = time_sums[key] / cell.count;
  return m;
}

std::string grid_zone(const GridZoning& z, const geo::LatLon& p) {
  geo::LocalFrame frame(z.origin);
  double x, y;
  frame.to_xy(p, x, y);
  if (x < 0 || y < 0 || (z.extent_m > 0 && (x >= z.extent_m || y >= z.extent_m)))
    return "external";
  return "g" + std::to_string(static_cast<long>(x / z.cell_m)) + "_" +
         std::to_string(static_cast<long>(y / z.cell_m));
}

void write_od_csv(std::ostream& out, const OdMatrix& m) {
  out << "origin,dest,count,mean_travel_s\n";
  for (const auto& [key, cell] : m.cells)
    out << key.first << ',' << key.second << ',' << cell.count << ','
        << csv::fmt(cell.mean_travel_s) << '\n';
}

Mode dominant_mode(const std::vector<Mode>& point_modes,
                   const std::vector<std::int64_t>& timestamps) {
  double durations[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i + 1 < point_modes.size(); ++i)
    durations[static_cast<int>(point_modes[i])] +=
        static_cast<double>(timestamps[i + 1] - timestamps[i]);
  if (point_modes.size() == 1) durations[static_cast<int>(point_modes[0])] = 1;
  // Tie order: metro > bus > car > non_vehicle.
  const Mode order[4] = {Mode::Metro, Mode::Bus, Mode::Car, Mode::NonVehicle};
  Mode best = Mode::NonVehicle;
  double best_d = -1;
  for (Mode m : order)
    if (durations[static_cast<int>(m)] > best_d) {
      best_d = durations[static_cast<int>(m)];
      best = m;
    }
  return best;
}

std::vector<ModeFractionBin> mode_fraction_by_distance(
    const std::vector<ModedTrip>& trips,
    const std::map<std::string, double>& home_school_dist_m, double bin_m,
    std::size_t* excluded) {
  if (bin_m <= 0) throw ConfigError("mode-fraction bin width must be > 0");
  std::map<int, ModeFractionBin> bins;
  std::size_t skipped = 0;
  for (const auto& t : trips) {
    auto it = home_school_dist_m.find(t.device_id);
    if (it == home_school_dist_m.end()) {
      ++skipped;
      continue;
    }
    const int b = static_cast<int>(it->second / bin_m);
    auto& bin = bins[b];
    bin.lo_m = b * bin_m;
    bin.hi_m = (b + 1) * bin_m;
    ++bin.trips;
    bin.fraction[static_cast<int>(t.dominant)] += 1;
  }
  if (excluded) *excluded = skipped;
  std::vector<ModeFractionBin> out;
  for (auto& [b, bin] : bins) {
    for (double& f : bin.fraction) f /= bin.trips;
    out.push_back(bin);
  }
  return out;
}

void write_mode_fraction_csv(std::ostream& out,
                             const std::vector<ModeFractionBin>& bins) {
  out << "lo_m,hi_m,trips,non_vehicle,bus,metro,car\n";
  for (const auto& b : bins)
    out << csv::fmt(b.lo_m) << ',' << csv::fmt(b.hi_m) << ',' << b.trips << ','
        << csv::fmt(b.fraction[0]) << ',' << csv::fmt(b.fraction[1]) << ','
        << csv::fmt(b.fraction[2]) << ',' << csv::fmt(b.fraction[3]) << '\n';
}

namespace {

// G(alpha, s) = integral over [s, inf) of t^-alpha * exp(-t) dt, computed in
// log space (t = e^v) where the integrand is smooth; composite Simpson,
// refined until the relative change is below 1e-10.
double upper_integral(double alpha, double s) {
  const double v0 = std::log(s);
  double v1 = std::log(std::max(s * 2, 60.0));
  // Push the cutoff out until the boundary integrand is negligible.
  auto integrand = [&](double v) {
    const double t = std::exp(v);
    return std::exp((1.0 - alpha) * v - t);
  };
  while (integrand(v1) > 1e-320 && v1 < 700) v1 += 1.0;

  double prev = 0;
  for (int steps = 128; steps <= 1 << 20; steps *= 2) {
    const double h = (v1 - v0) / steps;
    double sum = integrand(v0) + integrand(v1);
    for (int i = 1; i < steps; ++i)
      sum += integrand(v0 + i * h) * (i % 2 ? 4.0 : 2.0);
    const double val = sum * h / 3.0;
    if (steps > 128 && std::fabs(val - prev) <= 1e-10 * std::fabs(val))
      return val;
    prev = val;
  }
  return prev;
}

double log_normalizer(double alpha, double kappa, double x_min) {
  // Z = kappa^(1-alpha) * G(alpha, x_min / kappa)
  return (1.0 - alpha) * std::log(kappa) +
         std::log(upper_integral(alpha, x_min / kappa));
}

struct SampleStats {
  double sum_log = 0;
  double sum = 0;
  std::size_t n = 0;
};

double loglik(const SampleStats& st, double x_min, double alpha,
              double kappa) {
  return -alpha * st.sum_log - st.sum / kappa -
         static_cast<double>(st.n) * log_normalizer(alpha, kappa, x_min);
}

}  // namespace

double truncated_power_law_loglik(const std::vector<double>& samples,
                                  double x_min, double alpha, double kappa) {
  SampleStats st;
  for (double x : samples) {
    st.sum_log += std::log(x);
    st.sum += x;
    ++st.n;
  }
  return loglik(st, x_min, alpha, kappa);
}

TruncatedPowerLawFit fit_truncated_power_law(
    const std::vector<double>& samples, double x_min) {
  if (x_min <= 0) throw ConfigError("x_min must be positive");
  SampleStats st;
  double x_max = 0, x_lo = std::numeric_limits<double>::infinity();
  for (double x : samples) {
    if (x < x_min) continue;
    st.sum_log += std::log(x);
    st.sum += x;
    ++st.n;
    x_max = std::max(x_max, x);
    x_lo = std::min(x_lo, x);
  }
  if (st.n < 100)
    throw InsufficientDataError("need >= 100 samples >= x_min, got " +
                                std::to_string(st.n));
  if (x_max == x_lo) throw FitError("degenerate samples (all equal)");

  const double kAlphaMin = 1.000001, kAlphaMax = 6.0;
  const double lk_min = std::log(x_min * 1.01);
  const double lk_max = std::log(x_max * 100.0);

  // Coarse grid.
  double best_a = kAlphaMin, best_lk = lk_min;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (double a = kAlphaMin; a <= kAlphaMax; a += 0.05)
    for (double lk = lk_min; lk <= lk_max; lk += (lk_max - lk_min) / 48.0) {
      const double ll = loglik(st, x_min, a, std::exp(lk));
      if (ll > best_ll) {
        best_ll = ll;
        best_a = a;
        best_lk = lk;
      }
    }
  const double grid_ll = best_ll;

  // Nelder-Mead in (alpha, log kappa).
  auto f = [&](double a, double lk) {
    a = std::clamp(a, kAlphaMin, kAlphaMax);
    lk = std::clamp(lk, lk_min, lk_max + 5.0);
    return loglik(st, x_min, a, std::exp(lk));
  };
  struct Vertex {
    double a, lk, ll;
  };
  std::vector<Vertex> simplex = {
      {best_a, best_lk, best_ll},
      {best_a + 0.05, best_lk, f(best_a + 0.05, best_lk)},
      {best_a, best_lk + 0.1, f(best_a, best_lk + 0.1)}};
  for (int iter = 0; iter < 600; ++iter) {
    std::sort(simplex.begin(), simplex.end(),
              [](const Vertex& x, const Vertex& y) { return x.ll > y.ll; });
    if (std::fabs(simplex[0].a - simplex[2].a) < 1e-10 &&
        std::fabs(simplex[0].lk - simplex[2].lk) < 1e-10)
      break;
    const double ca = (simplex[0].a + simplex[1].a) / 2;
    const double clk = (simplex[0].lk + simplex[1].lk) / 2;
    const Vertex& worst = simplex[2];
    Vertex refl{ca + (ca - worst.a), clk + (clk - worst.lk), 0};
    refl.ll = f(refl.a, refl.lk);
    if (refl.ll > simplex[0].ll) {
      Vertex exp_{ca + 2 * (ca - worst.a), clk + 2 * (clk - worst.lk), 0};
      exp_.ll = f(exp_.a, exp_.lk);
      simplex[2] = exp_.ll > refl.ll ? exp_ : refl;
    } else if (refl.ll > simplex[1].ll) {
      simplex[2] = refl;
    } else {
      Vertex con{ca + 0.5 * (worst.a - ca), clk + 0.5 * (worst.lk - clk), 0};
      con.ll = f(con.a, con.lk);
      if (con.ll > worst.ll) {
        simplex[2] = con;
      } else {
        for (int i = 1; i < 3; ++i) {
          simplex[i].a = (simplex[i].a + simplex[0].a) / 2;
          simplex[i].lk = (simplex[i].lk + simplex[0].lk) / 2;
          simplex[i].ll = f(simplex[i].a, simplex[i].lk);
        }
      }
    }
  }
  std::sort(simplex.begin(), simplex.end(),
            [](const Vertex& x, const Vertex& y) { return x.ll > y.ll; });

  TruncatedPowerLawFit fit;
  fit.alpha = std::clamp(simplex[0].a, kAlphaMin, kAlphaMax);
  fit.kappa = std::exp(simplex[0].lk);
  fit.x_min = x_min;
  fit.log_likelihood = std::max(simplex[0].ll, grid_ll);
  fit.n = st.n;
  return fit;
}

std::vector<double> sample_truncated_power_law(std::size_t n, double alpha,
                                               double kappa, double x_min,
                                               rng::Rng& rng) {
  // Propose from the pure power law on [x_min, inf) (inverse CDF), accept
  // with probability exp(-(x - x_min) / kappa).
  std::vector<double> out;
  out.reserve(n);
  while (out.size() < n) {
    const double u = rng.uniform();
    const double x = x_min * std::pow(1.0 - u, -1.0 / (alpha - 1.0));
    if (rng.uniform() <= std::exp(-(x - x_min) / kappa)) out.push_back(x);
  }
  return out;
}

void write_fit_json(std::ostream& out, const TruncatedPowerLawFit& fit) {
  nlohmann::json j = {{"alpha", fit.alpha},
                      {"kappa", fit.kappa},
                      {"x_min", fit.x_min},
                      {"loglik", fit.log_likelihood},
                      {"n", fit.n}};
  out << j.dump() << '\n';
}

std::string canonical_motif_id(int n_nodes,
                               const std::vector<std::pair<int, int>>& edges) {
  if (n_nodes < 1 || n_nodes > kMaxMotifNodes)
    throw ConfigError("motif node count out of range");
  // Adjacency bits under the identity ordering.
  std::vector<std::vector<bool>> adj(n_nodes, std::vector<bool>(n_nodes));
  for (const auto& [u, v] : edges)
    if (u != v) adj[u][v] = true;

  std::vector<int> perm(n_nodes);
  std::iota(perm.begin(), perm.end(), 0);
  std::string best;
  do {
    std::string bits;
    bits.reserve(n_nodes * n_nodes);
    for (int i = 0; i < n_nodes; ++i)
      for (int j = 0; j < n_nodes; ++j)
        bits.push_back(adj[perm[i]][perm[j]] ? '1' : '0');
    if (best.empty() || bits < best) best = std::move(bits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return "n" + std::to_string(n_nodes) + ":" + best;
}

MotifHistogram extract_daily_motifs(const std::vector<StayPoint>& stays,
                                    const std::vector<int>& stay_to_poi,
                                    int tz_offset_s, int max_nodes) {
  MotifHistogram hist;
  // Group stays by local day of start_ts.
  std::map<std::int64_t, std::vector<int>> by_day;
  for (std::size_t i = 0; i < stays.size(); ++i) {
    const std::int64_t t = stays[i].start_ts + tz_offset_s;
    const std::int64_t day = t >= 0 ? t / 86400 : (t - 86399) / 86400;
    by_day[day].push_back(static_cast<int>(i));
  }
  for (auto& [day, idx] : by_day) {
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      return stays[a].start_ts < stays[b].start_ts;
    });
    // Visit sequence -> compact node ids, consecutive repeats collapsed.
    std::map<int, int> node_of;
    std::vector<int> seq;
    for (int i : idx) {
      const int poi = stay_to_poi[i];
      if (!seq.empty() && seq.back() == poi) continue;
      seq.push_back(poi);
      node_of.emplace(poi, static_cast<int>(node_of.size()));
    }
    if (seq.empty()) continue;
    if (static_cast<int>(node_of.size()) > max_nodes) {
      ++hist.complex_days;
      continue;
    }
    std::vector<std::pair<int, int>> edges;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i)
      edges.push_back({node_of[seq[i]], node_of[seq[i + 1]]});
    ++hist.counts[canonical_motif_id(static_cast<int>(node_of.size()), edges)];
  }
  return hist;
}

void merge(MotifHistogram& into, const MotifHistogram& other) {
  for (const auto& [id, c] : other.counts) into.counts[id] += c;
  into.complex_days += other.complex_days;
}

void write_motif_csv(std::ostream& out, const MotifHistogram& h) {
  out << "canonical_id,count\n";
  for (const auto& [id, c] : h.counts) out << id << ',' << c << '\n';
  if (h.complex_days > 0) out << "complex," << h.complex_days << '\n';
}

}  // namespace urbanflow::aggregate
