#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "urbanflow/rng.hpp"
#include "urbanflow/types.hpp"

namespace urbanflow::aggregate {

struct InsufficientDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- OD matrices ----

struct OdTrip {
  std::string origin_zone;
  std::string dest_zone;
  double travel_s = 0;
};

struct OdMatrix {
  struct Cell {
    std::int64_t count = 0;
    double mean_travel_s = 0;
  };
  std::map<std::pair<std::string, std::string>, Cell> cells;
  std::int64_t total = 0;
};

OdMatrix build_od_matrix(const std::vector<OdTrip>& trips);

struct GridZoning {
  geo::LatLon origin;   // south-west corner of the extent
  double cell_m = 1000;
  double extent_m = 0;  // square extent; outside -> "external"
};

std::string grid_zone(const GridZoning& z, const geo::LatLon& p);

// Long-form CSV: origin,dest,count,mean_travel_s
void write_od_csv(std::ostream& out, const OdMatrix& m);

// ---- Mode fractions vs home-school distance ----

// Dominant mode of a trip: greatest in-trip duration; ties resolved
// metro > bus > car > non_vehicle.
Mode dominant_mode(const std::vector<Mode>& point_modes,
                   const std::vector<std::int64_t>& timestamps);

struct ModeFractionBin {
  double lo_m = 0;
  double hi_m = 0;
  std::int64_t trips = 0;
  double fraction[4] = {0, 0, 0, 0};  // indexed by Mode
};

struct ModedTrip {
  std::string device_id;
  Mode dominant = Mode::NonVehicle;
};

// Trips of devices lacking a home-school distance are excluded and counted.
std::vector<ModeFractionBin> mode_fraction_by_distance(
    const std::vector<ModedTrip>& trips,
    const std::map<std::string, double>& home_school_dist_m, double bin_m,
    std::size_t* excluded = nullptr);

void write_mode_fraction_csv(std::ostream& out,
                             const std::vector<ModeFractionBin>& bins);

// ---- Truncated power-law fitting ----

struct TruncatedPowerLawFit {
  double alpha = 0;
  double kappa = 0;
  double x_min = 0;
  double log_likelihood = 0;
  std::size_t n = 0;
};

// MLE of p(x) proportional to x^-alpha * exp(-x/kappa) on [x_min, inf);
// coarse grid search then Nelder-Mead refinement. Needs >= 100 samples.
TruncatedPowerLawFit fit_truncated_power_law(const std::vector<double>& samples,
                                             double x_min);

double truncated_power_law_loglik(const std::vector<double>& samples,
                                  double x_min, double alpha, double kappa);

// Rejection sampler, used by tests and the simulator.
std::vector<double> sample_truncated_power_law(std::size_t n, double alpha,
                                               double kappa, double x_min,
                                               rng::Rng& rng);

void write_fit_json(std::ostream& out, const TruncatedPowerLawFit& fit);

// ---- Daily motifs ----

inline constexpr int kMaxMotifNodes = 6;

// Directed simple graph of up to kMaxMotifNodes nodes, canonicalized by
// exhaustive permutation. Isomorphic graphs share a canonical id.
std::string canonical_motif_id(int n_nodes,
                               const std::vector<std::pair<int, int>>& edges);

struct MotifHistogram {
  std::map<std::string, std::int64_t> counts;
  std::int64_t complex_days = 0;  // days whose graph exceeds the node cap
};

// Per device-day PoI transition graphs; a stay belongs to the local day of
// its start timestamp.
MotifHistogram extract_daily_motifs(const std::vector<StayPoint>& stays,
                                    const std::vector<int>& stay_to_poi,
                                    int tz_offset_s,
                                    int max_nodes = kMaxMotifNodes);

void merge(MotifHistogram& into, const MotifHistogram& other);
void write_motif_csv(std::ostream& out, const MotifHistogram& h);

}  // namespace urbanflow::aggregate
