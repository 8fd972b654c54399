#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace anisoband {

class ThermometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SidebandCounts {
  double pulses = 0.0;
  double clicks_blue = 0.0;
  double clicks_red = 0.0;
  double dark_per_pulse = 0.0;
  double leak_blue_per_pulse = 0.0;
  double leak_red_per_pulse = 0.0;

  void validate() const;
};

// clicks / pulses minus the per-pulse backgrounds. The backgrounds are summed
// in sorted order, so the order they are listed in cannot change the result.
double corrected_rate(double clicks, double pulses, std::vector<double> backgrounds);

struct CorrectedRates {
  double p_blue = 0.0;
  double p_red = 0.0;
  double raw_blue = 0.0;  // before clamping
  double raw_red = 0.0;
  bool clamped_blue = false;
  bool clamped_red = false;

  bool clamped() const { return clamped_blue || clamped_red; }
};

CorrectedRates corrected_rates(const SidebandCounts& c);

struct OccupancyOptions {
  // eta_red / eta_blue; the red rate is divided by it before the ratio.
  double efficiency_ratio = 1.0;
  // Treat dark and leak backgrounds as Poisson-uncertain in the error budget.
  bool poisson_backgrounds = false;
};

struct OccupancyEstimate {
  double n = 0.0;      // clamped at 0
  double n_raw = 0.0;  // before clamping
  double sigma_n = 0.0;
  double p_blue = 0.0;
  double p_red = 0.0;
  bool clamped = false;
};

// n = p_red / (p_blue - p_red). sigma_n propagates Poisson click statistics
// when counts are given, else it is 0.
OccupancyEstimate occupancy(double p_blue, double p_red, const SidebandCounts* counts = nullptr,
                            const OccupancyOptions& options = {});

OccupancyEstimate occupancy(const SidebandCounts& counts, const OccupancyOptions& options = {});

struct GroupRecord {
  std::string group;
  SidebandCounts counts;
};

enum class ProbabilityAxis { Blue, Red };

struct SweepPoint {
  std::string group;
  double probability = 0.0;
  std::optional<OccupancyEstimate> estimate;
  CorrectedRates rates;
  bool rates_clamped = false;
  std::string error;  // set when the group failed; the sweep continues
};

// Records sharing a group label are pooled (pulses and clicks summed,
// backgrounds pulse-weighted). Output sorted by probability, then group.
std::vector<SweepPoint> occupancy_sweep(const std::vector<GroupRecord>& records,
                                        const OccupancyOptions& options = {},
                                        ProbabilityAxis axis = ProbabilityAxis::Blue);

}  // namespace anisoband
