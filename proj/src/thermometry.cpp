#include "anisoband/thermometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace anisoband {

void SidebandCounts::validate() const {
  if (!(pulses > 0.0)) throw ThermometryError("sideband counts: pulses must be positive");
  for (double v : {clicks_blue, clicks_red, dark_per_pulse, leak_blue_per_pulse,
                   leak_red_per_pulse}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ThermometryError("sideband counts: counts and backgrounds must be >= 0");
    }
  }
}

double corrected_rate(double clicks, double pulses, std::vector<double> backgrounds) {
  std::sort(backgrounds.begin(), backgrounds.end());
  double bg = 0.0;
  for (double b : backgrounds) bg += b;
  return clicks / pulses - bg;
}

CorrectedRates corrected_rates(const SidebandCounts& c) {
  c.validate();
  CorrectedRates r;
  r.raw_blue = corrected_rate(c.clicks_blue, c.pulses, {c.dark_per_pulse, c.leak_blue_per_pulse});
  r.raw_red = corrected_rate(c.clicks_red, c.pulses, {c.dark_per_pulse, c.leak_red_per_pulse});
  r.clamped_blue = r.raw_blue < 0.0;
  r.clamped_red = r.raw_red < 0.0;
  r.p_blue = std::max(r.raw_blue, 0.0);
  r.p_red = std::max(r.raw_red, 0.0);
  return r;
}

OccupancyEstimate occupancy(double p_blue, double p_red, const SidebandCounts* counts,
                            const OccupancyOptions& options) {
  if (!(options.efficiency_ratio > 0.0)) {
    throw ThermometryError("occupancy: efficiency ratio must be positive");
  }
  if (!(p_red >= 0.0) || !(p_blue >= 0.0)) {
    throw ThermometryError("occupancy: probabilities must be >= 0");
  }
  const double red = p_red / options.efficiency_ratio;
  if (!(p_blue > red)) {
    throw ThermometryError("non-thermal asymmetry: p_blue <= p_red (check calibration and efficiencies)");
  }
  OccupancyEstimate e;
  e.p_blue = p_blue;
  e.p_red = red;
  const double d = p_blue - red;
  e.n_raw = red / d;
  e.n = std::max(e.n_raw, 0.0);
  e.clamped = e.n_raw < 0.0;
  if (counts) {
    counts->validate();
    const double n2 = counts->pulses * counts->pulses;
    double var_b = counts->clicks_blue / n2;
    double var_r = counts->clicks_red / n2;
    if (options.poisson_backgrounds) {
      var_b += (counts->dark_per_pulse + counts->leak_blue_per_pulse) / counts->pulses;
      var_r += (counts->dark_per_pulse + counts->leak_red_per_pulse) / counts->pulses;
    }
    var_r /= options.efficiency_ratio * options.efficiency_ratio;
    const double dn_dr = p_blue / (d * d);
    const double dn_db = -red / (d * d);
    e.sigma_n = std::sqrt(dn_dr * dn_dr * var_r + dn_db * dn_db * var_b);
  }
  return e;
}

OccupancyEstimate occupancy(const SidebandCounts& counts, const OccupancyOptions& options) {
  const CorrectedRates r = corrected_rates(counts);
  return occupancy(r.p_blue, r.p_red, &counts, options);
}

std::vector<SweepPoint> occupancy_sweep(const std::vector<GroupRecord>& records,
                                        const OccupancyOptions& options, ProbabilityAxis axis) {
  if (records.empty()) throw ThermometryError("occupancy sweep: no records");
  std::map<std::string, SidebandCounts> pooled;
  std::map<std::string, int> members;
  std::vector<std::string> order;
  for (const auto& rec : records) {
    rec.counts.validate();
    auto [it, fresh] = pooled.try_emplace(rec.group);
    if (fresh) order.push_back(rec.group);
    if (++members[rec.group] == 1) {
      it->second = rec.counts;
      continue;
    }
    SidebandCounts& p = it->second;
    if (members[rec.group] == 2) {
      p.dark_per_pulse *= p.pulses;
      p.leak_blue_per_pulse *= p.pulses;
      p.leak_red_per_pulse *= p.pulses;
    }
    const double w = rec.counts.pulses;
    p.dark_per_pulse += w * rec.counts.dark_per_pulse;
    p.leak_blue_per_pulse += w * rec.counts.leak_blue_per_pulse;
    p.leak_red_per_pulse += w * rec.counts.leak_red_per_pulse;
    p.pulses += w;
    p.clicks_blue += rec.counts.clicks_blue;
    p.clicks_red += rec.counts.clicks_red;
  }
  std::vector<SweepPoint> out;
  for (const auto& g : order) {
    SidebandCounts c = pooled[g];
    if (members[g] > 1) {
      c.dark_per_pulse /= c.pulses;
      c.leak_blue_per_pulse /= c.pulses;
      c.leak_red_per_pulse /= c.pulses;
    }
    SweepPoint pt;
    pt.group = g;
    pt.rates = corrected_rates(c);
    pt.rates_clamped = pt.rates.clamped();
    pt.probability = axis == ProbabilityAxis::Blue ? pt.rates.p_blue : pt.rates.p_red;
    try {
      pt.estimate = occupancy(pt.rates.p_blue, pt.rates.p_red, &c, options);
    } catch (const ThermometryError& e) {
      pt.error = e.what();
    }
    out.push_back(std::move(pt));
  }
  std::stable_sort(out.begin(), out.end(), [](const SweepPoint& a, const SweepPoint& b) {
    if (a.probability != b.probability) return a.probability < b.probability;
    return a.group < b.group;
  });
  return out;
}

}  // namespace anisoband
