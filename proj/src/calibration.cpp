#include "anisoband/calibration.hpp"

#include "anisoband/bessel.hpp"
#include "anisoband/materials.hpp"

#include <ceres/ceres.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace anisoband {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double model_variable(double f, FrequencyConvention c) {
  return c == FrequencyConvention::Angular ? kTwoPi * f : f / kTwoPi;
}

template <typename T>
T lorentzian(const T& x, const T& omega, const T& gamma, const T& peak) {
  const T o2 = omega * omega;
  const T g2 = gamma * gamma;
  const T d = o2 - x * x;
  return peak * (o2 * g2 - g2 * g2 / 4.0) / (d * d + g2 * x * x);
}

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
  }
  return m;
}

// Residuals of the whole trace in normalized units: x in units of xs, PSD in
// units of ps. Parameter blocks: one (omega, gamma, peak) per peak, then psd0.
struct TraceResidual {
  const std::vector<double>* x;
  const std::vector<double>* y;
  int n_peaks;

  template <typename T>
  bool operator()(T const* const* params, T* residuals) const {
    const T& psd0 = params[n_peaks][0];
    for (std::size_t i = 0; i < x->size(); ++i) {
      T model = psd0;
      const T xi((*x)[i]);
      for (int p = 0; p < n_peaks; ++p) {
        model += lorentzian(xi, params[p][0], params[p][1], params[p][2]);
      }
      residuals[i] = model - (*y)[i];
    }
    return true;
  }
};

}  // namespace

void PsdTrace::validate() const {
  if (freq.size() != psd.size()) throw CalibrationError("trace: freq and psd lengths differ");
  if (freq.size() < 8) throw CalibrationError("trace: too few samples");
  for (std::size_t i = 1; i < freq.size(); ++i) {
    if (!(freq[i] > freq[i - 1])) throw CalibrationError("trace: freq must be strictly increasing");
  }
  for (double v : psd) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw CalibrationError("trace: psd must be finite and >= 0");
  }
  if (!(enbw > 0.0)) throw CalibrationError("trace: enbw must be positive");
}

void LorentzianPeak::validate() const {
  if (!(omega > 0.0)) throw CalibrationError("peak: omega must be positive");
  if (!(gamma > 0.0) || !(gamma < 2.0 * omega)) {
    throw CalibrationError("peak: gamma must lie in (0, 2 omega)");
  }
  if (!(peak_psd > 0.0)) throw CalibrationError("peak: peak_psd must be positive");
}

double lorentzian_model(double f, const MultiLorentzFit& fit) {
  const double x = model_variable(f, fit.convention);
  double v = fit.psd0;
  for (const auto& p : fit.peaks) v += lorentzian(x, p.omega, p.gamma, p.peak_psd);
  return v;
}

MultiLorentzFit fit_psd(const PsdTrace& trace, int n_peaks,
                        const std::vector<LorentzianPeak>& init, const PsdFitOptions& options) {
  trace.validate();
  if (n_peaks < 1) throw CalibrationError("fit_psd: n_peaks must be at least 1");
  if (!init.empty() && static_cast<int>(init.size()) != n_peaks) {
    throw CalibrationError("fit_psd: initial guesses must match n_peaks");
  }
  const std::size_t n = trace.freq.size();
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = model_variable(trace.freq[i], options.convention);
  const double xs = x.back();
  const double ps = *std::max_element(trace.psd.begin(), trace.psd.end());
  if (!(ps > 0.0)) throw FitError("fit_psd: trace is identically zero");

  const double med = median(trace.psd);
  std::vector<double> dev(n);
  for (std::size_t i = 0; i < n; ++i) dev[i] = std::abs(trace.psd[i] - med);
  const double mad = median(dev);
  const double threshold = med + options.mad_factor * mad;

  std::vector<LorentzianPeak> guesses = init;
  bool partial = false;
  if (guesses.empty()) {
    // Runs of at least three samples above the floor; each run seeds a peak at
    // its maximum, width from the half-maximum crossing.
    struct Run {
      std::size_t top;
      double height;
    };
    std::vector<Run> runs;
    for (std::size_t i = 0; i < n;) {
      if (!(trace.psd[i] > threshold)) {
        ++i;
        continue;
      }
      std::size_t j = i;
      std::size_t top = i;
      while (j < n && trace.psd[j] > threshold) {
        if (trace.psd[j] > trace.psd[top]) top = j;
        ++j;
      }
      if (j - i >= 3) runs.push_back({top, trace.psd[top] - med});
      i = j;
    }
    if (runs.empty()) {
      throw FitError("fit_psd: no peak rises above the noise floor; fit did not converge");
    }
    std::stable_sort(runs.begin(), runs.end(),
                     [](const Run& a, const Run& b) { return a.height > b.height; });
    if (static_cast<int>(runs.size()) < n_peaks) partial = true;
    runs.resize(std::min<std::size_t>(runs.size(), n_peaks));
    for (const auto& r : runs) {
      const double half = med + 0.5 * r.height;
      std::size_t lo = r.top, hi = r.top;
      while (lo > 0 && trace.psd[lo - 1] > half) --lo;
      while (hi + 1 < n && trace.psd[hi + 1] > half) ++hi;
      const double dx = x[std::min(r.top + 1, n - 1)] - x[r.top > 0 ? r.top - 1 : 0];
      LorentzianPeak g;
      g.omega = x[r.top];
      g.gamma = std::max(x[hi] - x[lo], 0.5 * dx);
      g.gamma = std::min(g.gamma, 0.5 * g.omega);
      g.peak_psd = r.height;
      guesses.push_back(g);
    }
  }
  const int fitted = static_cast<int>(guesses.size());

  std::vector<std::array<double, 3>> params(fitted);
  for (int p = 0; p < fitted; ++p) {
    params[p] = {guesses[p].omega / xs, guesses[p].gamma / xs, guesses[p].peak_psd / ps};
  }
  double psd0 = std::max(med, 0.0) / ps;
  std::vector<double> xn(n), yn(n);
  for (std::size_t i = 0; i < n; ++i) {
    xn[i] = x[i] / xs;
    yn[i] = trace.psd[i] / ps;
  }

  auto* cost = new ceres::DynamicAutoDiffCostFunction<TraceResidual, 4>(
      new TraceResidual{&xn, &yn, fitted});
  std::vector<double*> blocks;
  for (int p = 0; p < fitted; ++p) {
    cost->AddParameterBlock(3);
    blocks.push_back(params[p].data());
  }
  cost->AddParameterBlock(1);
  blocks.push_back(&psd0);
  cost->SetNumResiduals(static_cast<int>(n));

  ceres::Problem problem;
  problem.AddResidualBlock(cost, nullptr, blocks);
  const double x_lo = xn.front();
  const double x_hi = xn.back();
  for (int p = 0; p < fitted; ++p) {
    double* b = params[p].data();
    problem.SetParameterLowerBound(b, 0, x_lo);
    problem.SetParameterUpperBound(b, 0, x_hi);
    problem.SetParameterLowerBound(b, 1, 1e-12);
    problem.SetParameterUpperBound(b, 1, std::max(b[0], 2e-12));
    problem.SetParameterLowerBound(b, 2, 0.0);
  }
  problem.SetParameterLowerBound(&psd0, 0, 0.0);

  ceres::Solver::Options so;
  so.linear_solver_type = ceres::DENSE_QR;
  so.max_num_iterations = options.max_iterations;
  so.function_tolerance = 1e-15;
  so.gradient_tolerance = 1e-16;
  so.parameter_tolerance = 1e-14;
  so.num_threads = 1;
  so.logging_type = ceres::SILENT;
  ceres::Solver::Summary summary;
  ceres::Solve(so, &problem, &summary);
  if (summary.termination_type != ceres::CONVERGENCE) {
    throw FitError("fit_psd: least squares did not converge (" + summary.message + ")");
  }

  MultiLorentzFit fit;
  fit.convention = options.convention;
  fit.partial = partial;
  fit.iterations = static_cast<int>(summary.iterations.size());
  fit.psd0 = psd0 * ps;
  for (int p = 0; p < fitted; ++p) {
    LorentzianPeak pk{params[p][0] * xs, params[p][1] * xs, params[p][2] * ps};
    if (!(pk.peak_psd > 0.0) || !(pk.gamma < 2.0 * pk.omega)) {
      throw FitError("fit_psd: a fitted peak collapsed; fit did not converge");
    }
    fit.peaks.push_back(pk);
  }
  std::sort(fit.peaks.begin(), fit.peaks.end(),
            [](const LorentzianPeak& a, const LorentzianPeak& b) { return a.omega < b.omega; });
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = lorentzian_model(trace.freq[i], fit) - trace.psd[i];
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / static_cast<double>(n));
  return fit;
}

void PmCalibration::validate() const {
  if (!(v_pi > 0.0)) throw CalibrationError("PM calibration: v_pi must be positive");
  if (!(b_noise >= 0.0)) throw CalibrationError("PM calibration: B must be non-negative");
  if (!(r_ohm > 0.0)) throw CalibrationError("PM calibration: R must be positive");
}

double pm_ratio_model(double b, double b_noise) {
  if (b < 0.0 || b_noise < 0.0) throw std::domain_error("pm_ratio_model: b and B must be >= 0");
  const double j0 = bessel_j0(b);
  const double j1 = bessel_j1(b);
  const double den = j1 * j1 + b_noise;
  if (den == 0.0) throw std::domain_error("pm_ratio_model: diverges at b = 0 with B = 0");
  return j0 * j0 / den;
}

double modulation_depth(const PmCalibration& cal, double p_pm) {
  cal.validate();
  if (p_pm < 0.0) throw CalibrationError("modulation_depth: drive power must be >= 0");
  return std::numbers::pi / cal.v_pi * std::sqrt(2.0 * cal.r_ohm * p_pm);
}

namespace {

// log C/S1 residual with analytic derivatives in (v_pi, B).
class PmLogResidual : public ceres::SizedCostFunction<1, 1, 1> {
 public:
  PmLogResidual(double s, double log_ratio) : s_(s), log_ratio_(log_ratio) {}

  bool Evaluate(double const* const* p, double* residual, double** jac) const override {
    const double v = p[0][0];
    const double bn = p[1][0];
    const double b = std::numbers::pi / v * s_;
    const double j0 = bessel_j0(b);
    const double j1 = bessel_j1(b);
    const double den = j1 * j1 + bn;
    if (!(den > 0.0) || j0 == 0.0) return false;
    residual[0] = std::log(j0 * j0) - std::log(den) - log_ratio_;
    if (jac) {
      // dJ0/db = -J1, dJ1/db = J0 - J1/b.
      const double dj1 = b > 0.0 ? j0 - j1 / b : 0.5;
      const double dr_db = -2.0 * j1 / j0 - 2.0 * j1 * dj1 / den;
      if (jac[0]) jac[0][0] = dr_db * (-b / v);
      if (jac[1]) jac[1][0] = -1.0 / den;
    }
    return true;
  }

 private:
  double s_;
  double log_ratio_;
};

}  // namespace

PmCalibration fit_vpi(const std::vector<PmPoint>& points, double r_ohm) {
  if (!(r_ohm > 0.0)) throw CalibrationError("fit_vpi: R must be positive");
  if (points.size() < 3) {
    throw CalibrationError("fit_vpi: need at least 3 points; v_pi and B are unidentifiable");
  }
  double p_max = 0.0;
  for (const auto& pt : points) {
    if (!(pt.p_pm >= 0.0)) throw CalibrationError("fit_vpi: drive power must be >= 0");
    if (!(pt.ratio > 0.0)) throw CalibrationError("fit_vpi: C/S1 ratios must be positive");
    p_max = std::max(p_max, pt.p_pm);
  }
  std::vector<double> distinct;
  for (const auto& pt : points) {
    if (pt.p_pm > 1e-9 * p_max) distinct.push_back(pt.p_pm);
  }
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2) {
    throw CalibrationError("fit_vpi: all points sit at b ~ 0; v_pi is unidentifiable");
  }

  std::vector<double> s(points.size()), lr(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    s[i] = std::sqrt(2.0 * r_ohm * points[i].p_pm);
    lr[i] = std::log(points[i].ratio);
  }
  auto sse = [&](double v, double bn) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double b = std::numbers::pi / v * s[i];
      const double j0 = bessel_j0(b);
      const double j1 = bessel_j1(b);
      const double den = j1 * j1 + bn;
      if (!(den > 0.0) || j0 == 0.0) return std::numeric_limits<double>::infinity();
      const double r = std::log(j0 * j0 / den) - lr[i];
      acc += r * r;
    }
    return acc;
  };

  // Coarse log grid over v_pi and B, then a bounded least-squares polish.
  double best_v = 1.0, best_b = 1e-3, best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 400; ++i) {
    const double v = std::pow(10.0, -2.0 + 5.0 * i / 400.0);
    for (int k = 0; k <= 9; ++k) {
      const double bn = k == 0 ? 1e-12 : std::pow(10.0, -k);
      const double e = sse(v, bn);
      if (e < best) {
        best = e;
        best_v = v;
        best_b = bn;
      }
    }
  }
  if (!std::isfinite(best)) throw FitError("fit_vpi: no admissible starting point");

  double v = best_v;
  double bn = best_b;
  ceres::Problem problem;
  for (std::size_t i = 0; i < s.size(); ++i) {
    problem.AddResidualBlock(new PmLogResidual(s[i], lr[i]), nullptr, &v, &bn);
  }
  problem.SetParameterLowerBound(&v, 0, 1e-6);
  problem.SetParameterLowerBound(&bn, 0, 0.0);
  ceres::Solver::Options so;
  so.linear_solver_type = ceres::DENSE_QR;
  so.max_num_iterations = 200;
  so.function_tolerance = 1e-15;
  so.gradient_tolerance = 1e-16;
  so.parameter_tolerance = 1e-14;
  so.logging_type = ceres::SILENT;
  ceres::Solver::Summary summary;
  ceres::Solve(so, &problem, &summary);
  if (summary.termination_type != ceres::CONVERGENCE) {
    throw FitError("fit_vpi: least squares did not converge (" + summary.message + ")");
  }
  PmCalibration cal;
  cal.v_pi = v;
  cal.b_noise = bn;
  cal.r_ohm = r_ohm;
  cal.residual = std::sqrt(sse(v, std::max(bn, 0.0)) / static_cast<double>(s.size()));
  return cal;
}

double thermal_sxx_ratio(double temperature, double gamma, double omega) {
  if (!(temperature > 0.0)) throw CalibrationError("thermal_sxx_ratio: T must be positive");
  if (!(omega > 0.0) || !(gamma > 0.0)) {
    throw CalibrationError("thermal_sxx_ratio: gamma and omega must be positive");
  }
  if (!(gamma < 2.0 * omega)) {
    throw CalibrationError("thermal_sxx_ratio: gamma >= 2 omega makes the denominator non-positive");
  }
  const PhysicalConstants k;
  const double g2 = gamma * gamma;
  return 4.0 * k.kB * temperature / k.hbar * gamma * omega / (g2 * omega * omega - g2 * g2 / 4.0);
}

double g0_forward_ratio(double g0, double gamma, double omega, double b, double temperature,
                        double enbw) {
  return enbw * g0 * g0 * thermal_sxx_ratio(temperature, gamma, omega) / (b * b * omega * omega);
}

G0Result g0_extract(const G0Inputs& in) {
  for (double v : {in.psd_ratio, in.gamma, in.omega, in.b, in.temperature, in.enbw}) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw CalibrationError("g0_extract: all inputs must be positive and finite");
    }
  }
  if (!(in.gamma < 2.0 * in.omega)) throw CalibrationError("g0_extract: gamma must be < 2 omega");
  const PhysicalConstants k;
  const double radicand = in.psd_ratio *
                          (in.gamma * in.omega - in.gamma * in.gamma * in.gamma / (4.0 * in.omega)) *
                          k.hbar * in.b * in.b * in.omega * in.omega /
                          (4.0 * k.kB * in.temperature * in.enbw);
  if (!(radicand >= 0.0)) throw CalibrationError("g0_extract: negative radicand, inconsistent inputs");
  return {std::sqrt(radicand), in};
}

double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }

}  // namespace anisoband
