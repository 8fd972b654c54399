#pragma once

// Synthetic measurement fixtures shared by the calibration tests and the
// acceptance run. Every formula here is written out independently of the
// library.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace synthetic {

constexpr double kB = 1.380649e-23;
constexpr double hbar = 1.054571817e-34;
const double kTwoPi = 2.0 * std::numbers::pi;

struct Peak {
  double omega, gamma, height;  // rad/s, rad/s, PSD units
};

// Single-sided Lorentzian in w = 2 pi f, normalised so that the value at
// w = Omega is close to `height`.
inline double lorentzian(double w, const Peak& p) {
  const double o2 = p.omega * p.omega, g2 = p.gamma * p.gamma;
  return p.height * (o2 * g2 - g2 * g2 / 4.0) / ((o2 - w * w) * (o2 - w * w) + g2 * w * w);
}

struct Trace {
  std::vector<double> freq, psd;
};

// psd0 + sum of peaks on a uniform grid, each sample scaled by
// (1 + noise N(0, 1)).
inline Trace psd_trace(const std::vector<Peak>& peaks, double psd0, double f_lo, double f_hi,
                       int samples, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Trace t;
  for (int i = 0; i < samples; ++i) {
    const double f = f_lo + (f_hi - f_lo) * i / (samples - 1);
    double v = psd0;
    for (const auto& p : peaks) v += lorentzian(kTwoPi * f, p);
    t.freq.push_back(f);
    t.psd.push_back(v * (1.0 + noise * n(rng)));
  }
  return t;
}

// Brownian displacement PSD peak over the zero-point variance, in seconds.
inline double sxx_over_xzpf2(double temperature, double gamma, double omega) {
  const long double g = gamma, o = omega;
  const long double num = 4.0L * kB * temperature * g * o;
  const long double den = hbar * (g * g * o * o - g * g * g * g / 4.0L);
  return static_cast<double>(num / den);
}

// PSD_m / PSD_phi for a phase-modulation tone of depth b at the mechanical frequency.
inline double psd_ratio(double g0, double gamma, double omega, double b, double temperature,
                        double enbw) {
  return enbw * g0 * g0 * sxx_over_xzpf2(temperature, gamma, omega) / (b * b * omega * omega);
}

// Carrier over first sideband for a phase modulator of half-wave voltage
// v_pi driven with power p into r_ohm: J0(b)^2 / (J1(b)^2 + B).
inline double pm_ratio(double v_pi, double p, double r_ohm, double b_noise) {
  const double b = std::numbers::pi / v_pi * std::sqrt(2.0 * r_ohm * p);
  const double j0 = std::cyl_bessel_j(0.0, b), j1 = std::cyl_bessel_j(1.0, b);
  return j0 * j0 / (j1 * j1 + b_noise);
}

}  // namespace synthetic
