#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace anisoband {

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FitError : public CalibrationError {
 public:
  using CalibrationError::CalibrationError;
};

struct PsdTrace {
  std::vector<double> freq;  // Hz, strictly increasing
  std::vector<double> psd;   // linear power units per Hz, single-sided
  double enbw = 1.0;         // Hz

  void validate() const;
};

struct LorentzianPeak {
  double omega = 0.0;  // rad/s
  double gamma = 0.0;  // rad/s
  double peak_psd = 0.0;

  void validate() const;
};

// Angular: the model variable is w = 2 pi f, so the on-resonance response is
// the peak height. Literal: the variable is f / (2 pi), as the formula is
// printed, kept for comparison only.
enum class FrequencyConvention { Angular, Literal };

struct MultiLorentzFit {
  std::vector<LorentzianPeak> peaks;  // sorted by omega
  double psd0 = 0.0;
  double residual = 0.0;  // RMS of model - data
  bool partial = false;   // fewer visible peaks than requested
  int iterations = 0;
  FrequencyConvention convention = FrequencyConvention::Angular;
};

double lorentzian_model(double f, const MultiLorentzFit& fit);

struct PsdFitOptions {
  FrequencyConvention convention = FrequencyConvention::Angular;
  double mad_factor = 5.0;  // peak threshold: median + k MAD
  int max_iterations = 200;
};

MultiLorentzFit fit_psd(const PsdTrace& trace, int n_peaks,
                        const std::vector<LorentzianPeak>& init = {},
                        const PsdFitOptions& options = {});

struct PmCalibration {
  double v_pi = 0.0;     // V
  double b_noise = 0.0;  // floor parameter B
  double r_ohm = 50.0;
  double residual = 0.0;  // RMS of log-ratio residuals

  void validate() const;
};

// C/S1 = J0(b)^2 / (J1(b)^2 + B).
double pm_ratio_model(double b, double b_noise);

// b = (pi / v_pi) sqrt(2 R P).
double modulation_depth(const PmCalibration& cal, double p_pm);

struct PmPoint {
  double p_pm = 0.0;  // W
  double ratio = 0.0;
};

PmCalibration fit_vpi(const std::vector<PmPoint>& points, double r_ohm = 50.0);

// S_xx^peak / x_zpf^2 for Brownian motion at temperature T, in seconds.
double thermal_sxx_ratio(double temperature, double gamma, double omega);

struct G0Inputs {
  double psd_ratio = 0.0;  // PSD_m / PSD_phi
  double gamma = 0.0;      // rad/s
  double omega = 0.0;      // rad/s
  double b = 0.0;
  double temperature = 0.0;  // K
  double enbw = 0.0;         // Hz
};

struct G0Result {
  double g0 = 0.0;  // rad/s
  G0Inputs inputs;
};

G0Result g0_extract(const G0Inputs& in);

// Forward model: PSD_m / PSD_phi = ENBW g0^2 (S_xx^peak / x_zpf^2) / (b^2 Omega^2).
double g0_forward_ratio(double g0, double gamma, double omega, double b, double temperature,
                        double enbw);

double dbm_to_watts(double dbm);

}  // namespace anisoband
