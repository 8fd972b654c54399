#pragma once

#include "anisoband/bloch_solver.hpp"
#include "anisoband/calibration.hpp"
#include "anisoband/mode_analysis.hpp"
#include "anisoband/thermometry.hpp"

#include <memory>
#include <string>
#include <vector>

namespace anisoband {

// Entry point of the anisoband tool. Returns the process exit status; errors
// are reported as one JSON object on stderr.
int run_cli(int argc, char** argv);

// Fixed-width round-trip formatting used by every CSV writer ("nan" for NaN).
std::string format_number(double v);

// Band CSV: theta_rad, kx, band_index, freq_Hz, parity_sx, parity_sy,
// parity_rz, frac_cshape, frac_interface, frac_snowflake. Annotation columns
// are empty for unclassified rows.
std::string band_csv(const BandTable& table);
void write_band_csv(const std::string& path, const BandTable& table);
// Theta and k indices are assigned from the distinct values in order of appearance.
BandTable read_band_csv(const std::string& path);

// Binary dump of the mode coefficients in (theta, k, band) order.
void write_modes(const std::string& path, const BandStructure& bs);
std::vector<BlochMode> read_modes(const std::string& path,
                                  std::shared_ptr<const PlaneWaveBasis> basis);

// Lines starting with '#' may carry "enbw_Hz=<value>"; one optional
// non-numeric header row; then freq_Hz, psd_linear pairs.
PsdTrace read_trace_csv(const std::string& path);
// Columns p_pm_W, ratio with an optional header row.
std::vector<PmPoint> read_pm_points_csv(const std::string& path);
// Columns group, pulses, clicks_blue, clicks_red, dark_per_pulse,
// leak_blue_per_pulse, leak_red_per_pulse with a mandatory header row.
std::vector<GroupRecord> read_records_csv(const std::string& path);

// "sy=+1", "rz=-1", "region=cshape", comma separated.
ModeFilter parse_mode_filter(const std::string& spec, double tau, double min_solid_fraction);

}  // namespace anisoband
