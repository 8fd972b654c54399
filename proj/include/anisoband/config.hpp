#pragma once

#include "anisoband/bloch_solver.hpp"
#include "anisoband/calibration.hpp"
#include "anisoband/geometry.hpp"
#include "anisoband/materials.hpp"
#include "anisoband/thermometry.hpp"

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace anisoband {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tapered C-shape parameters: minimum at the central defect cell, maximum in
// the mirror cells.
struct TaperedParams {
  double lWav_nm = 175.0;
  double wCell_nm = 512.5;
  int n_d = 7;
  double lArm_max_nm = 207.5, lArm_min_nm = 195.5;
  double wArm_max_nm = 106.0, wArm_min_nm = 83.5;
  double lPad_max_nm = 110.5, lPad_min_nm = 114.5;
  double wPad_max_nm = 192.0, wPad_min_nm = 182.0;
  double aSnow_nm = 500.0;
  double lSnow_nm = 205.0;
  double wSnow_nm = 82.0;
};

struct LayoutConfig {
  // Cell index along the taper; empty selects the mirror cell.
  std::optional<int> cell_index;
  int snow_rows = 3;
  std::optional<double> row0_nm;
  double pad_nm = 100.0;
  TaperSign taper_sign = TaperSign::Corrected;
};

struct SweepConfig {
  std::vector<double> theta_deg = {0.0};
  std::vector<double> kx_over_pi_a = {0.0};  // kx in units of pi / a_x
  int nmax_x = 4, nmax_y = 27;
  int grid_nx = 64, grid_ny = 432;
  int n_bands = 40;
  Reduction reduction = Reduction::PlaneStress;
  bool force_c16_zero = false;
  double degeneracy_tol = 1e-9;
  double residual_limit = 1e-8;
};

struct AnalysisConfig {
  double tau = 0.9;
  double min_solid_fraction = 0.5;
  std::optional<double> cshape_half_nm;
  std::optional<double> interface_half_nm;
};

struct CalibrationConfig {
  double r_ohm = 50.0;
  std::optional<double> temperature_K;
  FrequencyConvention convention = FrequencyConvention::Angular;
  double mad_factor = 5.0;
};

struct ThermometryConfig {
  double efficiency_ratio = 1.0;
  bool poisson_backgrounds = false;
  ProbabilityAxis axis = ProbabilityAxis::Blue;
};

struct RunConfig {
  ElasticMaterial material;
  double filler_density_ratio = 1e-4;
  double filler_stiffness_ratio = 1e-6;
  TaperedParams geometry;
  LayoutConfig layout;
  SweepConfig sweep;
  AnalysisConfig analysis;
  CalibrationConfig calibration;
  ThermometryConfig thermometry;
  std::uint64_t seed = 1;
  int threads = 1;

  RunConfig();
};

// Room-temperature silicon: C11 = 165.7, C12 = 63.9, C44 = 79.6 GPa, 2329 kg/m^3.
ElasticMaterial default_silicon();

// Unknown keys anywhere in the document are rejected.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
nlohmann::json to_json(const RunConfig& c);

// Geometry of the configured cell (mirror cell unless a cell index is set).
UnitCellGeometry configured_cell(const RunConfig& c);
CShapeParams cshape_for_cell(const RunConfig& c, std::optional<int> cell_index);
SnowflakeParams snowflake_params(const RunConfig& c);
SweepOptions sweep_options(const RunConfig& c);
std::vector<double> sweep_thetas(const RunConfig& c);
std::vector<BlochWavevector> sweep_kpoints(const RunConfig& c);

// "22.5deg", "0.3927rad" or a bare number in radians.
double parse_angle(const std::string& s);

}  // namespace anisoband
