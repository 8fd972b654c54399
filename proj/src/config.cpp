#include "anisoband/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace anisoband {

using nlohmann::json;

namespace {

// Reads fields out of one JSON object and rejects whatever it did not read.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    seen_.insert(key);
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  void mark(const std::string& key) { seen_.insert(key); }

  std::string child(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Matrix6d voigt_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 6) throw ConfigError(path + ": expected a 6x6 array");
  Matrix6d m;
  for (int r = 0; r < 6; ++r) {
    if (!j[r].is_array() || j[r].size() != 6) throw ConfigError(path + ": expected a 6x6 array");
    for (int c = 0; c < 6; ++c) {
      if (!j[r][c].is_number()) throw ConfigError(path + ": entries must be numbers");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

json voigt_to_json(const Matrix6d& m) {
  json rows = json::array();
  for (int r = 0; r < 6; ++r) {
    json row = json::array();
    for (int c = 0; c < 6; ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

FrequencyConvention parse_convention(const std::string& s) {
  if (s == "angular") return FrequencyConvention::Angular;
  if (s == "literal") return FrequencyConvention::Literal;
  throw ConfigError("calibration.convention: expected 'angular' or 'literal', got '" + s + "'");
}

TaperSign parse_taper_sign(const std::string& s) {
  if (s == "corrected") return TaperSign::Corrected;
  if (s == "printed") return TaperSign::Printed;
  throw ConfigError("layout.taper_sign: expected 'corrected' or 'printed', got '" + s + "'");
}

ProbabilityAxis parse_axis(const std::string& s) {
  if (s == "blue") return ProbabilityAxis::Blue;
  if (s == "red") return ProbabilityAxis::Red;
  throw ConfigError("thermometry.probability_axis: expected 'blue' or 'red', got '" + s + "'");
}

}  // namespace

ElasticMaterial default_silicon() {
  return {"silicon", 2329.0, VoigtStiffness::cubic(165.7e9, 63.9e9, 79.6e9), false};
}

RunConfig::RunConfig() : material(default_silicon()) {}

RunConfig parse_config(const json& j) {
  RunConfig c;
  ObjectReader root(j, "config");

  if (root.has("material")) {
    ObjectReader m(root.at("material"), "config.material");
    m.get("name", c.material.name);
    m.get("density_kg_m3", c.material.density);
    if (m.has("voigt_Pa")) {
      try {
        c.material.stiffness = VoigtStiffness(voigt_from_json(m.at("voigt_Pa"), m.child("voigt_Pa")));
      } catch (const MaterialError& e) {
        throw ConfigError(std::string("config.material.voigt_Pa: ") + e.what());
      }
    }
    m.mark("voigt_Pa");
    m.finish();
    try {
      c.material.validate();
    } catch (const MaterialError& e) {
      throw ConfigError(std::string("config.material: ") + e.what());
    }
  }
  if (root.has("filler")) {
    ObjectReader f(root.at("filler"), "config.filler");
    f.get("density_ratio", c.filler_density_ratio);
    f.get("stiffness_ratio", c.filler_stiffness_ratio);
    f.finish();
  }
  if (!(c.filler_density_ratio > 0.0) || !(c.filler_stiffness_ratio > 0.0)) {
    throw ConfigError("config.filler: ratios must be positive");
  }
  if (root.has("geometry_nm")) {
    ObjectReader g(root.at("geometry_nm"), "config.geometry_nm");
    auto& t = c.geometry;
    g.get("lWav", t.lWav_nm);
    g.get("wCell", t.wCell_nm);
    g.get("n_d", t.n_d);
    g.get("lArm_max", t.lArm_max_nm);
    g.get("lArm_min", t.lArm_min_nm);
    g.get("wArm_max", t.wArm_max_nm);
    g.get("wArm_min", t.wArm_min_nm);
    g.get("lPad_max", t.lPad_max_nm);
    g.get("lPad_min", t.lPad_min_nm);
    g.get("wPad_max", t.wPad_max_nm);
    g.get("wPad_min", t.wPad_min_nm);
    g.get("aSnow", t.aSnow_nm);
    g.get("lSnow", t.lSnow_nm);
    g.get("wSnow", t.wSnow_nm);
    g.finish();
    if (t.n_d < 1) throw ConfigError("config.geometry_nm.n_d: must be at least 1");
  }
  if (root.has("layout")) {
    ObjectReader l(root.at("layout"), "config.layout");
    l.get("cell_index", c.layout.cell_index);
    l.get("snow_rows", c.layout.snow_rows);
    l.get("row0_nm", c.layout.row0_nm);
    l.get("pad_nm", c.layout.pad_nm);
    std::string sign = c.layout.taper_sign == TaperSign::Corrected ? "corrected" : "printed";
    l.get("taper_sign", sign);
    c.layout.taper_sign = parse_taper_sign(sign);
    l.finish();
  }
  if (root.has("sweep")) {
    ObjectReader s(root.at("sweep"), "config.sweep");
    auto& w = c.sweep;
    s.get("theta_deg", w.theta_deg);
    s.get("kx_over_pi_a", w.kx_over_pi_a);
    s.get("nmax_x", w.nmax_x);
    s.get("nmax_y", w.nmax_y);
    s.get("grid_nx", w.grid_nx);
    s.get("grid_ny", w.grid_ny);
    s.get("n_bands", w.n_bands);
    std::string red = to_string(w.reduction);
    s.get("reduction", red);
    try {
      w.reduction = parse_reduction(red);
    } catch (const MaterialError& e) {
      throw ConfigError(std::string("config.sweep.reduction: ") + e.what());
    }
    s.get("force_c16_zero", w.force_c16_zero);
    s.get("degeneracy_tol", w.degeneracy_tol);
    s.get("residual_limit", w.residual_limit);
    s.finish();
    if (w.theta_deg.empty() || w.kx_over_pi_a.empty()) {
      throw ConfigError("config.sweep: theta_deg and kx_over_pi_a must be non-empty");
    }
    if (w.grid_nx % 2 != 0 || w.grid_ny % 2 != 0) {
      throw ConfigError("config.sweep: grid resolutions must be even");
    }
    if (w.n_bands < 1) throw ConfigError("config.sweep.n_bands: must be at least 1");
  }
  if (root.has("analysis")) {
    ObjectReader a(root.at("analysis"), "config.analysis");
    a.get("tau", c.analysis.tau);
    a.get("min_solid_fraction", c.analysis.min_solid_fraction);
    a.get("cshape_half_nm", c.analysis.cshape_half_nm);
    a.get("interface_half_nm", c.analysis.interface_half_nm);
    a.finish();
    if (!(c.analysis.tau > 0.0 && c.analysis.tau < 1.0)) {
      throw ConfigError("config.analysis.tau: must lie in (0, 1)");
    }
  }
  if (root.has("calibration")) {
    ObjectReader k(root.at("calibration"), "config.calibration");
    k.get("r_ohm", c.calibration.r_ohm);
    k.get("temperature_K", c.calibration.temperature_K);
    std::string conv =
        c.calibration.convention == FrequencyConvention::Angular ? "angular" : "literal";
    k.get("convention", conv);
    c.calibration.convention = parse_convention(conv);
    k.get("mad_factor", c.calibration.mad_factor);
    k.finish();
  }
  if (root.has("thermometry")) {
    ObjectReader t(root.at("thermometry"), "config.thermometry");
    t.get("efficiency_ratio", c.thermometry.efficiency_ratio);
    t.get("poisson_backgrounds", c.thermometry.poisson_backgrounds);
    std::string axis = c.thermometry.axis == ProbabilityAxis::Blue ? "blue" : "red";
    t.get("probability_axis", axis);
    c.thermometry.axis = parse_axis(axis);
    t.finish();
  }
  root.get("seed", c.seed);
  root.get("threads", c.threads);
  for (const char* key : {"material", "filler", "geometry_nm", "layout", "sweep", "analysis",
                          "calibration", "thermometry"}) {
    root.mark(key);
  }
  root.finish();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const RunConfig& c) {
  json j;
  j["material"] = {{"name", c.material.name},
                   {"density_kg_m3", c.material.density},
                   {"voigt_Pa", voigt_to_json(c.material.stiffness.matrix())}};
  j["filler"] = {{"density_ratio", c.filler_density_ratio},
                 {"stiffness_ratio", c.filler_stiffness_ratio}};
  const auto& t = c.geometry;
  j["geometry_nm"] = {{"lWav", t.lWav_nm},         {"wCell", t.wCell_nm},
                      {"n_d", t.n_d},              {"lArm_max", t.lArm_max_nm},
                      {"lArm_min", t.lArm_min_nm}, {"wArm_max", t.wArm_max_nm},
                      {"wArm_min", t.wArm_min_nm}, {"lPad_max", t.lPad_max_nm},
                      {"lPad_min", t.lPad_min_nm}, {"wPad_max", t.wPad_max_nm},
                      {"wPad_min", t.wPad_min_nm}, {"aSnow", t.aSnow_nm},
                      {"lSnow", t.lSnow_nm},       {"wSnow", t.wSnow_nm}};
  j["layout"] = {{"cell_index", c.layout.cell_index ? json(*c.layout.cell_index) : json(nullptr)},
                 {"snow_rows", c.layout.snow_rows},
                 {"row0_nm", c.layout.row0_nm ? json(*c.layout.row0_nm) : json(nullptr)},
                 {"pad_nm", c.layout.pad_nm},
                 {"taper_sign",
                  c.layout.taper_sign == TaperSign::Corrected ? "corrected" : "printed"}};
  const auto& w = c.sweep;
  j["sweep"] = {{"theta_deg", w.theta_deg},
                {"kx_over_pi_a", w.kx_over_pi_a},
                {"nmax_x", w.nmax_x},
                {"nmax_y", w.nmax_y},
                {"grid_nx", w.grid_nx},
                {"grid_ny", w.grid_ny},
                {"n_bands", w.n_bands},
                {"reduction", to_string(w.reduction)},
                {"force_c16_zero", w.force_c16_zero},
                {"degeneracy_tol", w.degeneracy_tol},
                {"residual_limit", w.residual_limit}};
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  j["analysis"] = {{"tau", c.analysis.tau},
                   {"min_solid_fraction", c.analysis.min_solid_fraction},
                   {"cshape_half_nm", opt(c.analysis.cshape_half_nm)},
                   {"interface_half_nm", opt(c.analysis.interface_half_nm)}};
  j["calibration"] = {
      {"r_ohm", c.calibration.r_ohm},
      {"temperature_K", opt(c.calibration.temperature_K)},
      {"convention",
       c.calibration.convention == FrequencyConvention::Angular ? "angular" : "literal"},
      {"mad_factor", c.calibration.mad_factor}};
  j["thermometry"] = {
      {"efficiency_ratio", c.thermometry.efficiency_ratio},
      {"poisson_backgrounds", c.thermometry.poisson_backgrounds},
      {"probability_axis", c.thermometry.axis == ProbabilityAxis::Blue ? "blue" : "red"}};
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j;
}

CShapeParams cshape_for_cell(const RunConfig& c, std::optional<int> cell_index) {
  const auto& t = c.geometry;
  auto par = [&](double mn, double mx) {
    if (!cell_index || std::abs(*cell_index) > t.n_d) return mx;
    return taper_parameter(*cell_index, {mn, mx, t.n_d}, c.layout.taper_sign);
  };
  CShapeParams p;
  p.lWav = t.lWav_nm * kNanometre;
  p.wCell = t.wCell_nm * kNanometre;
  p.lArm = par(t.lArm_min_nm, t.lArm_max_nm) * kNanometre;
  p.wArm = par(t.wArm_min_nm, t.wArm_max_nm) * kNanometre;
  p.lPad = par(t.lPad_min_nm, t.lPad_max_nm) * kNanometre;
  p.wPad = par(t.wPad_min_nm, t.wPad_max_nm) * kNanometre;
  return p;
}

SnowflakeParams snowflake_params(const RunConfig& c) {
  return {c.geometry.aSnow_nm * kNanometre, c.geometry.lSnow_nm * kNanometre,
          c.geometry.wSnow_nm * kNanometre};
}

UnitCellGeometry configured_cell(const RunConfig& c) {
  WaveguideLayout layout;
  layout.rows = c.layout.snow_rows;
  if (c.layout.row0_nm) layout.row0_center = *c.layout.row0_nm * kNanometre;
  layout.pad_y = c.layout.pad_nm * kNanometre;
  UnitCellGeometry g =
      build_waveguide_cell(cshape_for_cell(c, c.layout.cell_index), snowflake_params(c), layout);
  if (c.analysis.cshape_half_nm) g.bounds.cshape_half = *c.analysis.cshape_half_nm * kNanometre;
  if (c.analysis.interface_half_nm) {
    g.bounds.interface_half = *c.analysis.interface_half_nm * kNanometre;
  }
  return g;
}

SweepOptions sweep_options(const RunConfig& c) {
  SweepOptions o;
  o.grid_nx = c.sweep.grid_nx;
  o.grid_ny = c.sweep.grid_ny;
  o.nmax_x = c.sweep.nmax_x;
  o.nmax_y = c.sweep.nmax_y;
  o.n_bands = c.sweep.n_bands;
  o.filler_density_ratio = c.filler_density_ratio;
  o.filler_stiffness_ratio = c.filler_stiffness_ratio;
  o.reduction = c.sweep.reduction;
  o.force_c16_zero = c.sweep.force_c16_zero;
  o.threads = c.threads;
  o.solve.degeneracy_tol = c.sweep.degeneracy_tol;
  o.solve.residual_limit = c.sweep.residual_limit;
  return o;
}

std::vector<double> sweep_thetas(const RunConfig& c) {
  std::vector<double> t;
  for (double d : c.sweep.theta_deg) t.push_back(d * std::numbers::pi / 180.0);
  return t;
}

std::vector<BlochWavevector> sweep_kpoints(const RunConfig& c) {
  std::vector<BlochWavevector> k;
  const double a = c.geometry.wCell_nm * kNanometre;
  for (double f : c.sweep.kx_over_pi_a) k.push_back({f * std::numbers::pi / a, 0.0});
  return k;
}

double parse_angle(const std::string& s) {
  auto number = [&](const std::string& body) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(body, &used);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse angle '" + s + "'");
    }
    if (used != body.size() || !std::isfinite(v)) throw ConfigError("cannot parse angle '" + s + "'");
    return v;
  };
  auto ends_with = [&](const std::string& suffix) {
    return s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with("deg")) return number(s.substr(0, s.size() - 3)) * std::numbers::pi / 180.0;
  if (ends_with("rad")) return number(s.substr(0, s.size() - 3));
  return number(s);
}

}  // namespace anisoband
