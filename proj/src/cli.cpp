#include "anisoband/cli.hpp"

#include "anisoband/config.hpp"
#include "anisoband/geometry.hpp"
#include "anisoband/materials.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <typeinfo>

namespace anisoband {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr char kModesMagic[8] = {'A', 'B', 'M', 'O', 'D', 'E', 'S', '1'};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // Written beside the target and renamed, so readers never see a torn file.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::optional<double> try_number(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

double number_field(const std::string& s, const std::string& where) {
  const auto v = try_number(s);
  if (!v) throw IoError(where + ": expected a number, got '" + s + "'");
  return *v;
}

json json_number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string band_csv(const BandTable& table) {
  std::ostringstream os;
  os << "theta_rad,kx,band_index,freq_Hz,parity_sx,parity_sy,parity_rz,frac_cshape,"
        "frac_interface,frac_snowflake\n";
  for (const auto& r : table.rows) {
    os << format_number(r.theta) << ',' << format_number(r.kx) << ',' << r.band << ','
       << format_number(r.freq_hz);
    if (r.annotation) {
      const auto& a = *r.annotation;
      os << ',' << format_number(a.sx) << ',' << format_number(a.sy) << ','
         << format_number(a.rz) << ',' << format_number(a.fractions.cshape) << ','
         << format_number(a.fractions.interface) << ',' << format_number(a.fractions.snowflake);
    } else {
      os << ",,,,,,";
    }
    os << '\n';
  }
  return os.str();
}

void write_band_csv(const std::string& path, const BandTable& table) {
  write_text(path, band_csv(table));
}

BandTable read_band_csv(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw IoError(path + ": empty band file");
  const auto header = split(lines[0], ',');
  if (header.size() != 10 || trim(header[0]) != "theta_rad") {
    throw IoError(path + ": not a band CSV");
  }
  BandTable t;
  std::vector<double> thetas, kxs;
  auto index_of = [](std::vector<double>& seen, double v) {
    for (std::size_t i = 0; i < seen.size(); ++i) {
      if (seen[i] == v) return i;
    }
    seen.push_back(v);
    return seen.size() - 1;
  };
  for (std::size_t l = 1; l < lines.size(); ++l) {
    if (trim(lines[l]).empty()) continue;
    const auto f = split(lines[l], ',');
    const std::string where = path + ":" + std::to_string(l + 1);
    if (f.size() != 10) throw IoError(where + ": expected 10 columns");
    BandRow r;
    r.theta = number_field(f[0], where);
    r.kx = number_field(f[1], where);
    r.band = static_cast<int>(number_field(f[2], where));
    r.freq_hz = number_field(f[3], where);
    r.theta_index = index_of(thetas, r.theta);
    r.k_index = index_of(kxs, r.kx);
    bool any = false, all = true;
    for (int c = 4; c < 10; ++c) {
      const bool present = !trim(f[c]).empty();
      any = any || present;
      all = all && present;
    }
    if (any && !all) throw IoError(where + ": partially annotated row");
    if (all) {
      ModeAnnotation a;
      a.sx = number_field(f[4], where);
      a.sy = number_field(f[5], where);
      a.rz = number_field(f[6], where);
      a.fractions.cshape = number_field(f[7], where);
      a.fractions.interface = number_field(f[8], where);
      a.fractions.snowflake = number_field(f[9], where);
      // Not a CSV column; the sweep sidecar carries it when present.
      a.solid = 1.0;
      r.annotation = a;
    }
    t.rows.push_back(r);
  }
  return t;
}

void write_modes(const std::string& path, const BandStructure& bs) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    const std::uint64_t dims[4] = {bs.thetas.size(), bs.kpoints.size(),
                                   static_cast<std::uint64_t>(bs.n_bands),
                                   bs.modes.empty() ? 0u
                                                    : static_cast<std::uint64_t>(
                                                          bs.modes.front().coefficients.size())};
    out.write(kModesMagic, sizeof kModesMagic);
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    for (std::size_t t = 0; t < bs.thetas.size(); ++t) {
      for (std::size_t k = 0; k < bs.kpoints.size(); ++k) {
        for (int b = 0; b < bs.n_bands; ++b) {
          const BlochMode& m = bs.mode(t, k, b);
          const double head[6] = {m.theta, m.k.kx, m.k.ky, m.omega, m.relative_residual,
                                  m.norm_ratio};
          const std::int64_t band = m.band_index;
          out.write(reinterpret_cast<const char*>(head), sizeof head);
          out.write(reinterpret_cast<const char*>(&band), sizeof band);
          out.write(reinterpret_cast<const char*>(m.coefficients.data()),
                    static_cast<std::streamsize>(m.coefficients.size() * sizeof(std::complex<double>)));
        }
      }
    }
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  fs::rename(tmp, p);
}

std::vector<BlochMode> read_modes(const std::string& path,
                                  std::shared_ptr<const PlaneWaveBasis> basis) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  std::uint64_t dims[4];
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in || !std::equal(magic, magic + 8, kModesMagic)) throw IoError(path + ": not a modes file");
  const std::uint64_t dim = dims[3];
  if (basis && dim != 2 * basis->size()) {
    throw IoError(path + ": coefficient length does not match the configured basis");
  }
  const std::uint64_t count = dims[0] * dims[1] * dims[2];
  std::vector<BlochMode> modes;
  modes.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    BlochMode m;
    double head[6];
    std::int64_t band = 0;
    in.read(reinterpret_cast<char*>(head), sizeof head);
    in.read(reinterpret_cast<char*>(&band), sizeof band);
    m.theta = head[0];
    m.k = {head[1], head[2]};
    m.omega = head[3];
    m.relative_residual = head[4];
    m.norm_ratio = head[5];
    m.band_index = static_cast<int>(band);
    m.coefficients.resize(static_cast<Eigen::Index>(dim));
    in.read(reinterpret_cast<char*>(m.coefficients.data()),
            static_cast<std::streamsize>(dim * sizeof(std::complex<double>)));
    if (!in) throw IoError(path + ": truncated modes file");
    m.basis = basis;
    modes.push_back(std::move(m));
  }
  return modes;
}

PsdTrace read_trace_csv(const std::string& path) {
  PsdTrace t;
  bool have_enbw = false;
  bool header_seen = false;
  const auto lines = read_lines(path);
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const std::string line = trim(lines[l]);
    const std::string where = path + ":" + std::to_string(l + 1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto pos = line.find("enbw_Hz");
      if (pos != std::string::npos) {
        const auto eq = line.find_first_of("=:,", pos);
        if (eq == std::string::npos) throw IoError(where + ": enbw_Hz without a value");
        t.enbw = number_field(line.substr(eq + 1), where);
        have_enbw = true;
      }
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 2) throw IoError(where + ": expected freq_Hz,psd_linear");
    const auto a = try_number(f[0]);
    const auto b = try_number(f[1]);
    if (!a || !b) {
      if (header_seen || !t.freq.empty()) throw IoError(where + ": expected numbers");
      header_seen = true;
      continue;
    }
    t.freq.push_back(*a);
    t.psd.push_back(*b);
  }
  if (!have_enbw) throw IoError(path + ": missing '# enbw_Hz=<value>' header line");
  t.validate();
  return t;
}

std::vector<PmPoint> read_pm_points_csv(const std::string& path) {
  std::vector<PmPoint> pts;
  const auto lines = read_lines(path);
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const std::string line = trim(lines[l]);
    if (line.empty() || line.front() == '#') continue;
    const auto f = split(line, ',');
    const std::string where = path + ":" + std::to_string(l + 1);
    if (f.size() != 2) throw IoError(where + ": expected p_pm_W,ratio");
    const auto a = try_number(f[0]);
    const auto b = try_number(f[1]);
    if (!a || !b) {
      if (!pts.empty()) throw IoError(where + ": expected numbers");
      continue;
    }
    pts.push_back({*a, *b});
  }
  return pts;
}

std::vector<GroupRecord> read_records_csv(const std::string& path) {
  static const std::vector<std::string> kColumns = {
      "group", "pulses", "clicks_blue", "clicks_red", "dark_per_pulse", "leak_blue_per_pulse",
      "leak_red_per_pulse"};
  const auto lines = read_lines(path);
  std::size_t l = 0;
  while (l < lines.size() && trim(lines[l]).empty()) ++l;
  if (l == lines.size()) throw IoError(path + ": empty records file");
  const auto header = split(lines[l], ',');
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = i;
  for (const auto& c : kColumns) {
    if (!col.count(c)) throw IoError(path + ": missing column '" + c + "'");
  }
  std::vector<GroupRecord> out;
  for (++l; l < lines.size(); ++l) {
    if (trim(lines[l]).empty()) continue;
    const auto f = split(lines[l], ',');
    const std::string where = path + ":" + std::to_string(l + 1);
    if (f.size() != header.size()) throw IoError(where + ": column count mismatch");
    GroupRecord r;
    r.group = trim(f[col["group"]]);
    r.counts.pulses = number_field(f[col["pulses"]], where);
    r.counts.clicks_blue = number_field(f[col["clicks_blue"]], where);
    r.counts.clicks_red = number_field(f[col["clicks_red"]], where);
    r.counts.dark_per_pulse = number_field(f[col["dark_per_pulse"]], where);
    r.counts.leak_blue_per_pulse = number_field(f[col["leak_blue_per_pulse"]], where);
    r.counts.leak_red_per_pulse = number_field(f[col["leak_red_per_pulse"]], where);
    out.push_back(std::move(r));
  }
  return out;
}

ModeFilter parse_mode_filter(const std::string& spec, double tau, double min_solid_fraction) {
  ModeFilter f;
  f.tau = tau;
  f.min_solid_fraction = min_solid_fraction;
  for (const auto& raw : split(spec, ',')) {
    const std::string term = trim(raw);
    if (term.empty()) continue;
    const auto eq = term.find('=');
    if (eq == std::string::npos) throw ConfigError("filter term '" + term + "' lacks '='");
    const std::string key = trim(term.substr(0, eq));
    const std::string value = trim(term.substr(eq + 1));
    if (key == "region") {
      if (value == "cshape") f.dominant = Region::CShape;
      else if (value == "interface") f.dominant = Region::Interface;
      else if (value == "snowflake") f.dominant = Region::Snowflake;
      else throw ConfigError("unknown region '" + value + "'");
      continue;
    }
    const auto op = parse_symmetry_op(key);
    if (!op) throw ConfigError("unknown filter key '" + key + "'");
    if (f.op) throw ConfigError("a filter takes a single symmetry term");
    f.op = op;
    if (value == "+1" || value == "1") f.parity = +1;
    else if (value == "-1") f.parity = -1;
    else throw ConfigError("parity must be +1 or -1, got '" + value + "'");
  }
  return f;
}

namespace {

struct Common {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const GeometryError*>(&e)) return "geometry";
  if (dynamic_cast<const MaterialError*>(&e)) return "material";
  if (dynamic_cast<const SolverError*>(&e)) return "solver";
  if (dynamic_cast<const AnalysisError*>(&e)) return "analysis";
  if (dynamic_cast<const FitError*>(&e)) return "fit";
  if (dynamic_cast<const CalibrationError*>(&e)) return "calibration";
  if (dynamic_cast<const ThermometryError*>(&e)) return "thermometry";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const std::domain_error*>(&e)) return "domain";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "invalid_argument";
  return "runtime";
}

class Runner {
 public:
  explicit Runner(std::vector<std::string> argv) : argv_(std::move(argv)) {}

  RunConfig config() const {
    RunConfig c = common_.config_path.empty() ? RunConfig{} : load_config(common_.config_path);
    if (common_.seed) c.seed = *common_.seed;
    if (common_.threads) c.threads = *common_.threads;
    if (c.threads < 0) throw ConfigError("threads must be >= 0");
    return c;
  }

  fs::path out(const std::string& name) const { return fs::path(common_.out_dir) / name; }

  // effective_config.json beside the primary outputs; timestamps elsewhere.
  void finish(const std::string& verb, const RunConfig& c) const {
    write_json(out("effective_config.json"), to_json(c));
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json meta = {{"verb", verb},        {"argv", argv_},     {"started_utc", started_},
                 {"finished_utc", utc_now()}, {"wall_s", wall}};
    write_json(out("run_meta.json"), meta);
  }

  Common common_;
  std::vector<std::string> argv_;
  std::string started_ = utc_now();
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--out-dir", c.out_dir, "Directory for artifacts");
  app->add_option("--seed", c.seed, "Seed for stochastic steps");
  app->add_option("--threads", c.threads, "Upper bound on worker threads (0 = auto)");
}

json material_json(const ElasticMaterial& m, const VoigtStiffness& c) {
  json rows = json::array();
  for (int i = 0; i < 6; ++i) {
    json row = json::array();
    for (int j = 0; j < 6; ++j) row.push_back(c(i, j));
    rows.push_back(row);
  }
  return {{"name", m.name}, {"density_kg_m3", m.density}, {"voigt_Pa", rows}};
}

int verb_material_rotate(Runner& r, const std::string& theta_s, int steps) {
  const RunConfig c = r.config();
  const double theta = parse_angle(theta_s);
  if (steps < 1) throw ConfigError("--steps must be >= 1");
  const VoigtStiffness rot = rotate_stiffness(c.material.stiffness, theta);
  const Eigen::Matrix3d q = in_plane_stiffness(rot, c.sweep.reduction);
  json qj = json::array();
  for (int i = 0; i < 3; ++i) qj.push_back({q(i, 0), q(i, 1), q(i, 2)});
  ElasticMaterial rotated = c.material;
  rotated.stiffness = rot;
  const auto v = christoffel_velocities(rotated, Eigen::Vector2d(1.0, 0.0), c.sweep.reduction);
  json result = {{"theta_rad", theta},
                 {"material", material_json(c.material, rot)},
                 {"in_plane_Pa", qj},
                 {"reduction", to_string(c.sweep.reduction)},
                 {"x_velocities_m_s", {v[0], v[1]}},
                 {"C16_over_C11", rot(0, 5) / rot(0, 0)}};
  write_json(r.out("material_rotated.json"), result);

  std::ostringstream os;
  os << "theta_rad,C11,C12,C66,C16\n";
  for (int i = 0; i <= steps; ++i) {
    const double t = 0.5 * std::numbers::pi * i / steps;
    const VoigtStiffness s = rotate_stiffness(c.material.stiffness, t);
    os << format_number(t) << ',' << format_number(s(0, 0)) << ',' << format_number(s(0, 1))
       << ',' << format_number(s(5, 5)) << ',' << format_number(s(0, 5)) << '\n';
  }
  write_text(r.out("stiffness_vs_theta.csv"), os.str());
  r.finish("material rotate", c);
  std::printf("material rotate: theta = %.6g rad, C11 = %.6g Pa, C16 = %.6g Pa\n", theta,
              rot(0, 0), rot(0, 5));
  return 0;
}

int verb_taper(Runner& r) {
  const RunConfig c = r.config();
  const auto& g = c.geometry;
  std::ostringstream os;
  os << "n,lArm_nm,wArm_nm,lPad_nm,wPad_nm\n";
  for (int n = -g.n_d; n <= g.n_d; ++n) {
    auto par = [&](double mn, double mx) {
      return taper_parameter(n, {mn, mx, g.n_d}, c.layout.taper_sign);
    };
    os << n << ',' << format_number(par(g.lArm_min_nm, g.lArm_max_nm)) << ','
       << format_number(par(g.wArm_min_nm, g.wArm_max_nm)) << ','
       << format_number(par(g.lPad_min_nm, g.lPad_max_nm)) << ','
       << format_number(par(g.wPad_min_nm, g.wPad_max_nm)) << '\n';
  }
  write_text(r.out("taper.csv"), os.str());
  r.finish("taper", c);
  std::printf("taper: %d cells written to %s\n", 2 * g.n_d + 1, r.out("taper.csv").c_str());
  return 0;
}

int verb_geometry_raster(Runner& r, std::optional<int> nx, std::optional<int> ny) {
  RunConfig c = r.config();
  if (nx) c.sweep.grid_nx = *nx;
  if (ny) c.sweep.grid_ny = *ny;
  const UnitCellGeometry g = configured_cell(c);
  const ElasticMaterial filler =
      make_filler(c.material, c.filler_density_ratio, c.filler_stiffness_ratio);
  const MaterialGrid grid = rasterize(g, c.sweep.grid_nx, c.sweep.grid_ny, c.material, filler);
  write_text(r.out("geometry.pgm"), to_pgm(grid));
  json shapes = json::array();
  for (const auto& s : g.shapes) {
    json parts = json::array();
    for (const auto& p : s.parts) {
      parts.push_back({{"center_m", {p.center.x(), p.center.y()}},
                       {"axis", {p.axis.x(), p.axis.y()}},
                       {"length_m", p.length},
                       {"width_m", p.width}});
    }
    shapes.push_back({{"role", s.role == ShapeRole::Hole ? "hole" : "solid"},
                      {"region", to_string(s.region)},
                      {"parts", parts}});
  }
  json side = {{"ax_m", g.ax},
               {"ay_m", g.ay},
               {"nx", grid.nx},
               {"ny", grid.ny},
               {"geometry_hash", g.hash()},
               {"hole_count", g.hole_count()},
               {"solid_fill_fraction", grid.fill_fraction(0)},
               {"solid_half_height_m", json_number(g.solid_half_height)},
               {"region_bounds_m",
                {{"cshape_half", json_number(g.bounds.cshape_half)},
                 {"interface_half", json_number(g.bounds.interface_half)}}},
               {"shapes", shapes}};
  write_json(r.out("geometry.json"), side);
  r.finish("geometry raster", c);
  std::printf("geometry raster: %dx%d pixels, cell %.6g x %.6g nm, solid fill %.4f\n", grid.nx,
              grid.ny, g.ax / kNanometre, g.ay / kNanometre, grid.fill_fraction(0));
  return 0;
}

json solid_shares(const BandTable& t) {
  json out = json::array();
  for (const auto& r : t.rows) out.push_back(r.annotation ? json(r.annotation->solid) : json(nullptr));
  return out;
}

json band_meta(const RunConfig& c, const BandStructure& bs, const std::string& modes_file,
               const BandTable& table) {
  json ks = json::array();
  for (const auto& k : bs.kpoints) ks.push_back({k.kx, k.ky});
  return {{"config", to_json(c)},
          {"geometry_hash", bs.metadata.geometry_hash},
          {"thetas_rad", bs.thetas},
          {"kpoints", ks},
          {"n_bands", bs.n_bands},
          {"nmax", {bs.metadata.nmax_x, bs.metadata.nmax_y}},
          {"grid", {bs.metadata.grid_nx, bs.metadata.grid_ny}},
          {"reduction", to_string(bs.metadata.reduction)},
          {"force_c16_zero", bs.metadata.force_c16_zero},
          {"modes_file", modes_file},
          {"classified", !table.rows.empty() && table.rows.front().annotation.has_value()},
          {"solid_fraction", solid_shares(table)}};
}

int verb_bands_sweep(Runner& r, std::string out_csv, bool no_classify, bool no_modes) {
  const RunConfig c = r.config();
  if (out_csv.empty()) out_csv = r.out("bands.csv").string();
  const UnitCellGeometry g = configured_cell(c);
  const BandStructure bs =
      band_sweep(g, sweep_thetas(c), sweep_kpoints(c), c.material, sweep_options(c));
  const BandTable table = no_classify ? to_table(bs) : classify(bs);
  write_band_csv(out_csv, table);
  const std::string modes_file = no_modes ? "" : fs::path(out_csv).filename().string() + ".modes";
  if (!no_modes) write_modes(out_csv + ".modes", bs);
  write_json(out_csv + ".meta.json", band_meta(c, bs, modes_file, table));
  r.finish("bands sweep", c);
  double worst = 0.0;
  for (const auto& m : bs.modes) worst = std::max(worst, m.relative_residual);
  std::printf("bands sweep: %zu theta x %zu k x %d bands -> %s (max residual %.3g)\n",
              bs.thetas.size(), bs.kpoints.size(), bs.n_bands, out_csv.c_str(), worst);
  return 0;
}

int verb_classify(Runner& r, const std::string& csv) {
  std::ifstream meta_in(csv + ".meta.json");
  if (!meta_in) throw IoError("missing sidecar " + csv + ".meta.json");
  json meta = json::parse(meta_in);
  RunConfig c = parse_config(meta.at("config"));
  const UnitCellGeometry stored = configured_cell(c);
  if (stored.hash() != meta.at("geometry_hash").get<std::string>()) {
    throw IoError(csv + ": sidecar config does not reproduce the swept geometry");
  }
  if (!r.common_.config_path.empty()) c.analysis = r.config().analysis;
  const std::string modes_name = meta.at("modes_file").get<std::string>();
  if (modes_name.empty()) throw IoError(csv + ": sweep was written without mode coefficients");

  const UnitCellGeometry g = configured_cell(c);
  const ElasticMaterial filler =
      make_filler(c.material, c.filler_density_ratio, c.filler_stiffness_ratio);
  const MaterialGrid grid = rasterize(g, c.sweep.grid_nx, c.sweep.grid_ny, c.material, filler);
  auto basis = std::make_shared<const PlaneWaveBasis>(c.sweep.nmax_x, c.sweep.nmax_y, grid.ax,
                                                      grid.ay);
  const auto modes = read_modes((fs::path(csv).parent_path() / modes_name).string(), basis);
  BandTable table = read_band_csv(csv);
  if (table.rows.size() != modes.size()) {
    throw IoError(csv + ": row count does not match the modes file");
  }
  for (std::size_t i = 0; i < modes.size(); ++i) {
    if (table.rows[i].band != modes[i].band_index || table.rows[i].theta != modes[i].theta) {
      throw IoError(csv + ": row " + std::to_string(i + 2) + " does not match the modes file");
    }
    table.rows[i].annotation = annotate(modes[i], grid);
  }
  write_band_csv(csv, table);
  meta["classified"] = true;
  meta["config"] = to_json(c);
  meta["solid_fraction"] = solid_shares(table);
  write_json(csv + ".meta.json", meta);
  r.finish("classify", c);
  std::printf("classify: %zu rows annotated in %s\n", table.rows.size(), csv.c_str());
  return 0;
}

int verb_gaps(Runner& r, const std::string& csv, const std::string& filter_spec,
              std::optional<double> tau, std::optional<double> min_solid) {
  const RunConfig c = r.config();
  BandTable table = read_band_csv(csv);
  if (std::ifstream meta_in(csv + ".meta.json"); meta_in) {
    const json meta = json::parse(meta_in);
    if (meta.contains("solid_fraction") && meta["solid_fraction"].size() == table.rows.size()) {
      for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const json& s = meta["solid_fraction"][i];
        if (table.rows[i].annotation && s.is_number()) table.rows[i].annotation->solid = s.get<double>();
      }
    }
  }
  std::optional<ModeFilter> filter;
  if (!filter_spec.empty()) {
    filter = parse_mode_filter(filter_spec, tau.value_or(c.analysis.tau),
                               min_solid.value_or(c.analysis.min_solid_fraction));
    for (const auto& row : table.rows) {
      if (!row.annotation) throw AnalysisError("filtered gaps need a classified band file");
    }
  }
  const auto gaps = find_gaps(table, filter);
  json list = json::array();
  for (const auto& gap : gaps) {
    list.push_back({{"lo_Hz", gap.lo},
                    {"hi_Hz", gap.hi},
                    {"width_Hz", gap.hi - gap.lo},
                    {"kind", to_string(gap.kind)}});
  }
  json result = {{"bands", csv},
                 {"filter", filter ? json(filter->describe()) : json(nullptr)},
                 {"tau", filter ? filter->tau : c.analysis.tau},
                 {"gaps", list}};
  write_json(r.out("gaps.json"), result);
  r.finish("gaps", c);
  std::printf("gaps: %zu interval(s)%s\n", gaps.size(),
              filter ? (" for " + filter->describe()).c_str() : "");
  for (const auto& gap : gaps) {
    std::printf("  %.6g - %.6g GHz (%s)\n", gap.lo * 1e-9, gap.hi * 1e-9,
                to_string(gap.kind).c_str());
  }
  return 0;
}

int verb_anticross(Runner& r, std::optional<int> band_a, std::optional<int> band_b, int levels,
                   int points) {
  const RunConfig c = r.config();
  std::vector<double> thetas = sweep_thetas(c);
  if (thetas.size() < 3) {
    thetas.clear();
    for (int i = 0; i <= 8; ++i) thetas.push_back(0.25 * std::numbers::pi * i / 8);
  }
  const auto kpoints = sweep_kpoints(c);
  const std::vector<BlochWavevector> k0 = {kpoints.front()};
  const UnitCellGeometry g = configured_cell(c);
  SweepOptions opts = sweep_options(c);
  opts.force_c16_zero = false;
  SweepOptions forced_opts = opts;
  forced_opts.force_c16_zero = true;

  const BandStructure forced = band_sweep(g, thetas, k0, c.material, forced_opts);
  const BandStructure actual = band_sweep(g, thetas, k0, c.material, opts);

  AnticrossingPair pair;
  if (band_a && band_b) {
    pair.cshape_band = *band_a;
    pair.partner_band = *band_b;
  } else if (band_a || band_b) {
    throw ConfigError("--band-a and --band-b go together");
  } else {
    pair = select_anticrossing_pair(forced, classify(forced), 0, c.analysis.tau);
  }

  const AnticrossingResult forced_coarse =
      detect_anticrossing(forced, pair.cshape_band, pair.partner_band, 0);
  const AnticrossingResult actual_coarse =
      detect_anticrossing(actual, pair.cshape_band, pair.partner_band, 0);
  const AnticrossingResult forced_fine =
      refine_anticrossing(g, c.material, forced_opts, forced, forced_coarse, 0, levels, points);
  const AnticrossingResult actual_fine =
      refine_anticrossing(g, c.material, opts, actual, actual_coarse, 0, levels, points);

  double bound = 0.0;
  for (const auto* bs : {&forced, &actual}) {
    for (const auto& m : bs->modes) {
      bound = std::max(bound, residual_frequency_bound(m, c.sweep.residual_limit));
    }
  }
  const double excess = actual_fine.gap_min_hz - forced_fine.gap_min_hz;

  auto summary = [](const AnticrossingResult& coarse, const AnticrossingResult& fine) {
    return json{{"coarse_theta_min_rad", coarse.theta_min},
                {"coarse_gap_min_Hz", coarse.gap_min_hz},
                {"theta_min_rad", fine.theta_min},
                {"gap_min_Hz", fine.gap_min_hz}};
  };
  json result = {{"kx", k0.front().kx},
                 {"cshape_band", pair.cshape_band},
                 {"partner_band", pair.partner_band},
                 {"crosses_when_forced", pair.crosses},
                 {"true_c16", summary(actual_coarse, actual_fine)},
                 {"forced_c16_zero", summary(forced_coarse, forced_fine)},
                 {"residual_bound_Hz", bound},
                 {"excess_Hz", excess},
                 {"excess_over_bound", bound > 0 ? json(excess / bound) : json(nullptr)},
                 {"refine_levels", levels},
                 {"refine_points", points}};
  write_json(r.out("anticross.json"), result);

  std::ostringstream os;
  os << "theta_rad,band_a_true,band_b_true,freq_a_true_Hz,freq_b_true_Hz,sep_true_Hz,"
        "band_a_forced,band_b_forced,freq_a_forced_Hz,freq_b_forced_Hz,sep_forced_Hz\n";
  for (std::size_t t = 0; t < thetas.size(); ++t) {
    const int at = actual_coarse.track_a[t], bt = actual_coarse.track_b[t];
    const int af = forced_coarse.track_a[t], bf = forced_coarse.track_b[t];
    os << format_number(thetas[t]) << ',' << at << ',' << bt << ','
       << format_number(actual.frequency_hz(t, 0, at)) << ','
       << format_number(actual.frequency_hz(t, 0, bt)) << ','
       << format_number(actual_coarse.separation_hz[t]) << ',' << af << ',' << bf << ','
       << format_number(forced.frequency_hz(t, 0, af)) << ','
       << format_number(forced.frequency_hz(t, 0, bf)) << ','
       << format_number(forced_coarse.separation_hz[t]) << '\n';
  }
  write_text(r.out("anticross_tracks.csv"), os.str());
  r.finish("anticross", c);
  std::printf(
      "anticross: bands %d/%d, true minimum %.6g MHz at %.6g rad, forced minimum %.6g MHz at "
      "%.6g rad, residual bound %.3g Hz\n",
      pair.cshape_band, pair.partner_band, actual_fine.gap_min_hz * 1e-6, actual_fine.theta_min,
      forced_fine.gap_min_hz * 1e-6, forced_fine.theta_min, bound);
  return 0;
}

json peak_json(const LorentzianPeak& p) {
  return {{"omega_rad_s", p.omega},
          {"gamma_rad_s", p.gamma},
          {"peak_psd", p.peak_psd},
          {"freq_Hz", p.omega / (2 * std::numbers::pi)},
          {"linewidth_Hz", p.gamma / (2 * std::numbers::pi)}};
}

int verb_fit_psd(Runner& r, const std::string& trace_path, int peaks) {
  const RunConfig c = r.config();
  const PsdTrace trace = read_trace_csv(trace_path);
  PsdFitOptions o;
  o.convention = c.calibration.convention;
  o.mad_factor = c.calibration.mad_factor;
  const MultiLorentzFit fit = fit_psd(trace, peaks, {}, o);
  json list = json::array();
  for (const auto& p : fit.peaks) list.push_back(peak_json(p));
  json result = {{"trace", trace_path},
                 {"enbw_Hz", trace.enbw},
                 {"requested_peaks", peaks},
                 {"partial", fit.partial},
                 {"peaks", list},
                 {"psd0", fit.psd0},
                 {"rms_residual", fit.residual},
                 {"iterations", fit.iterations},
                 {"convention", c.calibration.convention == FrequencyConvention::Angular
                                    ? "angular"
                                    : "literal"}};
  write_json(r.out("fit_psd.json"), result);
  r.finish("fit-psd", c);
  std::printf("fit-psd: %zu peak(s)%s\n", fit.peaks.size(), fit.partial ? " (partial)" : "");
  for (const auto& p : fit.peaks) {
    std::printf("  %.9g Hz, linewidth %.6g Hz\n", p.omega / (2 * std::numbers::pi),
                p.gamma / (2 * std::numbers::pi));
  }
  return 0;
}

int verb_calibrate_pm(Runner& r, const std::string& points_path, std::optional<double> r_ohm) {
  RunConfig c = r.config();
  if (r_ohm) c.calibration.r_ohm = *r_ohm;
  const auto pts = read_pm_points_csv(points_path);
  const PmCalibration cal = fit_vpi(pts, c.calibration.r_ohm);
  json result = {{"points", points_path},
                 {"n_points", pts.size()},
                 {"v_pi_V", cal.v_pi},
                 {"b_noise", cal.b_noise},
                 {"r_ohm", cal.r_ohm},
                 {"rms_log_residual", cal.residual}};
  write_json(r.out("pm_calibration.json"), result);
  r.finish("calibrate-pm", c);
  std::printf("calibrate-pm: v_pi = %.6g V, B = %.3g\n", cal.v_pi, cal.b_noise);
  return 0;
}

int verb_g0(Runner& r, G0Inputs in, std::optional<double> temperature) {
  RunConfig c = r.config();
  if (temperature) c.calibration.temperature_K = *temperature;
  if (!c.calibration.temperature_K) throw ConfigError("g0 needs --T or calibration.temperature_K");
  in.temperature = *c.calibration.temperature_K;
  const G0Result g = g0_extract(in);
  json result = {{"g0_rad_s", g.g0},
                 {"g0_over_2pi_Hz", g.g0 / (2 * std::numbers::pi)},
                 {"inputs",
                  {{"psd_ratio", in.psd_ratio},
                   {"gamma_rad_s", in.gamma},
                   {"omega_rad_s", in.omega},
                   {"b", in.b},
                   {"temperature_K", in.temperature},
                   {"enbw_Hz", in.enbw}}}};
  write_json(r.out("g0.json"), result);
  r.finish("g0", c);
  std::printf("g0: g0/2pi = %.6g kHz\n", g.g0 / (2 * std::numbers::pi) * 1e-3);
  return 0;
}

json estimate_json(const OccupancyEstimate& e) {
  return {{"n", e.n},         {"n_raw", e.n_raw}, {"sigma_n", e.sigma_n},
          {"p_blue", e.p_blue}, {"p_red", e.p_red}, {"clamped", e.clamped}};
}

int verb_thermometry(Runner& r, const std::string& records_path,
                     std::optional<double> pulse_width, std::optional<double> pulse_period) {
  const RunConfig c = r.config();
  const auto records = read_records_csv(records_path);
  OccupancyOptions o;
  o.efficiency_ratio = c.thermometry.efficiency_ratio;
  o.poisson_backgrounds = c.thermometry.poisson_backgrounds;
  const auto points = occupancy_sweep(records, o, c.thermometry.axis);
  json groups = json::array();
  int failed = 0;
  for (const auto& p : points) {
    json g = {{"group", p.group},
              {"probability", p.probability},
              {"rates",
               {{"p_blue", p.rates.p_blue},
                {"p_red", p.rates.p_red},
                {"raw_blue", p.rates.raw_blue},
                {"raw_red", p.rates.raw_red},
                {"clamped_blue", p.rates.clamped_blue},
                {"clamped_red", p.rates.clamped_red}}},
              {"estimate", p.estimate ? estimate_json(*p.estimate) : json(nullptr)},
              {"error", p.error.empty() ? json(nullptr) : json(p.error)}};
    if (!p.error.empty()) ++failed;
    groups.push_back(g);
  }
  json result = {{"records", records_path},
                 {"probability_axis", c.thermometry.axis == ProbabilityAxis::Blue ? "blue" : "red"},
                 {"groups", groups}};
  if (pulse_width || pulse_period) {
    result["pulse"] = {{"width_s", pulse_width ? json(*pulse_width) : json(nullptr)},
                       {"period_s", pulse_period ? json(*pulse_period) : json(nullptr)}};
  }
  write_json(r.out("thermometry.json"), result);
  r.finish("thermometry", c);
  std::printf("thermometry: %zu group(s), %d failed\n", points.size(), failed);
  for (const auto& p : points) {
    if (p.estimate) {
      std::printf("  %s: p = %.4g, n = %.4g +- %.2g\n", p.group.c_str(), p.probability,
                  p.estimate->n, p.estimate->sigma_n);
    } else {
      std::printf("  %s: %s\n", p.group.c_str(), p.error.c_str());
    }
  }
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  Runner runner(args);
  Common& common = runner.common_;

  CLI::App app{"Band structures, calibration and thermometry for anisotropic optomechanical crystals",
               "anisoband"};
  app.require_subcommand(1);
  std::function<int()> action;
  std::string verb;

  auto* material = app.add_subcommand("material", "Stiffness tensor utilities");
  material->require_subcommand(1);
  auto* rotate = material->add_subcommand("rotate", "Rotate the stiffness about [001]");
  std::string theta_s;
  int steps = 180;
  rotate->add_option("--theta", theta_s, "Angle, e.g. 22.5deg or 0.39rad")->required();
  rotate->add_option("--steps", steps, "Intervals of the [0, pi/2] stiffness table");
  add_common(rotate, common);
  rotate->callback([&] {
    verb = "material rotate";
    action = [&] { return verb_material_rotate(runner, theta_s, steps); };
  });

  auto* taper = app.add_subcommand("taper", "Tapered C-shape parameters per cell");
  add_common(taper, common);
  taper->callback([&] {
    verb = "taper";
    action = [&] { return verb_taper(runner); };
  });

  auto* geometry = app.add_subcommand("geometry", "Unit-cell geometry");
  geometry->require_subcommand(1);
  auto* raster = geometry->add_subcommand("raster", "Rasterize the configured cell");
  std::optional<int> nx, ny;
  raster->add_option("--nx", nx, "Pixels along x");
  raster->add_option("--ny", ny, "Pixels along y");
  add_common(raster, common);
  raster->callback([&] {
    verb = "geometry raster";
    action = [&] { return verb_geometry_raster(runner, nx, ny); };
  });

  auto* bands = app.add_subcommand("bands", "Band structures");
  bands->require_subcommand(1);
  auto* sweep = bands->add_subcommand("sweep", "Solve the configured theta x k sweep");
  std::string bands_out;
  bool no_classify = false, no_modes = false;
  sweep->add_option("--out", bands_out, "Band CSV path (default <out-dir>/bands.csv)");
  sweep->add_flag("--no-classify", no_classify, "Leave the annotation columns empty");
  sweep->add_flag("--no-modes", no_modes, "Do not store mode coefficients");
  add_common(sweep, common);
  sweep->callback([&] {
    verb = "bands sweep";
    action = [&] { return verb_bands_sweep(runner, bands_out, no_classify, no_modes); };
  });

  auto* cls = app.add_subcommand("classify", "Annotate a band CSV in place");
  std::string bands_in;
  cls->add_option("--bands", bands_in, "Band CSV written by 'bands sweep'")
      ->required()
      ->check(CLI::ExistingFile);
  add_common(cls, common);
  cls->callback([&] {
    verb = "classify";
    action = [&] { return verb_classify(runner, bands_in); };
  });

  auto* gaps = app.add_subcommand("gaps", "Band gaps of a band CSV");
  std::string gaps_in, filter_spec;
  std::optional<double> tau, min_solid;
  gaps->add_option("--bands", gaps_in, "Band CSV")->required()->check(CLI::ExistingFile);
  gaps->add_option("--filter", filter_spec, "e.g. sy=+1 or rz=+1,region=cshape");
  gaps->add_option("--tau", tau, "Parity threshold");
  gaps->add_option("--min-solid", min_solid, "Minimum solid share of filtered modes");
  add_common(gaps, common);
  gaps->callback([&] {
    verb = "gaps";
    action = [&] { return verb_gaps(runner, gaps_in, filter_spec, tau, min_solid); };
  });

  auto* ac = app.add_subcommand("anticross", "Compare true and forced C16 = 0 band separations");
  std::optional<int> band_a, band_b;
  int levels = 2, points = 9;
  ac->add_option("--band-a", band_a, "First band at the first theta");
  ac->add_option("--band-b", band_b, "Second band at the first theta");
  ac->add_option("--refine-levels", levels, "Refinement passes around the minimum");
  ac->add_option("--refine-points", points, "Thetas per refinement window");
  add_common(ac, common);
  ac->callback([&] {
    verb = "anticross";
    action = [&] { return verb_anticross(runner, band_a, band_b, levels, points); };
  });

  auto* fit = app.add_subcommand("fit-psd", "Multi-Lorentzian fit of a PSD trace");
  std::string trace_path;
  int n_peaks = 1;
  fit->add_option("--trace", trace_path, "Trace CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--peaks", n_peaks, "Number of peaks")->required();
  add_common(fit, common);
  fit->callback([&] {
    verb = "fit-psd";
    action = [&] { return verb_fit_psd(runner, trace_path, n_peaks); };
  });

  auto* pm = app.add_subcommand("calibrate-pm", "Fit v_pi from carrier/sideband ratios");
  std::string points_path;
  std::optional<double> r_ohm;
  pm->add_option("--points", points_path, "CSV of p_pm_W, ratio")
      ->required()
      ->check(CLI::ExistingFile);
  pm->add_option("--r", r_ohm, "Load resistance in ohm");
  add_common(pm, common);
  pm->callback([&] {
    verb = "calibrate-pm";
    action = [&] { return verb_calibrate_pm(runner, points_path, r_ohm); };
  });

  auto* g0 = app.add_subcommand("g0", "Vacuum coupling rate from the calibrated PSD ratio");
  G0Inputs g0_in;
  std::optional<double> temperature;
  g0->add_option("--ratio", g0_in.psd_ratio, "PSD_m / PSD_phi")->required();
  g0->add_option("--gamma", g0_in.gamma, "Mechanical linewidth, rad/s")->required();
  g0->add_option("--omega", g0_in.omega, "Mechanical frequency, rad/s")->required();
  g0->add_option("--b", g0_in.b, "Phase modulation depth")->required();
  g0->add_option("--T", temperature, "Temperature, K");
  g0->add_option("--enbw", g0_in.enbw, "Equivalent noise bandwidth, Hz")->required();
  add_common(g0, common);
  g0->callback([&] {
    verb = "g0";
    action = [&] { return verb_g0(runner, g0_in, temperature); };
  });

  auto* th = app.add_subcommand("thermometry", "Occupancy from sideband click counts");
  std::string records_path;
  std::optional<double> pulse_width, pulse_period;
  th->add_option("--records", records_path, "Records CSV")->required()->check(CLI::ExistingFile);
  th->add_option("--pulse-width", pulse_width, "Pulse width in s, recorded only");
  th->add_option("--pulse-period", pulse_period, "Pulse period in s, recorded only");
  add_common(th, common);
  th->callback([&] {
    verb = "thermometry";
    action = [&] { return verb_thermometry(runner, records_path, pulse_width, pulse_period); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    return action();
  } catch (const std::exception& e) {
    json report = {{"error", {{"verb", verb}, {"kind", error_kind(e)}, {"message", e.what()}}}};
    std::cerr << report.dump() << std::endl;
    return dynamic_cast<const ConfigError*>(&e) ? 2 : 1;
  }
}

}  // namespace anisoband
