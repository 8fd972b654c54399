#include "anisoband/cli.hpp"
#include "anisoband/config.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace anisoband;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("anisoband_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "anisoband");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_CASE("config defaults and round trip") {
  const RunConfig c;
  CHECK(c.material.density == 2329.0);
  CHECK(c.geometry.lArm_max_nm == 207.5);
  CHECK(c.sweep.nmax_y == 27);
  const nlohmann::json j = to_json(c);
  CHECK(to_json(parse_config(j)) == j);

  nlohmann::json custom = {{"sweep", {{"theta_deg", {0, 22.5}}, {"n_bands", 12}}},
                           {"geometry_nm", {{"lArm_max", 210.0}}}};
  const RunConfig d = parse_config(custom);
  CHECK(d.sweep.n_bands == 12);
  CHECK(d.geometry.lArm_max_nm == 210.0);
  CHECK(sweep_thetas(d)[1] == doctest::Approx(std::numbers::pi / 8));
  CHECK(to_json(parse_config(to_json(d))) == to_json(d));
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(parse_config({{"sweep", {{"nbands", 3}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"colour", "red"}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"sweep", {{"n_bands", "many"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"sweep", {{"reduction", "3d"}}}}), std::invalid_argument);
}

TEST_CASE("taper cells and angles") {
  RunConfig c;
  CHECK(cshape_for_cell(c, std::nullopt).lArm == doctest::Approx(207.5e-9));
  CHECK(cshape_for_cell(c, 7).lArm == doctest::Approx(207.5e-9));
  CHECK(cshape_for_cell(c, 0).lArm < 207.5e-9);
  CHECK(parse_angle("22.5deg") == doctest::Approx(std::numbers::pi / 8));
  CHECK(parse_angle("0.5rad") == 0.5);
  CHECK(parse_angle("0.5") == 0.5);
  CHECK_THROWS_AS(parse_angle("45 degrees"), ConfigError);
}

TEST_CASE("band CSV round trip") {
  BandTable t;
  BandRow a;
  a.theta = 0.1;
  a.kx = 0.0;
  a.band = 0;
  a.freq_hz = 5.5e9 + 1.0 / 3.0;
  ModeAnnotation ann;
  ann.sx = std::nan("");
  ann.sy = -0.75;
  ann.rz = 1.0 / 3.0;
  ann.fractions = {0.5, 0.25, 0.25};
  a.annotation = ann;
  BandRow b = a;
  b.band = 1;
  b.theta = 0.2;
  b.annotation.reset();
  t.rows = {a, b};
  const fs::path dir = scratch("csv");
  write_band_csv((dir / "b.csv").string(), t);
  const BandTable back = read_band_csv((dir / "b.csv").string());
  REQUIRE(back.rows.size() == 2u);
  CHECK(back.rows[0].freq_hz == a.freq_hz);
  CHECK(back.rows[0].annotation->rz == ann.rz);
  CHECK(std::isnan(back.rows[0].annotation->sx));
  CHECK(back.rows[1].theta_index == 1u);
  CHECK_FALSE(back.rows[1].annotation.has_value());
  CHECK(band_csv(back) == band_csv(t));
}

TEST_CASE("input readers") {
  const fs::path dir = scratch("readers");
  write(dir / "trace.csv", "# enbw_Hz=1000\nfreq_Hz,psd_linear\n1,2\n2,3\n3,4\n4,5\n5,6\n6,7\n7,8\n8,9\n");
  const PsdTrace t = read_trace_csv((dir / "trace.csv").string());
  CHECK(t.enbw == 1000.0);
  CHECK(t.freq.size() == 8u);
  write(dir / "noenbw.csv", "1,2\n2,3\n");
  CHECK_THROWS(read_trace_csv((dir / "noenbw.csv").string()));

  write(dir / "pm.csv", "p_pm_W,ratio\n0.001,10\n0.002,5\n");
  CHECK(read_pm_points_csv((dir / "pm.csv").string()).size() == 2u);

  write(dir / "rec.csv",
        "group,pulses,clicks_blue,clicks_red,dark_per_pulse,leak_blue_per_pulse,leak_red_per_pulse\n"
        "a,100000,600,100,0.001,0.002,0.0001\n");
  const auto recs = read_records_csv((dir / "rec.csv").string());
  REQUIRE(recs.size() == 1u);
  CHECK(recs[0].group == "a");
  CHECK(recs[0].counts.leak_blue_per_pulse == 0.002);
  write(dir / "short.csv", "group,pulses\na,1\n");
  CHECK_THROWS(read_records_csv((dir / "short.csv").string()));
}

TEST_CASE("filter parsing") {
  const ModeFilter f = parse_mode_filter("sy=+1,region=cshape", 0.8, 0.5);
  CHECK(f.op == SymmetryOp::SigmaY);
  CHECK(f.parity == 1);
  CHECK(f.dominant == Region::CShape);
  CHECK(f.tau == 0.8);
  CHECK(parse_mode_filter("rz=-1", 0.9, 0).parity == -1);
  CHECK_THROWS_AS(parse_mode_filter("sy=2", 0.9, 0), ConfigError);
  CHECK_THROWS_AS(parse_mode_filter("mood=+1", 0.9, 0), ConfigError);
}

TEST_CASE("taper verb is deterministic and writes its sidecars") {
  const fs::path dir = scratch("taper");
  REQUIRE(run({"taper", "--out-dir", dir.string()}) == 0);
  const std::string first = slurp(dir / "taper.csv");
  CHECK(first.rfind("n,lArm_nm,wArm_nm,lPad_nm,wPad_nm\n-7,207.5,106,110.5,192\n", 0) == 0);
  CHECK(fs::exists(dir / "effective_config.json"));
  CHECK(fs::exists(dir / "run_meta.json"));
  // Re-running from the effective config reproduces the output byte for byte.
  fs::copy_file(dir / "effective_config.json", dir / "cfg.json");
  REQUIRE(run({"taper", "--config", (dir / "cfg.json").string(), "--out-dir", dir.string()}) == 0);
  CHECK(slurp(dir / "taper.csv") == first);
}

TEST_CASE("material and thermometry verbs") {
  const fs::path dir = scratch("verbs");
  REQUIRE(run({"material", "rotate", "--theta", "22.5deg", "--steps", "4", "--out-dir",
               dir.string()}) == 0);
  const std::string csv = slurp(dir / "stiffness_vs_theta.csv");
  CHECK(csv.rfind("theta_rad,C11,C12,C66,C16\n0,", 0) == 0);
  CHECK(fs::exists(dir / "material_rotated.json"));

  write(dir / "rec.csv",
        "group,pulses,clicks_blue,clicks_red,dark_per_pulse,leak_blue_per_pulse,leak_red_per_pulse\n"
        "a,1000000,6000,1000,0,0,0\n");
  REQUIRE(run({"thermometry", "--records", (dir / "rec.csv").string(), "--out-dir",
               dir.string()}) == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "thermometry.json"));
  CHECK(j["groups"][0]["estimate"]["n"].get<double>() == doctest::Approx(0.2));

  REQUIRE(run({"g0", "--ratio", "10", "--gamma", "1e6", "--omega", "3e10", "--b", "0.5", "--T",
               "295", "--enbw", "1000", "--out-dir", dir.string()}) == 0);
  CHECK(fs::exists(dir / "g0.json"));
}

TEST_CASE("errors exit nonzero") {
  const fs::path dir = scratch("errors");
  write(dir / "bad.json", "{\"sweep\": {\"bogus\": 1}}");
  CHECK(run({"taper", "--config", (dir / "bad.json").string(), "--out-dir", dir.string()}) != 0);
  CHECK(run({"g0", "--ratio", "10", "--gamma", "1e6", "--omega", "3e10", "--b", "0.5",
             "--enbw", "1000", "--out-dir", dir.string()}) != 0);  // no temperature anywhere
  CHECK(run({"nonsense"}) != 0);
}

TEST_CASE("bands, classify and gaps pipeline on a coarse cell") {
  const fs::path dir = scratch("bands");
  write(dir / "cfg.json", R"({"sweep": {"nmax_x": 2, "nmax_y": 10, "grid_nx": 16,
        "grid_ny": 128, "n_bands": 10, "theta_deg": [0]}, "layout": {"snow_rows": 1}})");
  const std::string cfg = (dir / "cfg.json").string();
  const std::string csv = (dir / "bands.csv").string();
  REQUIRE(run({"bands", "sweep", "--config", cfg, "--out-dir", dir.string()}) == 0);
  const std::string classified = slurp(csv);
  REQUIRE(run({"bands", "sweep", "--config", cfg, "--no-classify", "--out-dir", dir.string()}) == 0);
  CHECK(slurp(csv) != classified);
  REQUIRE(run({"classify", "--bands", csv, "--out-dir", dir.string()}) == 0);
  CHECK(slurp(csv) == classified);
  REQUIRE(run({"gaps", "--bands", csv, "--filter", "sy=+1", "--out-dir", dir.string()}) == 0);
  const auto gaps = nlohmann::json::parse(slurp(dir / "gaps.json"));
  CHECK(gaps["filter"] == "sy=+1,solid>=0.5");
  CHECK(gaps["gaps"].is_array());
}
