#include "anisoband/mode_analysis.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

using namespace anisoband;

namespace {

constexpr double nm = kNanometre;
const double kPi = std::numbers::pi;

ElasticMaterial silicon() {
  return {"si", 2329.0, VoigtStiffness::cubic(165.7e9, 63.9e9, 79.6e9), false};
}

UnitCellGeometry small_waveguide() {
  WaveguideLayout layout;
  layout.rows = 1;
  return build_waveguide_cell({175 * nm, 512.5 * nm, 207.5 * nm, 106 * nm, 110.5 * nm, 192 * nm},
                              {500 * nm, 205 * nm, 82 * nm}, layout);
}

SweepOptions small_options() {
  SweepOptions o;
  o.grid_nx = 16;
  o.grid_ny = 96;
  o.nmax_x = 2;
  o.nmax_y = 10;
  o.n_bands = 16;
  return o;
}

// Field sampled at pixel centres of a unit square.
RealSpaceField sampled(int n, double (*fx)(double, double), double (*fy)(double, double)) {
  RealSpaceField f;
  f.nx = f.ny = n;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double x = (i + 0.5) / n - 0.5, y = (j + 0.5) / n - 0.5;
      f.ux.emplace_back(fx(x, y));
      f.uy.emplace_back(fy(x, y));
    }
  }
  return f;
}

BandRow row(std::size_t t, double f, double sy, Region dominant) {
  BandRow r;
  r.theta_index = t;
  r.freq_hz = f;
  r.band = 0;
  ModeAnnotation a;
  a.sx = std::nan("");
  a.sy = sy;
  a.rz = 1.0;
  a.fractions = {dominant == Region::CShape ? 0.8 : 0.1, dominant == Region::Interface ? 0.8 : 0.1,
                 dominant == Region::Snowflake ? 0.8 : 0.1};
  r.annotation = a;
  return r;
}

}  // namespace

TEST_CASE("mirror maps are involutions") {
  for (auto op : {SymmetryOp::SigmaX, SymmetryOp::SigmaY, SymmetryOp::RzPi}) {
    for (int j = 0; j < 6; ++j) {
      for (int i = 0; i < 4; ++i) {
        const auto p = mirror_pixel(op, 4, 6, i, j);
        const auto q = mirror_pixel(op, 4, 6, p[0], p[1]);
        CHECK(q[0] == i);
        CHECK(q[1] == j);
      }
    }
  }
  CHECK(mirror_pixel(SymmetryOp::SigmaX, 4, 6, 0, 2) == std::array<int, 2>{3, 2});
  CHECK(mirror_pixel(SymmetryOp::SigmaY, 4, 6, 0, 2) == std::array<int, 2>{0, 3});
}

TEST_CASE("parity of analytic fields") {
  // sigma_x maps (ux, uy)(x, y) to (-ux, uy)(-x, y).
  auto even_x = sampled(
      8, [](double x, double) { return std::sin(2 * std::numbers::pi * x); },
      [](double x, double) { return std::cos(2 * std::numbers::pi * x); });
  CHECK(parity_score(even_x, SymmetryOp::SigmaX) == doctest::Approx(1.0));
  auto odd_x = sampled(
      8, [](double x, double) { return std::cos(2 * std::numbers::pi * x); },
      [](double x, double) { return std::sin(2 * std::numbers::pi * x); });
  CHECK(parity_score(odd_x, SymmetryOp::SigmaX) == doctest::Approx(-1.0));
  // A rigid x translation is even under sigma_y and odd under R_z^pi.
  auto shift = sampled(
      8, [](double, double) { return 1.0; }, [](double, double) { return 0.0; });
  CHECK(parity_score(shift, SymmetryOp::SigmaY) == doctest::Approx(1.0));
  CHECK(parity_score(shift, SymmetryOp::RzPi) == doctest::Approx(-1.0));
  CHECK(parity_score(shift, SymmetryOp::SigmaX) == doctest::Approx(-1.0));
  // Half even, half odd content scores zero.
  auto mixed = sampled(
      8, [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
  CHECK(parity_score(mixed, SymmetryOp::SigmaX) == doctest::Approx(0.0).epsilon(1e-14));

  RealSpaceField odd_grid = sampled(
      7, [](double, double) { return 1.0; }, [](double, double) { return 0.0; });
  CHECK_THROWS_AS(parity_score(odd_grid, SymmetryOp::SigmaX), AnalysisError);
}

TEST_CASE("labels from scores") {
  CHECK(label_for(0.95, 0.9) == ParityLabel::Even);
  CHECK(label_for(-0.95, 0.9) == ParityLabel::Odd);
  CHECK(label_for(0.5, 0.9) == ParityLabel::Mixed);
  CHECK(label_value(ParityLabel::Odd) == -1);
  CHECK(label_value(ParityLabel::Mixed) == 0);
}

TEST_CASE("modes of the symmetric cell carry pure parities at theta = 0") {
  const auto cell = small_waveguide();
  const BandStructure bs = band_sweep(cell, {0.0, kPi / 8}, {{0.0, 0.0}}, silicon(), small_options());
  const BandTable t = classify(bs);
  REQUIRE(t.rows.size() == 2u * 16u);
  bool mixed_sy = false;
  for (const auto& r : t.rows) {
    REQUIRE(r.annotation);
    const auto& a = *r.annotation;
    const double sum = a.fractions.cshape + a.fractions.interface + a.fractions.snowflake;
    CHECK(sum == doctest::Approx(1.0));
    CHECK(a.solid > 0.99);
    CHECK(std::abs(a.rz) > 0.99);
    if (r.theta_index == 0) {
      CHECK(std::abs(a.sx) > 0.99);
      CHECK(std::abs(a.sy) > 0.99);
      // R_z^pi is the product of the two mirrors.
      CHECK(label_value(label_for(a.rz, 0.9)) ==
            label_value(label_for(a.sx, 0.9)) * label_value(label_for(a.sy, 0.9)));
    } else if (std::abs(a.sy) < 0.9) {
      mixed_sy = true;
    }
  }
  CHECK(mixed_sy);
}

TEST_CASE("parities are undefined off the symmetric wavevectors") {
  const auto cell = small_waveguide();
  const BandStructure bs =
      band_sweep(cell, {0.0}, {{0.3 * kPi / cell.ax, 0.0}}, silicon(), small_options());
  const MaterialGrid& grid = *bs.grid;
  CHECK_THROWS_AS(parity_score(bs.mode(0, 0, 0), grid, SymmetryOp::SigmaX), AnalysisError);
  CHECK_NOTHROW(parity_score(bs.mode(0, 0, 0), grid, SymmetryOp::SigmaY));
  const ModeAnnotation a = annotate(bs.mode(0, 0, 2), grid);
  CHECK(std::isnan(a.sx));
  CHECK(std::isnan(a.rz));
  CHECK(std::abs(a.sy) > 0.99);
  CHECK(std::isnan(a.score(SymmetryOp::SigmaX)));
}

TEST_CASE("region fractions and dominant region") {
  RegionFractions f{0.2, 0.5, 0.3};
  CHECK(f.dominant() == Region::Interface);
  CHECK(f[Region::Snowflake] == 0.3);
}

TEST_CASE("gap finding with and without a filter") {
  BandTable t;
  t.rows = {row(0, 1.0, 1.0, Region::CShape),    row(0, 2.0, -1.0, Region::Snowflake),
            row(0, 5.0, 1.0, Region::Interface), row(1, 1.5, 1.0, Region::CShape),
            row(1, 2.5, -1.0, Region::Snowflake), row(1, 6.0, 1.0, Region::Interface)};
  const auto all = find_gaps(t);
  // Envelopes [1, 1.5], [2, 2.5], [5, 6].
  REQUIRE(all.size() == 2u);
  CHECK(all[0].lo == 1.5);
  CHECK(all[0].hi == 2.0);
  CHECK(all[1].lo == 2.5);
  CHECK(all[1].hi == 5.0);
  CHECK(all[0].kind == GapKind::Full);

  ModeFilter even;
  even.op = SymmetryOp::SigmaY;
  even.parity = +1;
  const auto sym = find_gaps(t, even);
  REQUIRE(sym.size() == 1u);
  CHECK(sym[0].lo == 1.5);
  CHECK(sym[0].hi == 5.0);
  CHECK(sym[0].kind == GapKind::Apparent);
  CHECK(even.describe() == "sy=+1");
  CHECK(to_string(GapKind::Apparent) == "apparent");

  ModeFilter region;
  region.dominant = Region::Interface;
  CHECK(region.matches(t.rows[2]));
  CHECK_FALSE(region.matches(t.rows[0]));

  BandTable bare;
  bare.rows.push_back(BandRow{});
  CHECK_THROWS_AS(even.matches(bare.rows[0]), AnalysisError);
}

TEST_CASE("band tracking is a permutation that follows slow changes") {
  const auto cell = small_waveguide();
  SweepOptions o = small_options();
  o.n_bands = 8;
  const BandStructure bs = band_sweep(cell, {0.0, 0.002, 0.004}, {{0.0, 0.0}}, silicon(), o);
  const auto tracks = track_bands(bs, 0, {0, 1, 2, 3, 4, 5, 6, 7});
  for (std::size_t t = 0; t < 3; ++t) {
    std::set<int> seen;
    for (const auto& tr : tracks) seen.insert(tr[t]);
    CHECK(seen.size() == 8u);
  }
  // Far from any crossing the frequencies barely move along a track.
  const double scale = bs.frequency_hz(0, 0, 7);
  for (const auto& tr : tracks) {
    CHECK(std::abs(bs.frequency_hz(2, 0, tr[2]) - bs.frequency_hz(0, 0, tr[0])) < 1e-2 * scale);
  }
  CHECK_THROWS_AS(detect_anticrossing(bs, 2, 2), AnalysisError);
  const auto r = detect_anticrossing(bs, 4, 5);
  CHECK(r.separation_hz.size() == 3u);
  CHECK(r.gap_min_hz >= 0.0);
  CHECK_THROWS_AS(track_bands(bs, 1, {0}), AnalysisError);
}
