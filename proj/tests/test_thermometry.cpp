#include "anisoband/thermometry.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace anisoband;

TEST_CASE("corrected rates subtract per-pulse backgrounds") {
  CHECK(corrected_rate(600, 100000, {1e-3, 2e-3}) == doctest::Approx(0.003).epsilon(1e-12));
  CHECK(corrected_rate(600, 100000, {}) == 600.0 / 100000.0);
  CHECK(corrected_rate(600, 100000, {2e-3, 1e-3}) == corrected_rate(600, 100000, {1e-3, 2e-3}));

  SidebandCounts c{100000, 600, 100, 1e-3, 2e-3, 2e-3};
  const CorrectedRates r = corrected_rates(c);
  CHECK(r.p_blue == doctest::Approx(0.003).epsilon(1e-12));
  CHECK(r.p_red == 0.0);
  CHECK(r.clamped_red);
  CHECK_FALSE(r.clamped_blue);
  CHECK(r.raw_red < 0.0);
  CHECK(r.clamped());
}

TEST_CASE("count validation") {
  SidebandCounts c{0, 1, 1, 0, 0, 0};
  CHECK_THROWS_AS(c.validate(), ThermometryError);
  c = {10, -1, 1, 0, 0, 0};
  CHECK_THROWS_AS(c.validate(), ThermometryError);
}

TEST_CASE("occupancy from the sideband ratio") {
  CHECK(std::abs(occupancy(6e-3, 1e-3).n - 0.2) <= 1e-15);
  CHECK(occupancy(0.5, 0.25).n == 1.0);
  CHECK_THROWS_AS(occupancy(1e-3, 1e-3), ThermometryError);
  CHECK_THROWS_AS(occupancy(1e-3, 2e-3), ThermometryError);
  OccupancyOptions o;
  o.efficiency_ratio = 0.5;  // red detected at half the blue efficiency
  CHECK(occupancy(6e-3, 0.5e-3, nullptr, o).n == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("occupancy is invariant under joint rescaling") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double pb = u(rng) * 1e-2, pr = pb * u(rng) * 0.9;
    const double n = occupancy(pb, pr).n;
    for (double s : {0.25, 2.0, 1024.0}) CHECK(occupancy(s * pb, s * pr).n == n);
    for (double s : {0.3, 7.0}) CHECK(occupancy(s * pb, s * pr).n == doctest::Approx(n).epsilon(1e-14));
  }
}

TEST_CASE("error propagation matches a finite-difference delta method") {
  const SidebandCounts c{1e6, 7000, 1200, 1e-4, 5e-4, 3e-4};
  const OccupancyEstimate e = occupancy(c);
  auto n_of = [&](double cb, double cr) {
    const double pb = cb / c.pulses - c.dark_per_pulse - c.leak_blue_per_pulse;
    const double pr = cr / c.pulses - c.dark_per_pulse - c.leak_red_per_pulse;
    return pr / (pb - pr);
  };
  const double h = 1e-3;
  const double dn_db = (n_of(c.clicks_blue + h, c.clicks_red) - n_of(c.clicks_blue - h, c.clicks_red)) / (2 * h);
  const double dn_dr = (n_of(c.clicks_blue, c.clicks_red + h) - n_of(c.clicks_blue, c.clicks_red - h)) / (2 * h);
  const double sigma = std::sqrt(dn_db * dn_db * c.clicks_blue + dn_dr * dn_dr * c.clicks_red);
  CHECK(e.n == doctest::Approx(n_of(c.clicks_blue, c.clicks_red)).epsilon(1e-12));
  CHECK(e.sigma_n == doctest::Approx(sigma).epsilon(1e-6));

  OccupancyOptions poisson;
  poisson.poisson_backgrounds = true;
  CHECK(occupancy(c, poisson).sigma_n > e.sigma_n);
}

TEST_CASE("sweep pools groups and survives failing ones") {
  std::vector<GroupRecord> recs = {
      {"p2", {1e6, 6000, 1000, 0, 0, 0}},
      {"p1", {1e6, 3000, 500, 0, 0, 0}},
      {"p1", {1e6, 3000, 500, 0, 0, 0}},
      {"bad", {1e6, 100, 200, 0, 0, 0}},
  };
  const auto pts = occupancy_sweep(recs);
  REQUIRE(pts.size() == 3u);
  CHECK(pts[0].group == "bad");
  CHECK_FALSE(pts[0].estimate.has_value());
  CHECK_FALSE(pts[0].error.empty());
  CHECK(pts[1].group == "p1");
  CHECK(pts[1].probability == doctest::Approx(3e-3));
  REQUIRE(pts[1].estimate);
  CHECK(pts[1].estimate->n == doctest::Approx(0.2));
  // Pooling two identical runs halves the variance.
  const OccupancyEstimate single = occupancy(recs[1].counts);
  CHECK(pts[1].estimate->sigma_n == doctest::Approx(single.sigma_n / std::sqrt(2.0)));
  CHECK(pts[2].group == "p2");

  const auto red = occupancy_sweep(recs, {}, ProbabilityAxis::Red);
  CHECK(red[1].probability == doctest::Approx(5e-4));
}
