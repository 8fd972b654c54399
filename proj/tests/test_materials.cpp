#include "anisoband/materials.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <numbers>
#include <random>

using namespace anisoband;

namespace {

const double kPi = std::numbers::pi;

VoigtStiffness silicon() { return VoigtStiffness::cubic(165.7e9, 63.9e9, 79.6e9); }

double max_abs(const Matrix6d& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("rotation agrees with the rank-4 transformation") {
  const VoigtStiffness c = silicon();
  for (int i = 0; i < 64; ++i) {
    const double theta = 2.0 * kPi * i / 64.0 + 0.013;
    const Matrix6d got = rotate_stiffness(c, theta).matrix();
    const Matrix6d want = oracle::rotate_brute_force(c.matrix(), theta);
    CHECK(max_abs(got - want) <= 1e-12 * max_abs(want));
  }
}

TEST_CASE("rotation of a random anisotropic tensor agrees with the rank-4 transformation") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix6d a;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) a(i, j) = u(rng);
  const Matrix6d c = (a * a.transpose() + 6.0 * Matrix6d::Identity()) * 1e10;
  const VoigtStiffness s(c);
  for (double theta : {0.1, 1.0, 2.5, -0.7}) {
    const Matrix6d got = rotate_stiffness(s, theta).matrix();
    const Matrix6d want = oracle::rotate_brute_force(c, theta);
    CHECK(max_abs(got - want) <= 1e-12 * max_abs(want));
  }
}

TEST_CASE("C16 vanishes along <100> and <110> and peaks between") {
  const VoigtStiffness c = silicon();
  CHECK(std::abs(rotate_stiffness(c, 0.0)(0, 5)) <= 1e-10 * c(0, 0));
  CHECK(std::abs(rotate_stiffness(c, kPi / 4)(0, 5)) <= 1e-10 * c(0, 0));
  CHECK(std::abs(rotate_stiffness(c, kPi / 8)(0, 5)) > 1e-2 * c(0, 0));
}

TEST_CASE("rotation properties") {
  const VoigtStiffness c = silicon();
  SUBCASE("composition") {
    const Matrix6d ab = rotate_stiffness(rotate_stiffness(c, 0.3), 0.5).matrix();
    CHECK(max_abs(ab - rotate_stiffness(c, 0.8).matrix()) <= 1e-12 * c(0, 0));
  }
  SUBCASE("inverse") {
    const Matrix6d back = rotate_stiffness(rotate_stiffness(c, 0.77), -0.77).matrix();
    CHECK(max_abs(back - c.matrix()) <= 1e-12 * c(0, 0));
  }
  SUBCASE("cubic tensors repeat every quarter turn") {
    for (double t : {0.1, 0.4, 1.2}) {
      const Matrix6d a = rotate_stiffness(c, t).matrix();
      const Matrix6d b = rotate_stiffness(c, t + kPi / 2).matrix();
      CHECK(max_abs(a - b) <= 1e-12 * c(0, 0));
    }
  }
  SUBCASE("isotropic tensors are invariant") {
    const VoigtStiffness iso = VoigtStiffness::isotropic(200e9, 70e9);
    CHECK(anisotropy_factor(iso) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(max_abs(rotate_stiffness(iso, 0.6).matrix() - iso.matrix()) <= 1e-12 * iso(0, 0));
  }
  SUBCASE("positive definiteness is preserved") {
    for (double t : {0.2, 0.9, 2.0}) CHECK(rotate_stiffness(c, t).positive_definite());
  }
  SUBCASE("bond matrices invert by negating the angle") {
    const Matrix6d m = bond_matrix_z(0.4) * bond_matrix_z(-0.4);
    CHECK(max_abs(m - Matrix6d::Identity()) <= 1e-14);
  }
}

TEST_CASE("stiffness validation") {
  Matrix6d a = silicon().matrix();
  a(0, 1) += 1e6;
  CHECK_THROWS_AS(VoigtStiffness{a}, MaterialError);
  ElasticMaterial bad{"bad", 2329.0, VoigtStiffness::cubic(1e9, 2e9, 1e9), false};
  CHECK_THROWS_AS(bad.validate(), MaterialError);
  ElasticMaterial neg{"neg", -1.0, silicon(), false};
  CHECK_THROWS_AS(neg.validate(), MaterialError);
  const ElasticMaterial si{"si", 2329.0, silicon(), false};
  const ElasticMaterial f = make_filler(si, 1e-4, 1e-6);
  CHECK(f.filler);
  CHECK(f.density == doctest::Approx(2329.0 * 1e-4));
  CHECK(f.stiffness(0, 0) == doctest::Approx(165.7e9 * 1e-6));
}

TEST_CASE("in-plane reductions") {
  const VoigtStiffness c = silicon();
  const Eigen::Matrix3d strain = in_plane_stiffness(c, Reduction::PlaneStrain);
  const Eigen::Matrix3d stress = in_plane_stiffness(c, Reduction::PlaneStress);
  CHECK(strain(0, 0) == c(0, 0));
  CHECK(strain(2, 2) == c(5, 5));
  CHECK(stress(0, 0) == doctest::Approx(c(0, 0) - c(0, 2) * c(0, 2) / c(2, 2)).epsilon(1e-14));
  CHECK(stress(2, 2) == doctest::Approx(c(5, 5)).epsilon(1e-14));
  CHECK(parse_reduction(to_string(Reduction::PlaneStress)) == Reduction::PlaneStress);
  CHECK(parse_reduction(to_string(Reduction::PlaneStrain)) == Reduction::PlaneStrain);
  CHECK_THROWS(parse_reduction("3d"));
}

TEST_CASE("Christoffel velocities agree with the tensor eigenproblem") {
  const ElasticMaterial si{"si", 2329.0, silicon(), false};
  for (bool stress : {false, true}) {
    const Reduction red = stress ? Reduction::PlaneStress : Reduction::PlaneStrain;
    for (int t = 0; t < 8; ++t) {
      const double theta = kPi * t / 8.0 + 0.05;
      ElasticMaterial rot = si;
      rot.stiffness = rotate_stiffness(si.stiffness, theta);
      for (double phi : {0.0, 0.3, 1.1, 2.0}) {
        const auto got =
            christoffel_velocities(rot, Eigen::Vector2d(std::cos(phi), std::sin(phi)), red);
        const auto want = oracle::christoffel(rot.stiffness.matrix(), rot.density, std::cos(phi),
                                              std::sin(phi), stress);
        CHECK(got[0] == doctest::Approx(want[0]).epsilon(1e-12));
        CHECK(got[1] == doctest::Approx(want[1]).epsilon(1e-12));
      }
    }
  }
  CHECK_THROWS_AS(christoffel_velocities(si, Eigen::Vector2d(1.0, 1.0)), MaterialError);
}

TEST_CASE("reported orientation folds into the first quadrant") {
  CHECK(Orientation{kPi / 2 + 0.1}.reported() == doctest::Approx(0.1));
  CHECK(Orientation{-0.1}.reported() == doctest::Approx(kPi / 2 - 0.1));
}
