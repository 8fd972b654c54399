#include "anisoband/materials.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace anisoband {

VoigtStiffness::VoigtStiffness(const Matrix6d& c) {
  const double scale = std::max(c.cwiseAbs().maxCoeff(), 1e-300);
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw MaterialError("Voigt stiffness is not symmetric");
  }
  if (!c.allFinite()) throw MaterialError("Voigt stiffness has non-finite entries");
  c_ = 0.5 * (c + c.transpose());
}

VoigtStiffness VoigtStiffness::cubic(double c11, double c12, double c44) {
  Matrix6d c = Matrix6d::Zero();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) c(i, j) = (i == j) ? c11 : c12;
    c(i + 3, i + 3) = c44;
  }
  return VoigtStiffness(c);
}

VoigtStiffness VoigtStiffness::isotropic(double c11, double c44) {
  return cubic(c11, c11 - 2.0 * c44, c44);
}

bool VoigtStiffness::positive_definite() const {
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(c_, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() > 0.0;
}

VoigtStiffness VoigtStiffness::scaled(double factor) const {
  return VoigtStiffness(Matrix6d(c_ * factor));
}

void ElasticMaterial::validate() const {
  if (!(density > 0.0) || !std::isfinite(density)) {
    throw MaterialError("material '" + name + "': density must be positive");
  }
  if (!filler && !stiffness.positive_definite()) {
    throw MaterialError("material '" + name + "': stiffness is not positive definite");
  }
}

ElasticMaterial make_filler(const ElasticMaterial& solid, double density_ratio,
                            double stiffness_ratio) {
  if (!(density_ratio > 0.0) || !(stiffness_ratio > 0.0)) {
    throw MaterialError("filler ratios must be positive");
  }
  ElasticMaterial f;
  f.name = solid.name + "-filler";
  f.density = solid.density * density_ratio;
  f.stiffness = solid.stiffness.scaled(stiffness_ratio);
  f.filler = true;
  return f;
}

double Orientation::reported() const {
  constexpr double quarter = std::numbers::pi / 2.0;
  double t = std::fmod(theta, quarter);
  if (t < 0.0) t += quarter;
  if (t >= quarter) t = 0.0;
  return t;
}

Matrix6d bond_matrix_z(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Eigen::Matrix3d a;
  a << c, -s, 0.0,
       s, c, 0.0,
       0.0, 0.0, 1.0;

  // Auld's stress transformation matrix for Voigt order (11,22,33,23,13,12).
  constexpr int pair_i[6] = {0, 1, 2, 1, 2, 0};
  constexpr int pair_j[6] = {0, 1, 2, 2, 0, 1};
  Matrix6d m;
  for (int r = 0; r < 6; ++r) {
    const int i = pair_i[r];
    const int j = pair_j[r];
    for (int col = 0; col < 6; ++col) {
      const int k = pair_i[col];
      const int l = pair_j[col];
      if (col < 3) {
        m(r, col) = a(i, k) * a(j, l);
      } else {
        m(r, col) = a(i, k) * a(j, l) + a(i, l) * a(j, k);
      }
    }
  }
  return m;
}

VoigtStiffness rotate_stiffness(const VoigtStiffness& c, double theta) {
  const Matrix6d m = bond_matrix_z(theta);
  const Matrix6d r = m * c.matrix() * m.transpose();
  return VoigtStiffness(Matrix6d(0.5 * (r + r.transpose())));
}

double anisotropy_factor(const VoigtStiffness& c) {
  return c(0, 0) - c(0, 1) - 2.0 * c(3, 3);
}

Reduction parse_reduction(const std::string& name) {
  if (name == "plane_stress") return Reduction::PlaneStress;
  if (name == "plane_strain") return Reduction::PlaneStrain;
  throw MaterialError("unknown in-plane reduction '" + name + "'");
}

std::string to_string(Reduction r) {
  return r == Reduction::PlaneStress ? "plane_stress" : "plane_strain";
}

Eigen::Matrix3d in_plane_stiffness(const VoigtStiffness& c, Reduction reduction) {
  constexpr int idx[3] = {0, 1, 5};
  Eigen::Matrix3d q;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      q(i, j) = c(idx[i], idx[j]);
      if (reduction == Reduction::PlaneStress) {
        q(i, j) -= c(idx[i], 2) * c(2, idx[j]) / c(2, 2);
      }
    }
  }
  return 0.5 * (q + q.transpose());
}

namespace {

// Unfold the reduced 3x3 Voigt matrix to the rank-4 in-plane tensor.
double in_plane_component(const Eigen::Matrix3d& q, int i, int j, int k, int l) {
  auto voigt = [](int a, int b) { return a == b ? a : 2; };
  return q(voigt(i, j), voigt(k, l));
}

}  // namespace

std::array<double, 2> christoffel_velocities(const ElasticMaterial& m,
                                             const Eigen::Vector2d& direction,
                                             Reduction reduction) {
  if (!(m.density > 0.0)) throw MaterialError("christoffel: density must be positive");
  if (std::abs(direction.norm() - 1.0) > 1e-9) {
    throw MaterialError("christoffel: direction must be a unit vector");
  }
  const Eigen::Matrix3d q = in_plane_stiffness(m.stiffness, reduction);
  Eigen::Matrix2d gamma = Eigen::Matrix2d::Zero();
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k)
      for (int j = 0; j < 2; ++j)
        for (int l = 0; l < 2; ++l)
          gamma(i, k) += in_plane_component(q, i, j, k, l) * direction[j] * direction[l];
  gamma /= m.density;

  // Closed-form eigenvalues of the symmetric 2x2.
  const double tr = gamma(0, 0) + gamma(1, 1);
  const double diff = gamma(0, 0) - gamma(1, 1);
  const double disc = std::sqrt(diff * diff + 4.0 * gamma(0, 1) * gamma(1, 0));
  const double lo = std::max(0.5 * (tr - disc), 0.0);
  const double hi = std::max(0.5 * (tr + disc), 0.0);
  return {std::sqrt(lo), std::sqrt(hi)};
}

}  // namespace anisoband
