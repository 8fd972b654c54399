#pragma once

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace anisoband {

using Matrix6d = Eigen::Matrix<double, 6, 6>;

class MaterialError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// 6x6 stiffness in Voigt order (11, 22, 33, 23, 13, 12), Pa.
class VoigtStiffness {
 public:
  VoigtStiffness() : c_(Matrix6d::Zero()) {}

  // Rejects inputs whose asymmetry exceeds 1e-12 of the largest entry; the
  // stored matrix is the exact symmetric part.
  explicit VoigtStiffness(const Matrix6d& c);

  static VoigtStiffness cubic(double c11, double c12, double c44);
  static VoigtStiffness isotropic(double c11, double c44);

  const Matrix6d& matrix() const { return c_; }
  double operator()(int i, int j) const { return c_(i, j); }
  bool positive_definite() const;

  VoigtStiffness scaled(double factor) const;

 private:
  Matrix6d c_;
};

struct ElasticMaterial {
  std::string name;
  double density = 0.0;  // kg/m^3
  VoigtStiffness stiffness;
  // Vacuum stand-in; exempt from the positive-definiteness requirement.
  bool filler = false;

  void validate() const;
};

// The filler pseudo-material used for holes, scaled from the solid.
ElasticMaterial make_filler(const ElasticMaterial& solid, double density_ratio,
                            double stiffness_ratio);

struct PhysicalConstants {
  static constexpr double hbar = 1.054571817e-34;  // J s
  static constexpr double kB = 1.380649e-23;       // J/K
};

// Angle of the device x-axis relative to the crystal, radians.
struct Orientation {
  double theta = 0.0;

  // theta folded into [0, pi/2).
  double reported() const;
};

// Bond matrix for an active rotation by theta about the z ([001]) axis.
Matrix6d bond_matrix_z(double theta);

// C' = M(theta) C M(theta)^T.
VoigtStiffness rotate_stiffness(const VoigtStiffness& c, double theta);

// H = C11 - C12 - 2 C44. Zero for isotropic tensors.
double anisotropy_factor(const VoigtStiffness& c);

// How the 3D tensor is reduced for in-plane (x, y) motion.
enum class Reduction { PlaneStress, PlaneStrain };

Reduction parse_reduction(const std::string& name);
std::string to_string(Reduction r);

// 3x3 in-plane stiffness over the engineering strains (e11, e22, 2 e12).
// Plane stress eliminates sigma_33 = 0 by static condensation; plane strain
// drops the out-of-plane rows.
Eigen::Matrix3d in_plane_stiffness(const VoigtStiffness& c, Reduction reduction);

// Phase velocities of in-plane bulk waves along a unit direction, ascending.
std::array<double, 2> christoffel_velocities(const ElasticMaterial& m,
                                             const Eigen::Vector2d& direction,
                                             Reduction reduction = Reduction::PlaneStress);

}  // namespace anisoband
