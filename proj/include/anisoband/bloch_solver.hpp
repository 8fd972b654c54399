#pragma once

#include "anisoband/geometry.hpp"
#include "anisoband/materials.hpp"

#include <Eigen/Dense>

#include <complex>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace anisoband {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reciprocal vectors G = (2 pi m / ax, 2 pi n / ay) with |m| <= nmax_x and
// |n| <= nmax_y. Symmetric by construction, so G = 0 is present and the set
// is closed under negation.
class PlaneWaveBasis {
 public:
  PlaneWaveBasis(int nmax_x, int nmax_y, double ax, double ay);

  int nmax_x() const { return nmax_x_; }
  int nmax_y() const { return nmax_y_; }
  double ax() const { return ax_; }
  double ay() const { return ay_; }
  std::size_t size() const { return static_cast<std::size_t>(cols()) * rows(); }

  int m(std::size_t i) const { return static_cast<int>(i / rows()) - nmax_x_; }
  int n(std::size_t i) const { return static_cast<int>(i % rows()) - nmax_y_; }
  Eigen::Vector2d g(std::size_t i) const;
  // -1 when (m, n) lies outside the basis.
  std::ptrdiff_t find(int m, int n) const;

 private:
  int cols() const { return 2 * nmax_x_ + 1; }
  int rows() const { return 2 * nmax_y_ + 1; }

  int nmax_x_, nmax_y_;
  double ax_, ay_;
};

struct BlochWavevector {
  double kx = 0.0;
  double ky = 0.0;
};

// Discrete Fourier transforms of each palette material's indicator over all
// index differences that appear in assembly: |dm| <= 2 nmax_x, |dn| <= 2 nmax_y.
class StructureFactors {
 public:
  StructureFactors(const MaterialGrid& grid, const PlaneWaveBasis& basis);

  std::complex<double> operator()(std::size_t material, int dm, int dn) const;
  std::size_t materials() const { return tables_.size(); }
  // True when every coefficient is real to rounding (centrosymmetric grid).
  bool real() const { return real_; }

 private:
  int span_x_, span_y_;
  std::vector<std::vector<std::complex<double>>> tables_;
  bool real_ = false;
};

// Per-material density and in-plane stiffness for one orientation.
struct MaterialPalette {
  std::vector<double> density;
  std::vector<Eigen::Matrix3d> stiffness;
};

// Rotates every palette entry by theta, optionally zeroing the C16/C26
// couplings after rotation, then reduces to the in-plane 3x3.
MaterialPalette rotated_palette(const std::vector<ElasticMaterial>& palette, double theta,
                                Reduction reduction, bool force_c16_zero = false);

struct GeneralizedEigenProblem {
  Eigen::MatrixXcd K;
  Eigen::MatrixXcd M;
  BlochWavevector k;
  double theta = 0.0;
  std::shared_ptr<const PlaneWaveBasis> basis;
  bool real = false;  // imaginary parts vanish to rounding

  double hermiticity_residual_K() const;
  double hermiticity_residual_M() const;
};

GeneralizedEigenProblem assemble(const StructureFactors& factors, const MaterialPalette& palette,
                                 const BlochWavevector& k,
                                 std::shared_ptr<const PlaneWaveBasis> basis);

// Convenience overload: computes the structure factors first. Requires the
// grid to resolve every index difference (nx > 4 nmax_x, ny > 4 nmax_y).
GeneralizedEigenProblem assemble(const MaterialGrid& grid, const MaterialPalette& palette,
                                 const BlochWavevector& k,
                                 std::shared_ptr<const PlaneWaveBasis> basis);

enum class SymmetryOp { SigmaX, SigmaY, RzPi };
std::string to_string(SymmetryOp op);
std::optional<SymmetryOp> parse_symmetry_op(const std::string& s);

// Action of a point operation on Fourier coefficients at wavevector k:
// (S u)_{target[a]} = D u_a. Empty when the basis is not closed under S at k.
struct FourierSymmetry {
  SymmetryOp op;
  std::vector<std::size_t> target;
  Eigen::Vector2d d;  // diagonal of the vector representation
};
std::optional<FourierSymmetry> fourier_symmetry(SymmetryOp op, const PlaneWaveBasis& basis,
                                                const BlochWavevector& k);
Eigen::VectorXcd apply_symmetry(const FourierSymmetry& s, const Eigen::VectorXcd& u);

struct BlochMode {
  double omega = 0.0;  // rad/s
  BlochWavevector k;
  double theta = 0.0;
  Eigen::VectorXcd coefficients;  // interleaved (u_x, u_y) per basis vector, unit M-norm
  int band_index = 0;
  std::shared_ptr<const PlaneWaveBasis> basis;
  double relative_residual = 0.0;  // |K u - w^2 M u| / (|K| |u|)
  double norm_ratio = 0.0;         // |K| / |M| (Frobenius)
};

struct SolveOptions {
  // Relative eigenvalue spacing treated as a degeneracy.
  double degeneracy_tol = 1e-9;
  // Rotate degenerate clusters onto eigenvectors of the exact point symmetries.
  bool symmetry_adapt = true;
  double residual_limit = 1e-8;
};

std::vector<BlochMode> solve(const GeneralizedEigenProblem& p, int n_bands,
                             const SolveOptions& options = {});

struct SweepOptions {
  int grid_nx = 64;
  int grid_ny = 432;
  int nmax_x = 4;
  int nmax_y = 27;
  int n_bands = 40;
  double filler_density_ratio = 1e-4;
  double filler_stiffness_ratio = 1e-6;
  Reduction reduction = Reduction::PlaneStress;
  bool force_c16_zero = false;
  int threads = 1;  // 0 = hardware concurrency
  SolveOptions solve;
};

struct BandMetadata {
  std::string geometry_hash;
  int nmax_x = 0, nmax_y = 0;
  int grid_nx = 0, grid_ny = 0;
  double filler_density_ratio = 0.0;
  double filler_stiffness_ratio = 0.0;
  Reduction reduction = Reduction::PlaneStress;
  bool force_c16_zero = false;
};

// Modes indexed by (theta, k-point, band) with a complete rectangular index set.
struct BandStructure {
  std::vector<double> thetas;
  std::vector<BlochWavevector> kpoints;
  int n_bands = 0;
  std::vector<BlochMode> modes;
  BandMetadata metadata;
  std::shared_ptr<const MaterialGrid> grid;
  std::shared_ptr<const PlaneWaveBasis> basis;
  // Density transform over index differences; empty means M = identity.
  std::vector<std::complex<double>> density_hat;

  const BlochMode& mode(std::size_t t, std::size_t k, std::size_t b) const;
  BlochMode& mode(std::size_t t, std::size_t k, std::size_t b);
  double frequency_hz(std::size_t t, std::size_t k, std::size_t b) const;
  Eigen::VectorXcd apply_mass(const Eigen::VectorXcd& u) const;
};

BandStructure band_sweep_grid(std::shared_ptr<const MaterialGrid> grid,
                              const std::vector<double>& thetas,
                              const std::vector<BlochWavevector>& kpath,
                              const SweepOptions& options);

BandStructure band_sweep(const UnitCellGeometry& geometry, const std::vector<double>& thetas,
                         const std::vector<BlochWavevector>& kpath, const ElasticMaterial& solid,
                         const SweepOptions& options);

// band_sweep with the rotated C16 and C26 entries zeroed before assembly.
BandStructure force_c16_zero_sweep(const UnitCellGeometry& geometry,
                                   const std::vector<double>& thetas,
                                   const std::vector<BlochWavevector>& kpath,
                                   const ElasticMaterial& solid, SweepOptions options);

// Eigenvalue uncertainty implied by the residual limit, as a frequency in Hz.
double residual_frequency_bound(const BlochMode& mode, double residual_limit = 1e-8);

}  // namespace anisoband
