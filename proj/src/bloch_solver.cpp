#include "anisoband/bloch_solver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>

namespace anisoband {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
using cplx = std::complex<double>;
}  // namespace

PlaneWaveBasis::PlaneWaveBasis(int nmax_x, int nmax_y, double ax, double ay)
    : nmax_x_(nmax_x), nmax_y_(nmax_y), ax_(ax), ay_(ay) {
  if (nmax_x < 0 || nmax_y < 0) throw SolverError("plane-wave cutoff must be non-negative");
  if (!(ax > 0.0) || !(ay > 0.0)) throw SolverError("plane-wave basis needs a positive cell");
}

Eigen::Vector2d PlaneWaveBasis::g(std::size_t i) const {
  return {kTwoPi * m(i) / ax_, kTwoPi * n(i) / ay_};
}

std::ptrdiff_t PlaneWaveBasis::find(int m, int n) const {
  if (std::abs(m) > nmax_x_ || std::abs(n) > nmax_y_) return -1;
  return static_cast<std::ptrdiff_t>(m + nmax_x_) * rows() + (n + nmax_y_);
}

StructureFactors::StructureFactors(const MaterialGrid& grid, const PlaneWaveBasis& basis)
    : span_x_(2 * basis.nmax_x()), span_y_(2 * basis.nmax_y()) {
  if (grid.nx <= 2 * span_x_ || grid.ny <= 2 * span_y_) {
    std::ostringstream os;
    os << "grid " << grid.nx << "x" << grid.ny << " aliases Fourier index differences up to ("
       << span_x_ << ", " << span_y_ << "); need nx > " << 2 * span_x_ << " and ny > "
       << 2 * span_y_;
    throw SolverError(os.str());
  }
  const int wx = 2 * span_x_ + 1;
  const int wy = 2 * span_y_ + 1;

  // Phase tables e^{-i 2 pi d x_i / a} at pixel centres.
  std::vector<cplx> px(static_cast<std::size_t>(wx) * grid.nx);
  for (int d = -span_x_; d <= span_x_; ++d) {
    for (int i = 0; i < grid.nx; ++i) {
      const double arg = -kTwoPi * d * grid.x(i) / grid.ax;
      px[static_cast<std::size_t>(d + span_x_) * grid.nx + i] = {std::cos(arg), std::sin(arg)};
    }
  }
  std::vector<cplx> py(static_cast<std::size_t>(wy) * grid.ny);
  for (int d = -span_y_; d <= span_y_; ++d) {
    for (int j = 0; j < grid.ny; ++j) {
      const double arg = -kTwoPi * d * grid.y(j) / grid.ay;
      py[static_cast<std::size_t>(d + span_y_) * grid.ny + j] = {std::cos(arg), std::sin(arg)};
    }
  }

  const double norm = 1.0 / (static_cast<double>(grid.nx) * grid.ny);
  const std::size_t n_mat = grid.palette.size();
  tables_.assign(n_mat, std::vector<cplx>(static_cast<std::size_t>(wx) * wy));
  std::vector<cplx> partial(static_cast<std::size_t>(wx) * grid.ny);
  double max_abs = 0.0;
  double max_imag = 0.0;
  for (std::size_t mat = 0; mat < n_mat; ++mat) {
    std::fill(partial.begin(), partial.end(), cplx{});
    for (int j = 0; j < grid.ny; ++j) {
      for (int i = 0; i < grid.nx; ++i) {
        if (grid.material[grid.index(i, j)] != mat) continue;
        for (int d = 0; d < wx; ++d) {
          partial[static_cast<std::size_t>(d) * grid.ny + j] +=
              px[static_cast<std::size_t>(d) * grid.nx + i];
        }
      }
    }
    auto& table = tables_[mat];
    for (int dx = 0; dx < wx; ++dx) {
      for (int dy = 0; dy < wy; ++dy) {
        cplx acc{};
        for (int j = 0; j < grid.ny; ++j) {
          acc += partial[static_cast<std::size_t>(dx) * grid.ny + j] *
                 py[static_cast<std::size_t>(dy) * grid.ny + j];
        }
        acc *= norm;
        table[static_cast<std::size_t>(dx) * wy + dy] = acc;
        max_abs = std::max(max_abs, std::abs(acc));
        max_imag = std::max(max_imag, std::abs(acc.imag()));
      }
    }
  }
  real_ = max_imag <= 1e-12 * std::max(max_abs, 1e-300);
  if (real_) {
    for (auto& t : tables_)
      for (auto& v : t) v = {v.real(), 0.0};
  }
}

cplx StructureFactors::operator()(std::size_t material, int dm, int dn) const {
  const int wy = 2 * span_y_ + 1;
  return tables_[material][static_cast<std::size_t>(dm + span_x_) * wy + (dn + span_y_)];
}

MaterialPalette rotated_palette(const std::vector<ElasticMaterial>& palette, double theta,
                                Reduction reduction, bool force_c16_zero) {
  MaterialPalette out;
  for (const auto& m : palette) {
    Matrix6d c = rotate_stiffness(m.stiffness, theta).matrix();
    if (force_c16_zero) {
      c(0, 5) = c(5, 0) = 0.0;
      c(1, 5) = c(5, 1) = 0.0;
    }
    out.density.push_back(m.density);
    out.stiffness.push_back(in_plane_stiffness(VoigtStiffness(c), reduction));
  }
  return out;
}

double GeneralizedEigenProblem::hermiticity_residual_K() const {
  return (K - K.adjoint()).norm() / std::max(K.norm(), 1e-300);
}

double GeneralizedEigenProblem::hermiticity_residual_M() const {
  return (M - M.adjoint()).norm() / std::max(M.norm(), 1e-300);
}

GeneralizedEigenProblem assemble(const StructureFactors& factors, const MaterialPalette& palette,
                                 const BlochWavevector& k,
                                 std::shared_ptr<const PlaneWaveBasis> basis) {
  if (!basis || basis->size() == 0) throw SolverError("assemble: empty plane-wave basis");
  if (palette.density.size() != factors.materials()) {
    throw SolverError("assemble: palette does not match the grid materials");
  }
  const std::size_t nb = basis->size();
  const std::size_t n_mat = palette.density.size();

  GeneralizedEigenProblem p;
  p.k = k;
  p.basis = basis;
  p.real = factors.real();
  p.K.resize(2 * nb, 2 * nb);
  p.M.resize(2 * nb, 2 * nb);

  std::vector<Eigen::Vector2d> q(nb);
  for (std::size_t a = 0; a < nb; ++a) q[a] = Eigen::Vector2d(k.kx, k.ky) + basis->g(a);

  for (std::size_t a = 0; a < nb; ++a) {
    const double qax = q[a].x(), qay = q[a].y();
    for (std::size_t b = 0; b < nb; ++b) {
      const int dm = basis->m(a) - basis->m(b);
      const int dn = basis->n(a) - basis->n(b);
      Eigen::Matrix3cd qhat = Eigen::Matrix3cd::Zero();
      cplx rho{};
      for (std::size_t mat = 0; mat < n_mat; ++mat) {
        const cplx chi = factors(mat, dm, dn);
        if (chi == cplx{}) continue;
        qhat += chi * palette.stiffness[mat].cast<cplx>();
        rho += chi * palette.density[mat];
      }
      const double qbx = q[b].x(), qby = q[b].y();
      // Strain operator B(q) maps (u_x, u_y) to (e11, e22, 2 e12).
      const Eigen::Vector3cd t0 = qhat.col(0) * qbx + qhat.col(2) * qby;
      const Eigen::Vector3cd t1 = qhat.col(1) * qby + qhat.col(2) * qbx;
      const std::size_t r = 2 * a, c = 2 * b;
      p.K(r, c) = qax * t0(0) + qay * t0(2);
      p.K(r, c + 1) = qax * t1(0) + qay * t1(2);
      p.K(r + 1, c) = qay * t0(1) + qax * t0(2);
      p.K(r + 1, c + 1) = qay * t1(1) + qax * t1(2);
      p.M(r, c) = rho;
      p.M(r, c + 1) = 0.0;
      p.M(r + 1, c) = 0.0;
      p.M(r + 1, c + 1) = rho;
    }
  }
  return p;
}

GeneralizedEigenProblem assemble(const MaterialGrid& grid, const MaterialPalette& palette,
                                 const BlochWavevector& k,
                                 std::shared_ptr<const PlaneWaveBasis> basis) {
  if (!basis) throw SolverError("assemble: empty plane-wave basis");
  const StructureFactors factors(grid, *basis);
  return assemble(factors, palette, k, std::move(basis));
}

std::string to_string(SymmetryOp op) {
  switch (op) {
    case SymmetryOp::SigmaX: return "sx";
    case SymmetryOp::SigmaY: return "sy";
    case SymmetryOp::RzPi: return "rz";
  }
  return "?";
}

std::optional<SymmetryOp> parse_symmetry_op(const std::string& s) {
  if (s == "sx" || s == "sigma_x") return SymmetryOp::SigmaX;
  if (s == "sy" || s == "sigma_y") return SymmetryOp::SigmaY;
  if (s == "rz" || s == "rz_pi") return SymmetryOp::RzPi;
  return std::nullopt;
}

namespace {

Eigen::Vector2d op_diagonal(SymmetryOp op) {
  switch (op) {
    case SymmetryOp::SigmaX: return {-1.0, 1.0};
    case SymmetryOp::SigmaY: return {1.0, -1.0};
    case SymmetryOp::RzPi: return {-1.0, -1.0};
  }
  return {1.0, 1.0};
}

bool integral_shift(double value, int& out) {
  const double r = std::round(value);
  if (std::abs(value - r) > 1e-9 * std::max(1.0, std::abs(value))) return false;
  out = static_cast<int>(r);
  return true;
}

}  // namespace

std::optional<FourierSymmetry> fourier_symmetry(SymmetryOp op, const PlaneWaveBasis& basis,
                                                const BlochWavevector& k) {
  const Eigen::Vector2d d = op_diagonal(op);
  int sx = 0, sy = 0;
  if (!integral_shift((d.x() * k.kx - k.kx) * basis.ax() / kTwoPi, sx)) return std::nullopt;
  if (!integral_shift((d.y() * k.ky - k.ky) * basis.ay() / kTwoPi, sy)) return std::nullopt;
  FourierSymmetry s{op, std::vector<std::size_t>(basis.size()), d};
  for (std::size_t a = 0; a < basis.size(); ++a) {
    const int m = static_cast<int>(d.x()) * basis.m(a) + sx;
    const int n = static_cast<int>(d.y()) * basis.n(a) + sy;
    const auto t = basis.find(m, n);
    if (t < 0) return std::nullopt;
    s.target[a] = static_cast<std::size_t>(t);
  }
  return s;
}

Eigen::VectorXcd apply_symmetry(const FourierSymmetry& s, const Eigen::VectorXcd& u) {
  Eigen::VectorXcd out(u.size());
  for (std::size_t a = 0; a < s.target.size(); ++a) {
    out(2 * s.target[a]) = s.d.x() * u(2 * a);
    out(2 * s.target[a] + 1) = s.d.y() * u(2 * a + 1);
  }
  return out;
}

namespace {

// True when K and M commute with the signed permutation to within tol.
bool is_exact_symmetry(const GeneralizedEigenProblem& p, const FourierSymmetry& s, double tol) {
  const std::size_t nb = s.target.size();
  const double k_tol = tol * p.K.cwiseAbs().maxCoeff();
  const double m_tol = tol * p.M.cwiseAbs().maxCoeff();
  for (std::size_t a = 0; a < nb; ++a) {
    const std::size_t ta = s.target[a];
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t tb = s.target[b];
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          const double sign = s.d(i) * s.d(j);
          if (std::abs(p.K(2 * ta + i, 2 * tb + j) - sign * p.K(2 * a + i, 2 * b + j)) > k_tol) {
            return false;
          }
          if (std::abs(p.M(2 * ta + i, 2 * tb + j) - sign * p.M(2 * a + i, 2 * b + j)) > m_tol) {
            return false;
          }
        }
      }
    }
  }
  return true;
}

void phase_fix(Eigen::Ref<Eigen::VectorXcd> v) {
  const double peak = v.cwiseAbs().maxCoeff();
  if (peak == 0.0) return;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) >= (1.0 - 1e-9) * peak) {
      v *= std::conj(v(i)) / std::abs(v(i));
      return;
    }
  }
}

bool lexicographic_less(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double tol = 1e-10 * (std::abs(a(i)) + std::abs(b(i)) + 1e-300);
    if (std::abs(a(i).real() - b(i).real()) > tol) return a(i).real() > b(i).real();
    if (std::abs(a(i).imag() - b(i).imag()) > tol) return a(i).imag() > b(i).imag();
  }
  return false;
}

void dense_generalized_eig(const GeneralizedEigenProblem& p, Eigen::VectorXd& w,
                           Eigen::MatrixXcd& vecs) {
  auto fail = [](Eigen::ComputationInfo info) {
    if (info == Eigen::NumericalIssue) throw SolverError("mass matrix is not positive definite");
    throw SolverError("dense Hermitian eigensolver failed to converge");
  };
  if (p.real) {
    const Eigen::MatrixXd a = p.K.real();
    const Eigen::MatrixXd b = p.M.real();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(a, b);
    if (es.info() != Eigen::Success) fail(es.info());
    w = es.eigenvalues();
    vecs = es.eigenvectors().cast<cplx>();
  } else {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXcd> es(p.K, p.M);
    if (es.info() != Eigen::Success) fail(es.info());
    w = es.eigenvalues();
    vecs = es.eigenvectors();
  }
}

}  // namespace

std::vector<BlochMode> solve(const GeneralizedEigenProblem& p, int n_bands,
                             const SolveOptions& options) {
  const Eigen::Index n = p.K.rows();
  if (n_bands < 1 || n_bands > n) {
    throw SolverError("solve: n_bands must lie in [1, " + std::to_string(n) + "]");
  }
  const double norm_k = p.K.norm();
  const double norm_m = p.M.norm();
  const double scale = norm_k / norm_m;
  const double eps = 1e-10 * scale;

  Eigen::VectorXd w;
  Eigen::MatrixXcd vecs;
  dense_generalized_eig(p, w, vecs);

  for (Eigen::Index i = 0; i < n_bands; ++i) {
    if (w(i) < -eps) {
      std::ostringstream os;
      os << "negative eigenvalue " << w(i) << " below clamp threshold " << -eps;
      throw SolverError(os.str());
    }
    if (std::abs(w(i)) < eps) w(i) = 0.0;
  }

  // Clusters of (near-)degenerate eigenvalues; the last cluster may extend
  // past n_bands so that it is adapted as a whole.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> clusters;
  for (Eigen::Index i = 0; i < n_bands;) {
    Eigen::Index j = i + 1;
    while (j < n &&
           std::abs(w(j) - w(j - 1)) <= options.degeneracy_tol * std::abs(w(j)) + 1e-12 * scale) {
      ++j;
    }
    clusters.emplace_back(i, j);
    i = j;
  }

  std::vector<FourierSymmetry> symmetries;
  bool symmetries_ready = false;
  for (auto [lo, hi] : clusters) {
    const Eigen::Index c = hi - lo;
    if (c > 1 && options.symmetry_adapt) {
      if (!symmetries_ready) {
        for (auto op : {SymmetryOp::SigmaY, SymmetryOp::SigmaX, SymmetryOp::RzPi}) {
          auto s = fourier_symmetry(op, *p.basis, p.k);
          if (s && is_exact_symmetry(p, *s, 1e-10)) symmetries.push_back(std::move(*s));
        }
        symmetries_ready = true;
      }
      if (!symmetries.empty()) {
        Eigen::MatrixXcd v = vecs.middleCols(lo, c);
        const Eigen::MatrixXcd mv = p.M * v;
        Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(c, c);
        double weight = 1.0;
        for (const auto& s : symmetries) {
          Eigen::MatrixXcd sv(v.rows(), c);
          for (Eigen::Index col = 0; col < c; ++col) sv.col(col) = apply_symmetry(s, v.col(col));
          h += weight * (mv.adjoint() * sv);
          weight *= 0.5;
        }
        h = 0.5 * (h + h.adjoint()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
        vecs.middleCols(lo, c) = v * es.eigenvectors();
      }
    }
    for (Eigen::Index col = lo; col < hi; ++col) phase_fix(vecs.col(col));
    if (c > 1) {
      std::vector<Eigen::VectorXcd> members;
      for (Eigen::Index col = lo; col < hi; ++col) members.push_back(vecs.col(col));
      std::stable_sort(members.begin(), members.end(), lexicographic_less);
      for (Eigen::Index col = lo; col < hi; ++col) vecs.col(col) = members[col - lo];
    }
  }

  const Eigen::MatrixXcd v = vecs.leftCols(n_bands);
  const Eigen::MatrixXcd residual =
      p.K * v - (p.M * v) * w.head(n_bands).cast<cplx>().asDiagonal();

  std::vector<BlochMode> modes;
  modes.reserve(n_bands);
  for (int b = 0; b < n_bands; ++b) {
    const double rel = residual.col(b).norm() / (norm_k * v.col(b).norm());
    if (rel > options.residual_limit) {
      std::ostringstream os;
      os << "eigenpair " << b << " residual " << rel << " exceeds " << options.residual_limit;
      throw SolverError(os.str());
    }
    BlochMode m;
    m.omega = std::sqrt(std::max(w(b), 0.0));
    m.k = p.k;
    m.theta = p.theta;
    m.coefficients = v.col(b);
    m.band_index = b;
    m.basis = p.basis;
    m.relative_residual = rel;
    m.norm_ratio = scale;
    modes.push_back(std::move(m));
  }
  return modes;
}

const BlochMode& BandStructure::mode(std::size_t t, std::size_t k, std::size_t b) const {
  return modes.at((t * kpoints.size() + k) * n_bands + b);
}

BlochMode& BandStructure::mode(std::size_t t, std::size_t k, std::size_t b) {
  return modes.at((t * kpoints.size() + k) * n_bands + b);
}

double BandStructure::frequency_hz(std::size_t t, std::size_t k, std::size_t b) const {
  return mode(t, k, b).omega / kTwoPi;
}

Eigen::VectorXcd BandStructure::apply_mass(const Eigen::VectorXcd& u) const {
  if (density_hat.empty() || !basis) return u;
  const std::size_t nb = basis->size();
  const int wy = 4 * basis->nmax_y() + 1;
  const int sx = 2 * basis->nmax_x();
  const int sy = 2 * basis->nmax_y();
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(u.size());
  for (std::size_t a = 0; a < nb; ++a) {
    cplx ax{}, ay{};
    for (std::size_t b = 0; b < nb; ++b) {
      const int dm = basis->m(a) - basis->m(b) + sx;
      const int dn = basis->n(a) - basis->n(b) + sy;
      const cplx rho = density_hat[static_cast<std::size_t>(dm) * wy + dn];
      ax += rho * u(2 * b);
      ay += rho * u(2 * b + 1);
    }
    out(2 * a) = ax;
    out(2 * a + 1) = ay;
  }
  return out;
}

BandStructure band_sweep_grid(std::shared_ptr<const MaterialGrid> grid,
                              const std::vector<double>& thetas,
                              const std::vector<BlochWavevector>& kpath,
                              const SweepOptions& options) {
  if (thetas.empty() || kpath.empty()) throw SolverError("band sweep needs non-empty sweeps");
  auto basis =
      std::make_shared<const PlaneWaveBasis>(options.nmax_x, options.nmax_y, grid->ax, grid->ay);
  const StructureFactors factors(*grid, *basis);

  BandStructure bs;
  bs.thetas = thetas;
  bs.kpoints = kpath;
  bs.n_bands = options.n_bands;
  bs.grid = grid;
  bs.basis = basis;
  bs.metadata.nmax_x = options.nmax_x;
  bs.metadata.nmax_y = options.nmax_y;
  bs.metadata.grid_nx = grid->nx;
  bs.metadata.grid_ny = grid->ny;
  bs.metadata.filler_density_ratio = options.filler_density_ratio;
  bs.metadata.filler_stiffness_ratio = options.filler_stiffness_ratio;
  bs.metadata.reduction = options.reduction;
  bs.metadata.force_c16_zero = options.force_c16_zero;

  {
    const int sx = 2 * options.nmax_x, sy = 2 * options.nmax_y;
    bs.density_hat.resize(static_cast<std::size_t>(2 * sx + 1) * (2 * sy + 1));
    for (int dm = -sx; dm <= sx; ++dm) {
      for (int dn = -sy; dn <= sy; ++dn) {
        cplx acc{};
        for (std::size_t mat = 0; mat < grid->palette.size(); ++mat) {
          acc += factors(mat, dm, dn) * grid->palette[mat].density;
        }
        bs.density_hat[static_cast<std::size_t>(dm + sx) * (2 * sy + 1) + (dn + sy)] = acc;
      }
    }
  }

  std::vector<MaterialPalette> palettes;
  for (double t : thetas) {
    palettes.push_back(
        rotated_palette(grid->palette, t, options.reduction, options.force_c16_zero));
  }

  const std::size_t tasks = thetas.size() * kpath.size();
  bs.modes.resize(tasks * options.n_bands);
  std::vector<std::string> error_text(tasks);
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (std::size_t task = next++; task < tasks; task = next++) {
      const std::size_t ti = task / kpath.size();
      const std::size_t ki = task % kpath.size();
      try {
        auto problem = assemble(factors, palettes[ti], kpath[ki], basis);
        problem.theta = thetas[ti];
        auto modes = solve(problem, options.n_bands, options.solve);
        for (int b = 0; b < options.n_bands; ++b) {
          bs.modes[task * options.n_bands + b] = std::move(modes[b]);
        }
      } catch (const std::exception& e) {
        std::ostringstream os;
        os << "theta index " << ti << " (" << thetas[ti] << " rad), k index " << ki << " (kx="
           << kpath[ki].kx << "): " << e.what();
        error_text[task] = os.str();
      }
    }
  };

  int threads = options.threads;
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = static_cast<int>(std::min<std::size_t>(threads, tasks));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  for (const auto& msg : error_text) {
    if (!msg.empty()) throw SolverError(msg);
  }
  return bs;
}

BandStructure band_sweep(const UnitCellGeometry& geometry, const std::vector<double>& thetas,
                         const std::vector<BlochWavevector>& kpath, const ElasticMaterial& solid,
                         const SweepOptions& options) {
  const ElasticMaterial filler =
      make_filler(solid, options.filler_density_ratio, options.filler_stiffness_ratio);
  auto grid = std::make_shared<const MaterialGrid>(
      rasterize(geometry, options.grid_nx, options.grid_ny, solid, filler));
  auto bs = band_sweep_grid(grid, thetas, kpath, options);
  bs.metadata.geometry_hash = geometry.hash();
  return bs;
}

BandStructure force_c16_zero_sweep(const UnitCellGeometry& geometry,
                                   const std::vector<double>& thetas,
                                   const std::vector<BlochWavevector>& kpath,
                                   const ElasticMaterial& solid, SweepOptions options) {
  options.force_c16_zero = true;
  return band_sweep(geometry, thetas, kpath, solid, options);
}

double residual_frequency_bound(const BlochMode& mode, double residual_limit) {
  const double dlambda = residual_limit * mode.norm_ratio;
  if (mode.omega <= 0.0) return std::sqrt(dlambda) / kTwoPi;
  return dlambda / (2.0 * mode.omega) / kTwoPi;
}

}  // namespace anisoband
