#include "anisoband/mode_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

namespace anisoband {

namespace {
using cplx = std::complex<double>;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}  // namespace

RealSpaceField reconstruct(const BlochMode& mode, const MaterialGrid& grid) {
  if (!mode.basis) throw AnalysisError("mode carries no plane-wave basis");
  const PlaneWaveBasis& basis = *mode.basis;
  if (std::abs(basis.ax() - grid.ax) > 1e-12 * grid.ax ||
      std::abs(basis.ay() - grid.ay) > 1e-12 * grid.ay) {
    throw AnalysisError("mode and grid describe different cells");
  }
  const int cols = 2 * basis.nmax_x() + 1;
  const int rows = 2 * basis.nmax_y() + 1;

  std::vector<cplx> ex(static_cast<std::size_t>(cols) * grid.nx);
  for (int c = 0; c < cols; ++c) {
    const double q = mode.k.kx + kTwoPi * (c - basis.nmax_x()) / basis.ax();
    for (int i = 0; i < grid.nx; ++i) ex[static_cast<std::size_t>(c) * grid.nx + i] = std::polar(1.0, q * grid.x(i));
  }
  std::vector<cplx> ey(static_cast<std::size_t>(rows) * grid.ny);
  for (int r = 0; r < rows; ++r) {
    const double q = mode.k.ky + kTwoPi * (r - basis.nmax_y()) / basis.ay();
    for (int j = 0; j < grid.ny; ++j) ey[static_cast<std::size_t>(r) * grid.ny + j] = std::polar(1.0, q * grid.y(j));
  }

  RealSpaceField f;
  f.nx = grid.nx;
  f.ny = grid.ny;
  f.ux.assign(static_cast<std::size_t>(grid.nx) * grid.ny, cplx{});
  f.uy.assign(f.ux.size(), cplx{});
  std::vector<cplx> sx(static_cast<std::size_t>(grid.ny)), sy(sx.size());
  for (int c = 0; c < cols; ++c) {
    std::fill(sx.begin(), sx.end(), cplx{});
    std::fill(sy.begin(), sy.end(), cplx{});
    for (int r = 0; r < rows; ++r) {
      const std::size_t a = static_cast<std::size_t>(c) * rows + r;
      const cplx cx = mode.coefficients(2 * a);
      const cplx cy = mode.coefficients(2 * a + 1);
      if (cx == cplx{} && cy == cplx{}) continue;
      for (int j = 0; j < grid.ny; ++j) {
        const cplx e = ey[static_cast<std::size_t>(r) * grid.ny + j];
        sx[j] += cx * e;
        sy[j] += cy * e;
      }
    }
    for (int j = 0; j < grid.ny; ++j) {
      for (int i = 0; i < grid.nx; ++i) {
        const cplx e = ex[static_cast<std::size_t>(c) * grid.nx + i];
        f.ux[grid.index(i, j)] += sx[j] * e;
        f.uy[grid.index(i, j)] += sy[j] * e;
      }
    }
  }
  return f;
}

std::array<int, 2> mirror_pixel(SymmetryOp op, int nx, int ny, int i, int j) {
  switch (op) {
    case SymmetryOp::SigmaX: return {nx - 1 - i, j};
    case SymmetryOp::SigmaY: return {i, ny - 1 - j};
    case SymmetryOp::RzPi: return {nx - 1 - i, ny - 1 - j};
  }
  return {i, j};
}

ParityLabel label_for(double score, double tau) {
  if (score > tau) return ParityLabel::Even;
  if (score < -tau) return ParityLabel::Odd;
  return ParityLabel::Mixed;
}

int label_value(ParityLabel l) {
  return l == ParityLabel::Even ? 1 : (l == ParityLabel::Odd ? -1 : 0);
}

double parity_score(const RealSpaceField& f, SymmetryOp op) {
  if (f.nx % 2 != 0 || f.ny % 2 != 0) {
    throw AnalysisError("parity classification needs even grid resolutions");
  }
  const double dx = (op == SymmetryOp::SigmaY) ? 1.0 : -1.0;
  const double dy = (op == SymmetryOp::SigmaX) ? 1.0 : -1.0;
  double num = 0.0;
  double den = 0.0;
  for (int j = 0; j < f.ny; ++j) {
    for (int i = 0; i < f.nx; ++i) {
      const std::size_t p = static_cast<std::size_t>(j) * f.nx + i;
      const auto [mi, mj] = mirror_pixel(op, f.nx, f.ny, i, j);
      const std::size_t q = static_cast<std::size_t>(mj) * f.nx + mi;
      num += (std::conj(f.ux[p]) * (dx * f.ux[q]) + std::conj(f.uy[p]) * (dy * f.uy[q])).real();
      den += std::norm(f.ux[p]) + std::norm(f.uy[p]);
    }
  }
  if (den == 0.0) throw AnalysisError("parity of a zero field is undefined");
  return num / den;
}

bool parity_defined(const BlochMode& mode, SymmetryOp op) {
  if (std::abs(mode.k.ky) > 0.0 && op != SymmetryOp::SigmaX) {
    // sigma_y and R_z^pi flip ky.
    return false;
  }
  if (op == SymmetryOp::SigmaY) return true;
  if (!mode.basis) return false;
  const double edge = std::numbers::pi / mode.basis->ax();
  const double kx = std::abs(mode.k.kx);
  return kx <= 1e-9 * edge || std::abs(kx - edge) <= 1e-9 * edge;
}

ParityScore parity_score(const BlochMode& mode, const MaterialGrid& grid, SymmetryOp op,
                         double tau) {
  if (!parity_defined(mode, op)) {
    throw AnalysisError(to_string(op) +
                        " parity is only defined at the zone centre or zone edge");
  }
  ParityScore s;
  s.op = op;
  s.score = parity_score(reconstruct(mode, grid), op);
  s.label = label_for(s.score, tau);
  return s;
}

double RegionFractions::operator[](Region r) const {
  switch (r) {
    case Region::CShape: return cshape;
    case Region::Interface: return interface;
    case Region::Snowflake: return snowflake;
  }
  return 0.0;
}

Region RegionFractions::dominant() const {
  if (cshape >= interface && cshape >= snowflake) return Region::CShape;
  if (interface >= snowflake) return Region::Interface;
  return Region::Snowflake;
}

RegionFractions region_fractions(const RealSpaceField& f, const MaterialGrid& grid) {
  std::array<double, kRegionCount> acc{};
  double total = 0.0;
  for (std::size_t p = 0; p < f.ux.size(); ++p) {
    const double e =
        grid.palette[grid.material[p]].density * (std::norm(f.ux[p]) + std::norm(f.uy[p]));
    acc[static_cast<std::size_t>(grid.region[p])] += e;
    total += e;
  }
  if (total == 0.0) throw AnalysisError("region fractions of a zero field are undefined");
  return {acc[0] / total, acc[1] / total, acc[2] / total};
}

RegionFractions region_fractions(const BlochMode& mode, const MaterialGrid& grid) {
  return region_fractions(reconstruct(mode, grid), grid);
}

double solid_fraction(const RealSpaceField& f, const MaterialGrid& grid) {
  double solid = 0.0;
  double total = 0.0;
  for (std::size_t p = 0; p < f.ux.size(); ++p) {
    const double e =
        grid.palette[grid.material[p]].density * (std::norm(f.ux[p]) + std::norm(f.uy[p]));
    total += e;
    if (grid.material[p] == 0) solid += e;
  }
  return total > 0.0 ? solid / total : 0.0;
}

double ModeAnnotation::score(SymmetryOp op) const {
  switch (op) {
    case SymmetryOp::SigmaX: return sx;
    case SymmetryOp::SigmaY: return sy;
    case SymmetryOp::RzPi: return rz;
  }
  return kNaN;
}

ModeAnnotation annotate(const BlochMode& mode, const MaterialGrid& grid) {
  const RealSpaceField f = reconstruct(mode, grid);
  ModeAnnotation a;
  a.sx = parity_defined(mode, SymmetryOp::SigmaX) ? parity_score(f, SymmetryOp::SigmaX) : kNaN;
  a.sy = parity_defined(mode, SymmetryOp::SigmaY) ? parity_score(f, SymmetryOp::SigmaY) : kNaN;
  a.rz = parity_defined(mode, SymmetryOp::RzPi) ? parity_score(f, SymmetryOp::RzPi) : kNaN;
  a.fractions = region_fractions(f, grid);
  a.solid = solid_fraction(f, grid);
  return a;
}

BandTable to_table(const BandStructure& bs) {
  BandTable t;
  for (std::size_t ti = 0; ti < bs.thetas.size(); ++ti) {
    for (std::size_t ki = 0; ki < bs.kpoints.size(); ++ki) {
      for (int b = 0; b < bs.n_bands; ++b) {
        BandRow r;
        r.theta_index = ti;
        r.k_index = ki;
        r.theta = bs.thetas[ti];
        r.kx = bs.kpoints[ki].kx;
        r.band = b;
        r.freq_hz = bs.frequency_hz(ti, ki, b);
        t.rows.push_back(r);
      }
    }
  }
  return t;
}

BandTable classify(const BandStructure& bs) {
  if (!bs.grid) throw AnalysisError("classify needs the band structure's material grid");
  BandTable t = to_table(bs);
  for (auto& r : t.rows) r.annotation = annotate(bs.mode(r.theta_index, r.k_index, r.band), *bs.grid);
  return t;
}

bool ModeFilter::matches(const BandRow& row) const {
  if (!op && !dominant && min_solid_fraction <= 0.0) return true;
  if (!row.annotation) throw AnalysisError("mode filter needs classified rows");
  const ModeAnnotation& a = *row.annotation;
  if (op) {
    const double s = a.score(*op);
    if (std::isnan(s)) return false;
    if (label_value(label_for(s, tau)) != parity) return false;
  }
  if (dominant && a.fractions.dominant() != *dominant) return false;
  if (a.solid < min_solid_fraction) return false;
  return true;
}

std::string ModeFilter::describe() const {
  std::ostringstream os;
  bool first = true;
  if (op) {
    os << to_string(*op) << '=' << (parity > 0 ? "+1" : "-1");
    first = false;
  }
  if (dominant) {
    os << (first ? "" : ",") << "region=" << to_string(*dominant);
    first = false;
  }
  if (min_solid_fraction > 0.0) os << (first ? "" : ",") << "solid>=" << min_solid_fraction;
  return os.str();
}

std::string to_string(GapKind k) { return k == GapKind::Full ? "full" : "apparent"; }

std::vector<GapInterval> find_gaps(const BandTable& table, const std::optional<ModeFilter>& filter) {
  // Filtered frequencies per sweep point, ascending.
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> points;
  std::vector<double> others;
  for (const auto& r : table.rows) {
    const bool in = !filter || filter->matches(r);
    if (in) {
      points[{r.theta_index, r.k_index}].push_back(r.freq_hz);
    } else {
      others.push_back(r.freq_hz);
    }
  }
  // Envelope of the j-th filtered band across the sweep.
  std::vector<std::pair<double, double>> env;
  for (auto& [key, freqs] : points) {
    std::sort(freqs.begin(), freqs.end());
    if (env.size() < freqs.size()) {
      env.resize(freqs.size(), {std::numeric_limits<double>::infinity(),
                                -std::numeric_limits<double>::infinity()});
    }
    for (std::size_t j = 0; j < freqs.size(); ++j) {
      env[j].first = std::min(env[j].first, freqs[j]);
      env[j].second = std::max(env[j].second, freqs[j]);
    }
  }
  std::sort(env.begin(), env.end());
  std::vector<std::pair<double, double>> merged;
  for (const auto& iv : env) {
    if (!merged.empty() && iv.first <= merged.back().second) {
      merged.back().second = std::max(merged.back().second, iv.second);
    } else {
      merged.push_back(iv);
    }
  }
  std::vector<GapInterval> gaps;
  for (std::size_t i = 0; i + 1 < merged.size(); ++i) {
    GapInterval g;
    g.lo = merged[i].second;
    g.hi = merged[i + 1].first;
    if (!(g.lo < g.hi)) continue;
    g.filter = filter;
    g.kind = GapKind::Full;
    for (double f : others) {
      if (f > g.lo && f < g.hi) {
        g.kind = GapKind::Apparent;
        break;
      }
    }
    gaps.push_back(g);
  }
  return gaps;
}

std::vector<std::vector<int>> track_bands(const BandStructure& bs, std::size_t k_index,
                                          const std::vector<int>& start_bands, bool forward) {
  const std::size_t nt = bs.thetas.size();
  if (k_index >= bs.kpoints.size()) throw AnalysisError("track_bands: k index out of range");
  for (int b : start_bands) {
    if (b < 0 || b >= bs.n_bands) throw AnalysisError("track_bands: band index out of range");
  }
  auto theta_at = [&](std::size_t step) { return forward ? step : nt - 1 - step; };

  std::vector<std::vector<int>> tracks(start_bands.size());
  std::vector<int> current = start_bands;
  for (std::size_t s = 0; s < start_bands.size(); ++s) tracks[s].push_back(current[s]);

  for (std::size_t step = 1; step < nt; ++step) {
    const std::size_t from = theta_at(step - 1);
    const std::size_t to = theta_at(step);
    struct Candidate {
      double overlap;
      std::size_t track;
      int band;
    };
    std::vector<Candidate> cands;
    for (std::size_t s = 0; s < current.size(); ++s) {
      const Eigen::VectorXcd mu = bs.apply_mass(bs.mode(from, k_index, current[s]).coefficients);
      for (int b = 0; b < bs.n_bands; ++b) {
        const double ov = std::abs(bs.mode(to, k_index, b).coefficients.dot(mu));
        cands.push_back({ov, s, b});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.overlap != b.overlap) return a.overlap > b.overlap;
      if (a.track != b.track) return a.track < b.track;
      return a.band < b.band;
    });
    std::vector<int> next(current.size(), -1);
    std::vector<bool> taken(bs.n_bands, false);
    std::size_t assigned = 0;
    for (const auto& c : cands) {
      if (next[c.track] >= 0 || taken[c.band]) continue;
      next[c.track] = c.band;
      taken[c.band] = true;
      if (++assigned == current.size()) break;
    }
    current = next;
    for (std::size_t s = 0; s < current.size(); ++s) tracks[s].push_back(current[s]);
  }
  return tracks;
}

AnticrossingResult detect_anticrossing(const BandStructure& bs, int band_a, int band_b,
                                       std::size_t k_index) {
  if (band_a == band_b) throw AnalysisError("anti-crossing needs two distinct bands");
  const auto tracks = track_bands(bs, k_index, {band_a, band_b});
  AnticrossingResult r;
  r.track_a = tracks[0];
  r.track_b = tracks[1];
  r.gap_min_hz = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < bs.thetas.size(); ++t) {
    const double sep = std::abs(bs.frequency_hz(t, k_index, r.track_a[t]) -
                                bs.frequency_hz(t, k_index, r.track_b[t]));
    r.separation_hz.push_back(sep);
    if (sep < r.gap_min_hz) {
      r.gap_min_hz = sep;
      r.theta_min = bs.thetas[t];
      r.theta_index = t;
    }
  }
  return r;
}

AnticrossingPair select_anticrossing_pair(const BandStructure& bs, const BandTable& classified,
                                          std::size_t k_index, double tau) {
  std::vector<const BandRow*> first;
  for (const auto& r : classified.rows) {
    if (r.theta_index == 0 && r.k_index == k_index) first.push_back(&r);
  }
  if (first.empty() || !first.front()->annotation) {
    throw AnalysisError("anti-crossing pair selection needs a classified sweep");
  }
  auto even_rz = [&](const BandRow* r) {
    return label_for(r->annotation->rz, tau) == ParityLabel::Even && r->annotation->solid >= 0.5;
  };
  const BandRow* c = nullptr;
  for (const auto* r : first) {
    if (!even_rz(r)) continue;
    if (!c || r->annotation->fractions.cshape > c->annotation->fractions.cshape) c = r;
  }
  if (!c) throw AnalysisError("no R_z = +1 band found at the first theta");
  const int c_sy = label_value(label_for(c->annotation->sy, tau));

  AnticrossingPair best;
  best.cshape_band = c->band;
  double best_interface = -1.0;
  double best_distance = std::numeric_limits<double>::infinity();
  for (const auto* r : first) {
    if (r == c || !even_rz(r)) continue;
    if (label_value(label_for(r->annotation->sy, tau)) != -c_sy) continue;
    const auto tracks = track_bands(bs, k_index, {c->band, r->band});
    bool crosses = false;
    double prev = 0.0;
    for (std::size_t t = 0; t < bs.thetas.size(); ++t) {
      const double diff = bs.frequency_hz(t, k_index, tracks[1][t]) -
                          bs.frequency_hz(t, k_index, tracks[0][t]);
      if (t > 0 && ((prev < 0.0) != (diff < 0.0))) crosses = true;
      prev = diff;
    }
    const double interface = r->annotation->fractions.interface;
    const double distance = std::abs(r->freq_hz - c->freq_hz);
    bool take = false;
    if (crosses && !best.crosses) {
      take = true;
    } else if (crosses == best.crosses) {
      take = crosses ? interface > best_interface : distance < best_distance;
    }
    if (take) {
      best.partner_band = r->band;
      best.crosses = crosses;
      best_interface = interface;
      best_distance = distance;
    }
  }
  if (best.partner_band < 0) {
    throw AnalysisError("no R_z = +1 partner band of opposite sigma_y parity");
  }
  return best;
}

AnticrossingResult refine_anticrossing(const UnitCellGeometry& geometry,
                                       const ElasticMaterial& solid, const SweepOptions& options,
                                       const BandStructure& coarse,
                                       const AnticrossingResult& result, std::size_t k_index,
                                       int levels, int points) {
  if (points < 3) throw AnalysisError("refinement needs at least 3 points per window");
  const std::size_t n = coarse.thetas.size();
  if (n < 2) return result;

  AnticrossingResult best = result;
  std::size_t lo = result.theta_index > 0 ? result.theta_index - 1 : 0;
  std::size_t hi = std::min(result.theta_index + 1, n - 1);
  double theta_lo = coarse.thetas[lo];
  double theta_hi = coarse.thetas[hi];
  int band_a = result.track_a[lo];
  int band_b = result.track_b[lo];

  for (int level = 0; level < levels; ++level) {
    std::vector<double> thetas(points);
    for (int i = 0; i < points; ++i) {
      thetas[i] = theta_lo + (theta_hi - theta_lo) * i / (points - 1);
    }
    const BandStructure bs =
        band_sweep(geometry, thetas, {coarse.kpoints[k_index]}, solid, options);
    const AnticrossingResult r = detect_anticrossing(bs, band_a, band_b, 0);
    if (r.gap_min_hz < best.gap_min_hz) {
      best.gap_min_hz = r.gap_min_hz;
      best.theta_min = r.theta_min;
    }
    const std::size_t i = r.theta_index;
    const std::size_t wlo = i > 0 ? i - 1 : 0;
    const std::size_t whi = std::min<std::size_t>(i + 1, points - 1);
    theta_lo = thetas[wlo];
    theta_hi = thetas[whi];
    band_a = r.track_a[wlo];
    band_b = r.track_b[wlo];
  }
  return best;
}

}  // namespace anisoband
