#pragma once

#include "anisoband/bloch_solver.hpp"
#include "anisoband/geometry.hpp"

#include <array>
#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace anisoband {

class AnalysisError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Displacement sampled at the pixel centres of a grid, full Bloch phase included.
struct RealSpaceField {
  int nx = 0, ny = 0;
  std::vector<std::complex<double>> ux, uy;
};

RealSpaceField reconstruct(const BlochMode& mode, const MaterialGrid& grid);

// Pixel image of (i, j) under a point operation about the cell centre.
std::array<int, 2> mirror_pixel(SymmetryOp op, int nx, int ny, int i, int j);

enum class ParityLabel { Even, Odd, Mixed };
ParityLabel label_for(double score, double tau);
int label_value(ParityLabel l);  // +1, -1, 0

struct ParityScore {
  SymmetryOp op;
  double score = 0.0;
  ParityLabel label = ParityLabel::Mixed;
};

// Re<u, D (u o S^-1)> / <u, u> on the reconstructed field. sigma_x and R_z^pi
// send kx to -kx and are only defined at kx = 0 or kx = +-pi/ax.
ParityScore parity_score(const BlochMode& mode, const MaterialGrid& grid, SymmetryOp op,
                         double tau = 0.9);
double parity_score(const RealSpaceField& field, SymmetryOp op);
bool parity_defined(const BlochMode& mode, SymmetryOp op);

struct RegionFractions {
  double cshape = 0.0;
  double interface = 0.0;
  double snowflake = 0.0;

  double operator[](Region r) const;
  Region dominant() const;
};

// rho |u|^2 weighted share of each region.
RegionFractions region_fractions(const BlochMode& mode, const MaterialGrid& grid);
RegionFractions region_fractions(const RealSpaceField& field, const MaterialGrid& grid);

// rho |u|^2 weighted share carried by the solid (palette index 0). Modes
// living in the hole filler have a share near zero.
double solid_fraction(const RealSpaceField& field, const MaterialGrid& grid);

struct ModeAnnotation {
  // NaN where the operation is not defined at the mode's wavevector.
  double sx = 0.0, sy = 0.0, rz = 0.0;
  RegionFractions fractions;
  double solid = 1.0;

  double score(SymmetryOp op) const;
};

ModeAnnotation annotate(const BlochMode& mode, const MaterialGrid& grid);

// Flat view of a band structure, the shape of the band CSV.
struct BandRow {
  std::size_t theta_index = 0;
  std::size_t k_index = 0;
  double theta = 0.0;
  double kx = 0.0;
  int band = 0;
  double freq_hz = 0.0;
  std::optional<ModeAnnotation> annotation;
};

struct BandTable {
  std::vector<BandRow> rows;
};

BandTable to_table(const BandStructure& bs);
// to_table plus parity scores and region fractions for every mode.
BandTable classify(const BandStructure& bs);

struct ModeFilter {
  std::optional<SymmetryOp> op;
  int parity = +1;
  std::optional<Region> dominant;
  double tau = 0.9;
  double min_solid_fraction = 0.0;

  bool matches(const BandRow& row) const;
  std::string describe() const;
};

enum class GapKind { Full, Apparent };
std::string to_string(GapKind k);

struct GapInterval {
  double lo = 0.0;  // Hz
  double hi = 0.0;
  std::optional<ModeFilter> filter;
  GapKind kind = GapKind::Full;
};

// Maximal open windows between the envelopes of the filtered bands. A window
// is apparent when a mode outside the filter falls inside it.
std::vector<GapInterval> find_gaps(const BandTable& table,
                                   const std::optional<ModeFilter>& filter = std::nullopt);

// Band assignment along the theta axis at one k-point by maximal modal
// overlap |<u_i(theta_t), M u_j(theta_t+1)>|. Returns, for every start band,
// its band index at each theta (in sweep order, reversed when !forward).
std::vector<std::vector<int>> track_bands(const BandStructure& bs, std::size_t k_index,
                                          const std::vector<int>& start_bands,
                                          bool forward = true);

struct AnticrossingResult {
  double theta_min = 0.0;
  double gap_min_hz = 0.0;
  std::size_t theta_index = 0;
  std::vector<int> track_a, track_b;
  std::vector<double> separation_hz;
};

AnticrossingResult detect_anticrossing(const BandStructure& bs, int band_a, int band_b,
                                       std::size_t k_index = 0);

struct AnticrossingPair {
  int cshape_band = -1;
  int partner_band = -1;
  bool crosses = false;  // partner crosses the C-shape band in the given sweep
};

// At the first theta of a classified sweep (normally the forced C16 = 0
// sweep), picks the R_z = +1 band with the largest C-shape share and the
// R_z = +1 band of opposite sigma_y parity that crosses it. Among crossing
// candidates the one with the largest interface share wins; without a
// crossing, the candidate nearest in frequency.
AnticrossingPair select_anticrossing_pair(const BandStructure& bs, const BandTable& classified,
                                          std::size_t k_index = 0, double tau = 0.9);

// Re-sweeps ever finer theta windows around the coarse minimum, continuing the
// tracks from the coarse band assignment.
AnticrossingResult refine_anticrossing(const UnitCellGeometry& geometry,
                                       const ElasticMaterial& solid, const SweepOptions& options,
                                       const BandStructure& coarse,
                                       const AnticrossingResult& result, std::size_t k_index = 0,
                                       int levels = 2, int points = 9);

}  // namespace anisoband
