#pragma once

#include "anisoband/materials.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace anisoband {

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Lengths are SI metres throughout; configs convert from nm at the boundary.
inline constexpr double kNanometre = 1e-9;

struct CShapeParams {
  double lWav = 0, wCell = 0, lArm = 0, wArm = 0, lPad = 0, wPad = 0;
  void validate() const;
};

struct SnowflakeParams {
  double aSnow = 0, lSnow = 0, wSnow = 0;
  void validate() const;
};

struct TaperProfile {
  double par_min = 0;
  double par_max = 0;
  int n_d = 0;
};

// The taper exponent is negative by default so that parameters reach par_max
// at |n| = n_d and par_min at the centre. Printed keeps a positive exponent,
// which grows away from the defect edge; it exists for comparison only.
enum class TaperSign { Corrected, Printed };

double taper_parameter(int n, const TaperProfile& profile,
                       TaperSign sign = TaperSign::Corrected);

enum class Region : std::uint8_t { CShape = 0, Interface = 1, Snowflake = 2 };
inline constexpr int kRegionCount = 3;
std::string to_string(Region r);

enum class ShapeRole : std::uint8_t { Hole, Solid };

// Oriented rectangle. `axis` is the unit direction of the `length` side and
// is built from exact constants so that mirrored shapes test bit-identically.
struct Rect {
  Eigen::Vector2d center;
  Eigen::Vector2d axis{1.0, 0.0};
  double length = 0;
  double width = 0;

  bool contains(const Eigen::Vector2d& d_from_center) const;
  std::vector<Eigen::Vector2d> corners() const;
  double area() const { return length * width; }
};

// Union of rectangles painted with one role. Later shapes override earlier
// ones where they overlap.
struct Shape {
  ShapeRole role = ShapeRole::Hole;
  Region region = Region::CShape;
  std::vector<Rect> parts;
};

// Horizontal strip boundaries used for region labels: |y| < cshape_half is
// C-shape, |y| < interface_half is interface, the rest is snowflake.
struct RegionBounds {
  double cshape_half = 1e300;
  double interface_half = 1e300;

  Region classify(double y) const;
};

// Rectangular supercell centred on the origin, periodic in x and y.
struct UnitCellGeometry {
  double ax = 0;
  double ay = 0;
  std::vector<Shape> shapes;
  RegionBounds bounds;
  // Rows with |y| beyond this are filler padding between periodic images.
  double solid_half_height = 1e300;

  std::size_t hole_count() const;
  // Stable FNV-1a digest of the cell description, hex encoded.
  std::string hash() const;
};

struct WaveguideLayout {
  int rows = 3;                   // snowflake rows on each side
  double row0_center = -1;        // y of the first snowflake row; <0 picks the default
  double pad_y = 100 * kNanometre;  // filler padding above and below the rows
};

UnitCellGeometry build_waveguide_cell(const CShapeParams& cparams,
                                      const SnowflakeParams& sparams,
                                      const WaveguideLayout& layout = {});

struct MaterialGrid {
  int nx = 0;
  int ny = 0;
  double ax = 0;
  double ay = 0;
  // Index into palette: 0 is the solid, 1 the hole filler.
  std::vector<std::uint8_t> material;
  std::vector<Region> region;
  std::vector<ElasticMaterial> palette;
  RegionBounds bounds;

  double dx() const { return ax / nx; }
  double dy() const { return ay / ny; }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * nx + i; }
  // Pixel centres are symmetric about the origin.
  double x(int i) const { return (i + 0.5 - 0.5 * nx) * dx(); }
  double y(int j) const { return (j + 0.5 - 0.5 * ny) * dy(); }

  double fill_fraction(std::uint8_t material_index) const;
};

MaterialGrid rasterize(const UnitCellGeometry& g, int nx, int ny,
                       const ElasticMaterial& solid, const ElasticMaterial& filler);

// Binary greymap (P5) of the material index: solid white, holes black.
std::string to_pgm(const MaterialGrid& grid);

}  // namespace anisoband
