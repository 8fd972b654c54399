#include "anisoband/geometry.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <iomanip>

namespace anisoband {

void CShapeParams::validate() const {
  for (double v : {lWav, wCell, lArm, wArm, lPad, wPad}) {
    if (!(v > 0.0)) throw GeometryError("C-shape parameters must all be positive");
  }
  if (!(wPad < wCell)) throw GeometryError("wPad must be smaller than wCell");
  if (lPad >= lArm) {
    throw GeometryError("C-shape pad is at least as long as the arm: no airgap remains");
  }
  if (wPad + 2.0 * wArm >= wCell) {
    throw GeometryError("C-shape hole (wPad + 2 wArm) does not fit inside wCell");
  }
}

void SnowflakeParams::validate() const {
  if (!(aSnow > 0.0) || !(lSnow > 0.0) || !(wSnow > 0.0)) {
    throw GeometryError("snowflake parameters must all be positive");
  }
  if (!(wSnow < lSnow)) throw GeometryError("wSnow must be smaller than lSnow");
}

double taper_parameter(int n, const TaperProfile& p, TaperSign sign) {
  if (p.n_d <= 0) throw GeometryError("taper: n_d must be at least 1");
  const int an = std::abs(n);
  if (an > p.n_d) throw GeometryError("taper: |n| exceeds n_d (use par_max outside the defect)");
  const double nd = p.n_d;
  const double dn = an - nd;
  double exponent = 9.0 * dn * dn / (2.0 * nd * nd);
  if (sign == TaperSign::Corrected) exponent = -exponent;
  return p.par_min + (p.par_max - p.par_min) * std::exp(exponent);
}

std::string to_string(Region r) {
  switch (r) {
    case Region::CShape: return "cshape";
    case Region::Interface: return "interface";
    case Region::Snowflake: return "snowflake";
  }
  return "?";
}

bool Rect::contains(const Eigen::Vector2d& d) const {
  const double along = axis.x() * d.x() + axis.y() * d.y();
  const double across = -axis.y() * d.x() + axis.x() * d.y();
  return std::abs(along) <= 0.5 * length && std::abs(across) <= 0.5 * width;
}

std::vector<Eigen::Vector2d> Rect::corners() const {
  const Eigen::Vector2d perp(-axis.y(), axis.x());
  const Eigen::Vector2d u = 0.5 * length * axis;
  const Eigen::Vector2d v = 0.5 * width * perp;
  return {center - u - v, center + u - v, center + u + v, center - u + v};
}

Region RegionBounds::classify(double y) const {
  const double ay = std::abs(y);
  if (ay < cshape_half) return Region::CShape;
  if (ay < interface_half) return Region::Interface;
  return Region::Snowflake;
}

std::size_t UnitCellGeometry::hole_count() const {
  std::size_t n = 0;
  for (const auto& s : shapes) n += (s.role == ShapeRole::Hole);
  return n;
}

std::string UnitCellGeometry::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  auto mix_d = [&](double v) { mix(&v, sizeof v); };
  mix_d(ax);
  mix_d(ay);
  mix_d(bounds.cshape_half);
  mix_d(bounds.interface_half);
  mix_d(solid_half_height);
  for (const auto& s : shapes) {
    const auto role = static_cast<std::uint8_t>(s.role);
    const auto region = static_cast<std::uint8_t>(s.region);
    mix(&role, 1);
    mix(&region, 1);
    for (const auto& r : s.parts) {
      mix_d(r.center.x());
      mix_d(r.center.y());
      mix_d(r.axis.x());
      mix_d(r.axis.y());
      mix_d(r.length);
      mix_d(r.width);
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

namespace {

Rect axis_rect(double cx, double cy, double len_x, double len_y) {
  Rect r;
  r.center = {cx, cy};
  r.axis = {1.0, 0.0};
  r.length = len_x;
  r.width = len_y;
  return r;
}

// Three arms at 0, 60 and 120 degrees. The direction cosines are literal
// constants so mirror images evaluate to exact negations.
Shape snowflake(double cx, double cy, const SnowflakeParams& p, Region region) {
  static const double s = std::sqrt(3.0) / 2.0;
  const Eigen::Vector2d dirs[3] = {{1.0, 0.0}, {0.5, s}, {-0.5, s}};
  Shape shape;
  shape.role = ShapeRole::Hole;
  shape.region = region;
  for (const auto& d : dirs) {
    Rect r;
    r.center = {cx, cy};
    r.axis = d;
    r.length = p.lSnow;
    r.width = p.wSnow;
    shape.parts.push_back(r);
  }
  return shape;
}

}  // namespace

UnitCellGeometry build_waveguide_cell(const CShapeParams& c, const SnowflakeParams& sp,
                                      const WaveguideLayout& layout) {
  c.validate();
  sp.validate();
  if (layout.rows < 0) throw GeometryError("snowflake row count must be non-negative");
  if (layout.pad_y < 0.0) throw GeometryError("padding must be non-negative");

  UnitCellGeometry g;
  g.ax = c.wCell;

  // Upper C: outer rectangle (wPad + 2 wArm) x lArm starting lWav/2 above the
  // axis, with the wPad x lPad pad re-inserted flush with its inner edge.
  // The remaining hole is a C opening toward the waveguide axis: two lateral
  // arms joined by an airgap bar of height lArm - lPad.
  const double inner = 0.5 * c.lWav;
  const double outer_w = c.wPad + 2.0 * c.wArm;
  const double hole_cy = inner + 0.5 * c.lArm;
  const double pad_cy = inner + 0.5 * c.lPad;
  const double c_top = inner + c.lArm;

  const double row_pitch = sp.aSnow * std::sqrt(3.0) / 2.0;
  const double row0 = layout.row0_center > 0.0
                          ? layout.row0_center
                          : c_top + 0.5 * (sp.aSnow - sp.lSnow) + 0.5 * sp.lSnow;
  if (row0 - 0.5 * sp.lSnow <= c_top && layout.rows > 0) {
    throw GeometryError("first snowflake row overlaps the C-shape holes");
  }

  for (double sign : {1.0, -1.0}) {
    Shape hole;
    hole.role = ShapeRole::Hole;
    hole.region = Region::CShape;
    hole.parts.push_back(axis_rect(0.0, sign * hole_cy, outer_w, c.lArm));
    g.shapes.push_back(hole);
  }
  for (double sign : {1.0, -1.0}) {
    Shape pad;
    pad.role = ShapeRole::Solid;
    pad.region = Region::CShape;
    pad.parts.push_back(axis_rect(0.0, sign * pad_cy, c.wPad, c.lPad));
    g.shapes.push_back(pad);
  }

  // Snowflake rows on the supercell x-period, alternate rows offset by half a
  // period, so the cell keeps both mirror symmetries.
  const double half_period = 0.5 * c.wCell;
  for (int r = 0; r < layout.rows; ++r) {
    const double y = row0 + r * row_pitch;
    const double x = (r % 2 == 0) ? 0.0 : half_period;
    const Region region = (r == 0) ? Region::Interface : Region::Snowflake;
    g.shapes.push_back(snowflake(x, y, sp, region));
    g.shapes.push_back(snowflake(x, -y, sp, region));
  }

  const double solid_top = (layout.rows > 0) ? row0 + (layout.rows - 0.5) * row_pitch
                                             : row0 - 0.5 * row_pitch;
  g.ay = 2.0 * (solid_top + layout.pad_y);
  g.bounds.cshape_half = c_top;
  g.bounds.interface_half = row0 + 0.5 * row_pitch;

  g.solid_half_height = solid_top;
  return g;
}

double MaterialGrid::fill_fraction(std::uint8_t m) const {
  std::size_t n = 0;
  for (auto v : material) n += (v == m);
  return static_cast<double>(n) / static_cast<double>(material.size());
}

MaterialGrid rasterize(const UnitCellGeometry& g, int nx, int ny,
                       const ElasticMaterial& solid, const ElasticMaterial& filler) {
  if (nx < 8 || ny < 8) throw GeometryError("rasterize: nx and ny must be at least 8");
  if (!(g.ax > 0.0) || !(g.ay > 0.0)) throw GeometryError("rasterize: degenerate cell");
  solid.validate();
  filler.validate();

  MaterialGrid grid;
  grid.nx = nx;
  grid.ny = ny;
  grid.ax = g.ax;
  grid.ay = g.ay;
  grid.bounds = g.bounds;
  grid.palette = {solid, filler};
  grid.material.assign(static_cast<std::size_t>(nx) * ny, 0);
  grid.region.resize(grid.material.size());

  // Periodic images of every part, enumerated up front. Images are formed as
  // center +/- period so that a shape centred on a cell edge has its mirror
  // image as an exact negation.
  struct Image {
    const Rect* rect;
    Eigen::Vector2d center;
    double reach;
  };
  struct PaintedShape {
    ShapeRole role;
    std::vector<Image> images;
  };
  std::vector<PaintedShape> painted;
  for (const auto& s : g.shapes) {
    PaintedShape ps{s.role, {}};
    for (const auto& r : s.parts) {
      const double reach = 0.5 * std::hypot(r.length, r.width);
      for (int sx = -1; sx <= 1; ++sx) {
        for (int sy = -1; sy <= 1; ++sy) {
          const Eigen::Vector2d c(r.center.x() + sx * g.ax, r.center.y() + sy * g.ay);
          if (std::abs(c.x()) - reach > 0.5 * g.ax || std::abs(c.y()) - reach > 0.5 * g.ay) {
            continue;
          }
          ps.images.push_back({&r, c, reach});
        }
      }
    }
    painted.push_back(std::move(ps));
  }

  for (int j = 0; j < ny; ++j) {
    const double y = grid.y(j);
    const Region region = g.bounds.classify(y);
    for (int i = 0; i < nx; ++i) {
      const Eigen::Vector2d p(grid.x(i), y);
      const bool padding = std::abs(y) > g.solid_half_height;
      std::uint8_t m = padding ? 1 : 0;
      for (const auto& ps : painted) {
        if (padding) break;
        for (const auto& img : ps.images) {
          const Eigen::Vector2d d(p.x() - img.center.x(), p.y() - img.center.y());
          if (img.rect->contains(d)) {
            m = (ps.role == ShapeRole::Hole) ? 1 : 0;
            break;
          }
        }
      }
      grid.material[grid.index(i, j)] = m;
      grid.region[grid.index(i, j)] = region;
    }
  }
  return grid;
}

std::string to_pgm(const MaterialGrid& grid) {
  std::ostringstream os;
  os << "P5\n" << grid.nx << ' ' << grid.ny << "\n255\n";
  std::string body(grid.material.size(), '\0');
  // Row 0 of the image is the top of the cell (largest y).
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const auto m = grid.material[grid.index(i, grid.ny - 1 - j)];
      body[static_cast<std::size_t>(j) * grid.nx + i] = m == 0 ? char(255) : char(0);
    }
  }
  os << body;
  return os.str();
}

}  // namespace anisoband
