#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "mto/common.hpp"

// Parametric microstructure geometry. A supershape is defined by a polar
// radius in a [-1,1]^2 shape frame and drawn into the unit cell [0,1]^2
// around (0.5, 0.5) at half scale, so a shape-frame radius of 1 just touches
// the cell edge. Anything protruding is clipped to the cell.
namespace mto::geom {

struct SuperShapeParams {
  double a = 1, b = 1, m = 0, n1 = 1, n2 = 1, n3 = 1;
  void validate() const;  // finite, a,b > 0, n1 != 0
};

// Dataset sampling ranges; also the box decoded parameters are projected
// into when a prediction lands outside it.
struct SamplingBox {
  double a_lo = 0.05, a_hi = 0.75;
  double b_lo = 0.05, b_hi = 0.75;
  double m_lo = 1.0, m_hi = 22.0;
  double n_lo = 0.5, n_hi = 10.0;  // shared by n1, n2, n3

  bool contains(const SuperShapeParams& p) const;
  SuperShapeParams project(const SuperShapeParams& p) const;  // clamp per coordinate
};

inline constexpr SamplingBox kSamplingBox{};

// Raised when a parameter set yields an unusable curve (non-finite or
// vanishing radius); samplers catch this and redraw.
class DegenerateShape : public Error {
 public:
  explicit DegenerateShape(const std::string& msg) : Error(ErrorKind::Numeric, msg) {}
};

// Shape-frame polar radius at angle alpha.
double radius(const SuperShapeParams& p, double alpha);

struct BoundaryPolygon {
  std::vector<Eigen::Vector2d> pts;  // closed implicitly: last connects to first
};

// Samples n_points angles over [0, 2*pi), maps them into the unit cell and
// clips against it. Throws DegenerateShape when the radius degenerates.
BoundaryPolygon boundary_in_cell(const SuperShapeParams& p, int n_points);

struct ShapeMeasures {
  double perimeter = 0;         // full outline of the clipped solid
  double wetted_perimeter = 0;  // outline excluding parts lying on the cell edge
  double solid_area = 0;        // shoelace area, in cell units (cell area = 1)
};

// Requires a simple polygon; throws on self-intersection.
ShapeMeasures measure(const BoundaryPolygon& poly);

bool self_intersects(const BoundaryPolygon& poly);

// Even-odd scanline fill against cell centers of a resolution^2 grid.
struct IndicatorGrid {
  int resolution = 0;
  std::vector<std::uint8_t> solid;  // row-major, index iy*resolution + ix

  bool at(int ix, int iy) const { return solid[static_cast<std::size_t>(iy) * resolution + ix] != 0; }
  double solid_fraction() const;
};

IndicatorGrid rasterize(const BoundaryPolygon& poly, int resolution);

// Clips a polygon to the axis-aligned box [lo, hi] (Sutherland-Hodgman).
BoundaryPolygon clip_to_box(const BoundaryPolygon& poly, const Eigen::Vector2d& lo,
                            const Eigen::Vector2d& hi);

// Writes closed filled paths in user coordinates (y up; flipped on output).
void write_svg(const std::string& path, const std::vector<BoundaryPolygon>& shapes,
               double width, double height);

// One shape in its unit cell.
void export_shape_svg(const std::string& path, const SuperShapeParams& p, int n_points);

}  // namespace mto::geom
