#include "mto/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mto::geom {

namespace {
constexpr double kMinRadius = 1e-6;   // shape-frame radii below this are degenerate
constexpr double kEdgeEps = 1e-9;     // tolerance for "lies on the cell edge"

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}
}  // namespace

void SuperShapeParams::validate() const {
  for (double v : {a, b, m, n1, n2, n3})
    require(std::isfinite(v), ErrorKind::Config, "shape params: non-finite value");
  require(a > 0 && b > 0, ErrorKind::Config, "shape params: a and b must be positive");
  require(n1 != 0, ErrorKind::Config, "shape params: n1 must be nonzero");
}

bool SamplingBox::contains(const SuperShapeParams& p) const {
  return p.a >= a_lo && p.a <= a_hi && p.b >= b_lo && p.b <= b_hi && p.m >= m_lo &&
         p.m <= m_hi && p.n1 >= n_lo && p.n1 <= n_hi && p.n2 >= n_lo && p.n2 <= n_hi &&
         p.n3 >= n_lo && p.n3 <= n_hi;
}

SuperShapeParams SamplingBox::project(const SuperShapeParams& p) const {
  SuperShapeParams q = p;
  q.a = std::clamp(q.a, a_lo, a_hi);
  q.b = std::clamp(q.b, b_lo, b_hi);
  q.m = std::clamp(q.m, m_lo, m_hi);
  q.n1 = std::clamp(q.n1, n_lo, n_hi);
  q.n2 = std::clamp(q.n2, n_lo, n_hi);
  q.n3 = std::clamp(q.n3, n_lo, n_hi);
  return q;
}

double radius(const SuperShapeParams& p, double alpha) {
  double t = p.m * alpha / 4.0;
  double c = std::abs(std::cos(t) / p.a);
  double s = std::abs(std::sin(t) / p.b);
  double denom = std::pow(c, p.n2) + std::pow(s, p.n3);
  return std::pow(denom, -1.0 / p.n1);
}

BoundaryPolygon clip_to_box(const BoundaryPolygon& poly, const Eigen::Vector2d& lo,
                            const Eigen::Vector2d& hi) {
  // Sutherland-Hodgman against each box side in turn.
  auto clip_side = [](const std::vector<Eigen::Vector2d>& in, int axis, double bound,
                      bool keep_ge) {
    std::vector<Eigen::Vector2d> out;
    out.reserve(in.size() + 4);
    auto inside = [&](const Eigen::Vector2d& p) {
      return keep_ge ? p[axis] >= bound : p[axis] <= bound;
    };
    std::size_t n = in.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector2d& a = in[i];
      const Eigen::Vector2d& b = in[(i + 1) % n];
      bool ia = inside(a), ib = inside(b);
      if (ia) out.push_back(a);
      if (ia != ib) {
        double t = (bound - a[axis]) / (b[axis] - a[axis]);
        out.push_back(a + t * (b - a));
      }
    }
    return out;
  };
  std::vector<Eigen::Vector2d> pts = poly.pts;
  pts = clip_side(pts, 0, lo.x(), true);
  pts = clip_side(pts, 0, hi.x(), false);
  pts = clip_side(pts, 1, lo.y(), true);
  pts = clip_side(pts, 1, hi.y(), false);
  return BoundaryPolygon{std::move(pts)};
}

BoundaryPolygon boundary_in_cell(const SuperShapeParams& p, int n_points) {
  p.validate();
  require(n_points >= 3, ErrorKind::Config, "boundary: need at least 3 sample points");
  BoundaryPolygon poly;
  poly.pts.reserve(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i) {
    double alpha = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n_points);
    double r = radius(p, alpha);
    if (!std::isfinite(r) || r < kMinRadius)
      throw DegenerateShape("degenerate supershape radius at alpha=" + format_double(alpha));
    poly.pts.emplace_back(0.5 + 0.5 * r * std::cos(alpha), 0.5 + 0.5 * r * std::sin(alpha));
  }
  BoundaryPolygon clipped =
      clip_to_box(poly, Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(1.0, 1.0));
  if (clipped.pts.size() < 3) throw DegenerateShape("supershape clipped away entirely");
  return clipped;
}

bool self_intersects(const BoundaryPolygon& poly) {
  const auto& p = poly.pts;
  std::size_t n = p.size();
  if (n < 4) return false;
  auto proper_cross = [&](std::size_t i, std::size_t j) {
    const Eigen::Vector2d &a = p[i], &b = p[(i + 1) % n];
    const Eigen::Vector2d &c = p[j], &d = p[(j + 1) % n];
    double d1 = cross2(d - c, a - c);
    double d2 = cross2(d - c, b - c);
    double d3 = cross2(b - a, c - a);
    double d4 = cross2(b - a, d - a);
    return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
           ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
  };
  for (std::size_t i = 0; i + 2 < n; ++i) {
    double ilo = std::min(p[i].x(), p[(i + 1) % n].x());
    double ihi = std::max(p[i].x(), p[(i + 1) % n].x());
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;  // adjacent through the closing edge
      double jlo = std::min(p[j].x(), p[(j + 1) % n].x());
      double jhi = std::max(p[j].x(), p[(j + 1) % n].x());
      if (jlo > ihi || jhi < ilo) continue;
      if (proper_cross(i, j)) return true;
    }
  }
  return false;
}

namespace {
// Both endpoints on the same cell side means the segment is part of the cell
// boundary, not of the fluid-solid interface.
bool on_cell_edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  auto near = [](double v, double t) { return std::abs(v - t) < kEdgeEps; };
  return (near(a.x(), 0) && near(b.x(), 0)) || (near(a.x(), 1) && near(b.x(), 1)) ||
         (near(a.y(), 0) && near(b.y(), 0)) || (near(a.y(), 1) && near(b.y(), 1));
}
}  // namespace

ShapeMeasures measure(const BoundaryPolygon& poly) {
  ShapeMeasures ms;
  const auto& p = poly.pts;
  std::size_t n = p.size();
  if (n < 3) return ms;
  require(!self_intersects(poly), ErrorKind::Numeric, "measure: polygon self-intersects");
  double twice_area = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& a = p[i];
    const Eigen::Vector2d& b = p[(i + 1) % n];
    double len = (b - a).norm();
    ms.perimeter += len;
    if (!on_cell_edge(a, b)) ms.wetted_perimeter += len;
    twice_area += cross2(a, b);
  }
  ms.solid_area = std::abs(twice_area) / 2.0;
  return ms;
}

double IndicatorGrid::solid_fraction() const {
  if (solid.empty()) return 0.0;
  std::size_t count = 0;
  for (std::uint8_t v : solid) count += (v != 0);
  return static_cast<double>(count) / static_cast<double>(solid.size());
}

IndicatorGrid rasterize(const BoundaryPolygon& poly, int resolution) {
  require(resolution >= 1, ErrorKind::Config, "rasterize: resolution must be positive");
  IndicatorGrid grid;
  grid.resolution = resolution;
  grid.solid.assign(static_cast<std::size_t>(resolution) * resolution, 0);
  const auto& p = poly.pts;
  std::size_t n = p.size();
  if (n < 3) return grid;
  std::vector<double> xs;
  for (int iy = 0; iy < resolution; ++iy) {
    double y = (iy + 0.5) / resolution;
    xs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector2d& a = p[i];
      const Eigen::Vector2d& b = p[(i + 1) % n];
      if ((a.y() <= y) != (b.y() <= y))
        xs.push_back(a.x() + (y - a.y()) * (b.x() - a.x()) / (b.y() - a.y()));
    }
    std::sort(xs.begin(), xs.end());
    std::size_t k = 0;
    for (int ix = 0; ix < resolution; ++ix) {
      double x = (ix + 0.5) / resolution;
      while (k < xs.size() && xs[k] < x) ++k;
      if (k % 2 == 1) grid.solid[static_cast<std::size_t>(iy) * resolution + ix] = 1;
    }
  }
  return grid;
}

void write_svg(const std::string& path, const std::vector<BoundaryPolygon>& shapes,
               double width, double height) {
  require(width > 0 && height > 0, ErrorKind::Config, "svg: canvas must have positive size");
  std::ofstream f(path);
  if (!f) fail_io("svg: cannot open '" + path + "' for writing");
  double px = 720.0 / std::max(width, height);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width * px << "\" height=\""
    << height * px << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  f << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
    << "\" fill=\"#eef2f7\" stroke=\"#8a93a3\" stroke-width=\"" << 0.002 * std::max(width, height)
    << "\"/>\n";
  for (const auto& poly : shapes) {
    if (poly.pts.size() < 3) continue;
    f << "<path d=\"M";
    for (std::size_t i = 0; i < poly.pts.size(); ++i) {
      const auto& pt = poly.pts[i];
      f << (i ? " L" : "") << pt.x() << ' ' << (height - pt.y());
    }
    f << " Z\" fill=\"#23344d\" stroke=\"none\"/>\n";
  }
  f << "</svg>\n";
  if (!f) fail_io("svg: write to '" + path + "' failed");
}

void export_shape_svg(const std::string& path, const SuperShapeParams& p, int n_points) {
  write_svg(path, {boundary_in_cell(p, n_points)}, 1.0, 1.0);
}

}  // namespace mto::geom
