#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mto/geometry.hpp"

namespace geom = mto::geom;

namespace {

geom::SuperShapeParams circle_params(double ab) {
  geom::SuperShapeParams p;
  p.a = p.b = ab;
  p.m = 4;
  p.n1 = p.n2 = p.n3 = 2;
  return p;
}

// Reference shape used across modules: thin, fin-like, partly outside the
// sampling box in m.
geom::SuperShapeParams fish_params() {
  geom::SuperShapeParams p;
  p.a = 0.7158;
  p.b = 0.3757;
  p.m = 0.6039;
  p.n1 = 1.4787;
  p.n2 = 0.4349;
  p.n3 = 0.5857;
  return p;
}

geom::BoundaryPolygon square(double lo, double hi) {
  geom::BoundaryPolygon poly;
  poly.pts = {{lo, lo}, {hi, lo}, {hi, hi}, {lo, hi}};
  return poly;
}

}  // namespace

TEST_CASE("equal radii with exponent 2 give a constant radius") {
  auto p = circle_params(0.5);
  for (double alpha : {0.0, 0.3, 1.1, 2.0, 3.7, 5.9})
    CHECK(geom::radius(p, alpha) == doctest::Approx(0.5).epsilon(1e-14));

  geom::SuperShapeParams flat = circle_params(0.5);
  flat.m = 0;  // angle drops out entirely
  CHECK(geom::radius(flat, 1.234) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("the radius is periodic with period 4*pi/m for any parameters") {
  for (double m : {5.0, 3.7, 22.0}) {
    auto p = fish_params();
    p.m = m;
    double period = 4.0 * M_PI / m;
    for (double alpha : {0.13, 1.0, 2.9})
      CHECK(std::abs(geom::radius(p, alpha) - geom::radius(p, alpha + period)) < 1e-12);
  }
}

TEST_CASE("interior circle: area, perimeter, and wetted outline match the disk") {
  auto poly = geom::boundary_in_cell(circle_params(0.5), 2000);
  auto m = geom::measure(poly);
  // shape-frame radius 0.5 maps to cell radius 0.25
  CHECK(m.solid_area == doctest::Approx(M_PI / 16).epsilon(1e-5));
  CHECK(m.perimeter == doctest::Approx(M_PI / 2).epsilon(1e-4));
  CHECK(m.wetted_perimeter == doctest::Approx(m.perimeter).epsilon(1e-12));

  auto m2 = geom::measure(geom::boundary_in_cell(circle_params(0.75), 2000));
  CHECK(m2.solid_area == doctest::Approx(M_PI * 0.375 * 0.375).epsilon(1e-5));
  CHECK(m2.wetted_perimeter == doctest::Approx(2 * M_PI * 0.375).epsilon(1e-4));
}

TEST_CASE("oversized circle fills the whole cell") {
  auto m = geom::measure(geom::boundary_in_cell(circle_params(2.0), 2000));
  CHECK(m.solid_area == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(m.perimeter == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(m.wetted_perimeter <= 1e-9);  // the whole outline lies on the cell edge
}

TEST_CASE("clipped circle matches the exact circle-minus-caps values") {
  // cell radius 0.6 centered in the unit cell, caps cut on all four edges:
  //   area  = pi r^2 - 4 (r^2 acos(d/r) - d sqrt(r^2 - d^2))    = 0.950899
  //   arcs  = 2 pi r - 8 r acos(d/r)                            = 0.958625
  //   total = arcs + 8 sqrt(r^2 - d^2)                          = 3.611917
  auto m = geom::measure(geom::boundary_in_cell(circle_params(1.2), 2000));
  CHECK(m.solid_area == doctest::Approx(0.950899).epsilon(1e-3));
  CHECK(m.wetted_perimeter == doctest::Approx(0.958625).epsilon(1e-3));
  CHECK(m.perimeter == doctest::Approx(3.611917).epsilon(1e-3));
}

TEST_CASE("reference fin shape reproduces its frozen measurements") {
  auto m = geom::measure(geom::boundary_in_cell(fish_params(), 1000));
  CHECK(m.solid_area == doctest::Approx(0.298216).epsilon(2e-3));
  CHECK(m.wetted_perimeter == doctest::Approx(2.1284).epsilon(2e-3));
}

TEST_CASE("polygon measurement on an interior square is exact") {
  auto m = geom::measure(square(0.2, 0.8));
  CHECK(m.solid_area == doctest::Approx(0.36).epsilon(1e-14));
  CHECK(m.perimeter == doctest::Approx(2.4).epsilon(1e-14));
  CHECK(m.wetted_perimeter == doctest::Approx(2.4).epsilon(1e-14));
}

TEST_CASE("segments lying on the cell edge are not wetted") {
  geom::BoundaryPolygon raw = square(-0.5, 0.5);
  auto clipped = geom::clip_to_box(raw, {0, 0}, {1, 1});
  auto m = geom::measure(clipped);
  CHECK(m.solid_area == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(m.perimeter == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(m.wetted_perimeter == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("self-intersection is detected and rejected") {
  geom::BoundaryPolygon bowtie;
  bowtie.pts = {{0.1, 0.1}, {0.9, 0.9}, {0.9, 0.1}, {0.1, 0.9}};
  CHECK(geom::self_intersects(bowtie));
  CHECK_THROWS_AS(geom::measure(bowtie), mto::Error);
  CHECK_FALSE(geom::self_intersects(square(0.2, 0.8)));
}

TEST_CASE("rasterization agrees with exact areas") {
  auto full = geom::rasterize(geom::boundary_in_cell(circle_params(2.0), 500), 150);
  CHECK(full.solid.size() == 22500);
  CHECK(full.solid_fraction() == doctest::Approx(1.0));

  geom::BoundaryPolygon sliver = square(0.0011, 0.0021);  // misses every cell center
  CHECK(geom::rasterize(sliver, 64).solid_fraction() == 0.0);

  auto circle = geom::boundary_in_cell(circle_params(0.5), 2000);
  double exact = M_PI / 16;
  CHECK(geom::rasterize(circle, 150).solid_fraction() == doctest::Approx(exact).epsilon(0.01));
  for (int res : {32, 64, 128}) {
    double frac = geom::rasterize(circle, res).solid_fraction();
    CHECK(std::abs(frac - exact) < 2.0 / res);
  }
}

TEST_CASE("perimeter sampling error shrinks as the outline is refined") {
  double prev_err = 1e9;
  for (int n : {250, 500, 1000, 2000}) {
    auto m = geom::measure(geom::boundary_in_cell(circle_params(0.5), n));
    double err = std::abs(m.perimeter - M_PI / 2);
    CHECK(err < prev_err);
    prev_err = err;
  }
}

TEST_CASE("degenerate and invalid parameters are rejected") {
  geom::SuperShapeParams tiny;
  tiny.a = tiny.b = 1e-9;
  tiny.m = 0;
  tiny.n1 = tiny.n2 = tiny.n3 = 1;
  CHECK_THROWS_AS(geom::boundary_in_cell(tiny, 100), geom::DegenerateShape);

  geom::SuperShapeParams bad = circle_params(0.5);
  bad.a = 0;
  CHECK_THROWS_AS(bad.validate(), mto::Error);
  bad = circle_params(0.5);
  bad.n1 = 0;
  CHECK_THROWS_AS(bad.validate(), mto::Error);
  bad = circle_params(0.5);
  bad.b = std::nan("");
  CHECK_THROWS_AS(bad.validate(), mto::Error);
}

TEST_CASE("sampling box membership and projection clamp per coordinate") {
  auto fish = fish_params();
  CHECK_FALSE(geom::kSamplingBox.contains(fish));  // m and n2 below the box
  auto proj = geom::kSamplingBox.project(fish);
  CHECK(proj.m == 1.0);
  CHECK(proj.n2 == 0.5);
  CHECK(proj.a == fish.a);
  CHECK(proj.n3 == fish.n3);
  CHECK(geom::kSamplingBox.contains(proj));

  auto wide = circle_params(0.9);
  auto pw = geom::kSamplingBox.project(wide);
  CHECK(pw.a == 0.75);
  CHECK(pw.b == 0.75);
}

TEST_CASE("svg export writes a drawable document") {
  auto path = (std::filesystem::temp_directory_path() / "mto_shape_test.svg").string();
  geom::export_shape_svg(path, fish_params(), 400);
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("<svg") != std::string::npos);
  CHECK(text.find("path") != std::string::npos);
  std::filesystem::remove(path);
}
