#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "mto/dataset.hpp"

namespace data = mto::data;
namespace geom = mto::geom;

namespace {

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

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

bool records_equal(const data::Record& x, const data::Record& y) {
  auto rx = data::NormalizationSpec::raw(x), ry = data::NormalizationSpec::raw(y);
  for (int i = 0; i < 10; ++i)
    if (rx[i] != ry[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("parameter draws stay in the sampling box and follow the seed") {
  auto ps = data::sample_params(200, 7);
  REQUIRE(ps.size() == 200);
  for (const auto& p : ps) CHECK(geom::kSamplingBox.contains(p));
  auto again = data::sample_params(200, 7);
  bool identical = true;
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (!(ps[i].a == again[i].a && ps[i].m == again[i].m && ps[i].n3 == again[i].n3))
      identical = false;
  CHECK(identical);
  auto other = data::sample_params(200, 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps[i].a != other[i].a) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("one record pairs geometry with its homogenized response") {
  data::Record r = data::build_record(fish_params(), 64, 1000);
  CHECK(r.vf == doctest::Approx(1.0 - 0.298216).epsilon(2e-3));  // fluid fraction
  CHECK(r.gamma == doctest::Approx(2.1284).epsilon(2e-3));
  CHECK(r.c00 > 0);
  CHECK(r.c11 > 0);
  CHECK(r.c00 < 1e4);

  geom::SuperShapeParams full;  // oversized circle fills the cell with solid
  full.a = full.b = 2.0;
  full.m = 4;
  full.n1 = full.n2 = full.n3 = 2;
  data::Record s = data::build_record(full, 32, 1000);
  CHECK(s.vf == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
  CHECK(s.gamma == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
  CHECK(s.c00 == doctest::Approx(1e-6).epsilon(1e-3));
  CHECK(s.c11 == doctest::Approx(1e-6).epsilon(1e-3));
}

TEST_CASE("generation is independent of the worker count") {
  data::GenerateOptions opts;
  opts.count = 10;
  opts.seed = 42;
  opts.resolution = 32;
  opts.boundary_points = 400;

  opts.workers = 1;
  data::Dataset a = data::generate(opts);
  opts.workers = 4;
  data::Dataset b = data::generate(opts);

  REQUIRE(a.records.size() == 10);
  REQUIRE(b.records.size() == 10);
  CHECK(a.rejected == b.rejected);
  for (int i = 0; i < 10; ++i) CHECK(records_equal(a.records[i], b.records[i]));
  CHECK(a.rejected >= 0);
}

TEST_CASE("interrupted generation resumes from its checkpoint") {
  std::string ck = temp_path("mto_gen_resume.ckpt");
  std::filesystem::remove(ck);

  data::GenerateOptions opts;
  opts.count = 8;
  opts.seed = 42;
  opts.resolution = 16;
  opts.boundary_points = 400;
  data::Dataset ref = data::generate(opts);

  opts.checkpoint = ck;
  data::generate(opts);
  REQUIRE(std::filesystem::exists(ck));

  // keep the header and the first three rows, as if the run had been killed
  std::vector<std::string> lines;
  {
    std::ifstream in(ck);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
  }
  REQUIRE(lines.size() == 9);
  {
    std::ofstream out(ck, std::ios::trunc);
    for (std::size_t i = 0; i < 4; ++i) out << lines[i] << '\n';
    out << "0.3,torn";  // interrupted mid-append
  }

  data::Dataset resumed = data::generate(opts);
  REQUIRE(resumed.records.size() == ref.records.size());
  for (std::size_t i = 0; i < ref.records.size(); ++i)
    CHECK(records_equal(resumed.records[i], ref.records[i]));
  CHECK(resumed.rejected == ref.rejected);

  // different settings invalidate the file instead of mixing scales
  opts.resolution = 24;
  data::generate(opts);
  std::ifstream in(ck);
  std::string header;
  std::getline(in, header);
  CHECK(header.find("res=24") != std::string::npos);
  std::filesystem::remove(ck);
}

TEST_CASE("normalization maps fields to [0,1] and back, log-scaling permeability") {
  data::GenerateOptions opts;
  opts.count = 12;
  opts.seed = 3;
  opts.resolution = 32;
  opts.boundary_points = 400;
  data::Dataset ds = data::generate(opts);

  const auto& names = data::NormalizationSpec::names();
  CHECK(std::string(names[0]) == "a");
  CHECK(std::string(names[6]) == "c00");
  CHECK(std::string(names[9]) == "vf");

  auto spec = data::NormalizationSpec::fit(ds.records);
  CHECK(spec.fields[6].log10);
  CHECK(spec.fields[7].log10);
  CHECK_FALSE(spec.fields[0].log10);
  CHECK_FALSE(spec.fields[9].log10);

  Eigen::MatrixXd X = spec.normalize(ds.records);
  REQUIRE(X.rows() == 12);
  REQUIRE(X.cols() == 10);
  CHECK(X.minCoeff() >= -1e-12);
  CHECK(X.maxCoeff() <= 1 + 1e-12);

  for (int i = 0; i < X.rows(); ++i) {
    auto one = spec.normalize_one(ds.records[i]);
    for (int j = 0; j < 10; ++j) CHECK(one[j] == doctest::Approx(X(i, j)).epsilon(1e-14));
    data::Record back = spec.denormalize_row(X.row(i).transpose());
    auto want = data::NormalizationSpec::raw(ds.records[i]);
    auto got = data::NormalizationSpec::raw(back);
    for (int j = 0; j < 10; ++j)
      CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-10));
  }

  auto spec2 = data::norm_spec_from_json(data::norm_spec_to_json(spec));
  for (int j = 0; j < 10; ++j) {
    CHECK(spec2.fields[j].lo == spec.fields[j].lo);
    CHECK(spec2.fields[j].hi == spec.fields[j].hi);
    CHECK(spec2.fields[j].log10 == spec.fields[j].log10);
  }
}

TEST_CASE("dataset files round-trip exactly and fail loudly when damaged") {
  data::GenerateOptions opts;
  opts.count = 6;
  opts.seed = 9;
  opts.resolution = 32;
  opts.boundary_points = 400;
  data::Dataset ds = data::generate(opts);
  ds.norm = data::NormalizationSpec::fit(ds.records);

  std::string csv = temp_path("mto_dataset_test.csv");
  data::save_dataset(ds, csv);
  data::Dataset in = data::load_dataset(csv);
  REQUIRE(in.records.size() == ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i)
    CHECK(records_equal(in.records[i], ds.records[i]));
  CHECK(in.rejected == ds.rejected);
  CHECK(in.opts.seed == ds.opts.seed);
  CHECK(in.opts.resolution == ds.opts.resolution);
  for (int j = 0; j < 10; ++j) {
    CHECK(in.norm.fields[j].lo == ds.norm.fields[j].lo);
    CHECK(in.norm.fields[j].hi == ds.norm.fields[j].hi);
  }

  SUBCASE("missing sidecar") {
    std::filesystem::remove(csv + ".meta.json");
    CHECK_THROWS_AS(data::load_dataset(csv), mto::Error);
  }
  SUBCASE("malformed row reports its line") {
    std::ofstream app(csv, std::ios::app);
    app << "0.1,0.2,three,4,5,6,7,8,9,10\n";
    app.close();
    try {
      data::load_dataset(csv);
      FAIL("expected a parse error");
    } catch (const mto::Error& e) {
      CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
  }
  SUBCASE("short row reports its line") {
    std::ofstream app(csv, std::ios::app);
    app << "0.1,0.2\n";
    app.close();
    CHECK_THROWS_AS(data::load_dataset(csv), mto::Error);
  }

  std::filesystem::remove(csv);
  std::filesystem::remove(csv + ".meta.json");
}
