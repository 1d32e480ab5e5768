#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "mto/vae.hpp"

namespace vae = mto::vae;
namespace data = mto::data;

namespace {

// Smooth two-factor family of records: cheap to build, learnable by a tiny
// model, and with known field ranges.
data::Dataset synthetic_dataset(int side = 9) {
  data::Dataset ds;
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) {
      double s = double(i) / (side - 1), t = double(j) / (side - 1);
      data::Record r;
      r.shape.a = 0.05 + 0.70 * s;
      r.shape.b = 0.05 + 0.70 * t;
      r.shape.m = 1.0 + 21.0 * s * t;
      r.shape.n1 = 0.5 + 9.5 * t;
      r.shape.n2 = 0.5 + 9.5 * (1 - s);
      r.shape.n3 = 0.5 + 9.5 * s;
      r.c00 = std::pow(10.0, -6.0 + 4.0 * s);
      r.c11 = std::pow(10.0, -6.0 + 4.0 * t);
      r.gamma = 0.5 + s + t;
      r.vf = 0.2 + 0.6 * (0.3 * s + 0.7 * t);
      ds.records.push_back(r);
    }
  ds.norm = data::NormalizationSpec::fit(ds.records);
  return ds;
}

vae::TrainResult train_small(int epochs = 120, std::uint64_t seed = 77) {
  data::Dataset ds = synthetic_dataset();
  vae::TrainOptions opts;
  opts.hidden = 32;
  opts.max_epochs = epochs;
  opts.conv_tol = 0;  // run the full budget
  opts.holdout = 0.1;
  opts.seed = seed;
  return vae::train(ds, opts);
}

}  // namespace

TEST_CASE("shuffle split partitions deterministically") {
  auto [tr, ho] = vae::split_indices(100, 0.1, 5);
  CHECK(tr.size() == 90);
  CHECK(ho.size() == 10);
  std::set<int> all(tr.begin(), tr.end());
  all.insert(ho.begin(), ho.end());
  CHECK(all.size() == 100);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 99);

  auto [tr2, ho2] = vae::split_indices(100, 0.1, 5);
  CHECK(tr == tr2);
  CHECK(ho == ho2);
  auto [tr3, ho3] = vae::split_indices(100, 0.1, 6);
  CHECK(ho != ho3);
}

TEST_CASE("training reduces the loss and is seed-reproducible") {
  auto res = train_small();
  REQUIRE(!res.history.empty());
  CHECK(res.history.back().total < res.history.front().total);
  double early = res.history[0].total;
  double later = res.history[std::min<std::size_t>(30, res.history.size() - 1)].total;
  CHECK(later < early);
  for (const auto& e : res.history) {
    CHECK(std::isfinite(e.total));
    CHECK(e.recon >= 0);
    CHECK(e.kl >= -1e-12);
  }
  CHECK(res.train_indices.size() + res.holdout_indices.size() == 81);
  REQUIRE(res.holdout_field_err.size() == 10);
  for (int j = 0; j < 10; ++j) {
    CHECK(std::isfinite(res.holdout_field_err[j]));
    CHECK(res.holdout_field_err[j] >= 0);
  }

  auto res2 = train_small();
  const auto& W1 = res.model.decoder.W[0];
  const auto& W2 = res2.model.decoder.W[0];
  CHECK(std::memcmp(W1.data(), W2.data(), sizeof(double) * W1.size()) == 0);
}

TEST_CASE("decoding lands in the normalized box and matches the batch path") {
  auto res = train_small(40);
  const auto& m = res.model;
  CHECK(m.latent_dim() == 2);

  for (double z1 : {-3.0, 0.0, 3.0})
    for (double z2 : {-3.0, 1.5, 3.0}) {
      vae::Decoded d = vae::decode(m, z1, z2);
      for (double v : d.norm_row) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      CHECK(d.rec.vf >= m.norm.fields[9].lo - 1e-12);
      CHECK(d.rec.vf <= m.norm.fields[9].hi + 1e-12);
      CHECK(d.rec.c00 >= std::pow(10.0, m.norm.fields[6].lo) * (1 - 1e-9));

      Eigen::MatrixXd Z(1, 2);
      Z << z1, z2;
      Eigen::MatrixXd row = vae::decode_batch_norm(m, Z);
      for (int j = 0; j < 10; ++j)
        CHECK(row(0, j) == doctest::Approx(d.norm_row[j]).epsilon(1e-14));
    }

  Eigen::VectorXd enc = vae::encode(m, synthetic_dataset().records[40]);
  REQUIRE(enc.size() == 4);  // mean and log variance per latent axis
  CHECK(enc.allFinite());

  Eigen::VectorXd err = vae::reconstruction_field_error(m, synthetic_dataset().records);
  REQUIRE(err.size() == 10);
  CHECK(err.minCoeff() >= 0);
}

TEST_CASE("model files round-trip bitwise") {
  auto res = train_small(30);
  auto path = (std::filesystem::temp_directory_path() / "mto_vae_test.json").string();
  vae::save_model(res.model, path);
  vae::VaeModel in = vae::load_model(path);
  std::filesystem::remove(path);

  CHECK(in.beta == res.model.beta);
  CHECK(in.seed == res.model.seed);
  for (std::size_t l = 0; l < res.model.decoder.W.size(); ++l) {
    const auto& a = res.model.decoder.W[l];
    const auto& b = in.decoder.W[l];
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
  }
  for (std::size_t l = 0; l < res.model.encoder.W.size(); ++l)
    CHECK(std::memcmp(res.model.encoder.W[l].data(), in.encoder.W[l].data(),
                      sizeof(double) * in.encoder.W[l].size()) == 0);
  for (int j = 0; j < 10; ++j) {
    CHECK(in.norm.fields[j].lo == res.model.norm.fields[j].lo);
    CHECK(in.norm.fields[j].hi == res.model.norm.fields[j].hi);
    CHECK(in.norm.fields[j].log10 == res.model.norm.fields[j].log10);
  }
}

TEST_CASE("selection is the exhaustive argmax over the latent grid") {
  auto res = train_small(60);
  const auto& m = res.model;

  // independent scan over the same lattice
  const int gn = 41;
  const double lo = -3.0, hi = 3.0, step = (hi - lo) / (gn - 1);
  Eigen::MatrixXd Z(gn * gn, 2);
  for (int i = 0; i < gn; ++i)
    for (int j = 0; j < gn; ++j) {
      Z(i * gn + j, 0) = lo + step * i;
      Z(i * gn + j, 1) = lo + step * j;
    }
  Eigen::MatrixXd rows = vae::decode_batch_norm(m, Z);
  Eigen::VectorXd solid(gn * gn), trace(gn * gn);
  for (int k = 0; k < gn * gn; ++k) {
    data::Record rec = m.norm.denormalize_row(rows.row(k).transpose());
    solid[k] = 1.0 - rec.vf;
    trace[k] = rec.c00 + rec.c11;
  }

  // pick a target that several grid points satisfy
  double target = solid[gn * gn / 2];
  double tol = 0.05;
  int best = -1;
  for (int k = 0; k < gn * gn; ++k)
    if (std::abs(solid[k] - target) <= tol && (best < 0 || trace[k] > trace[best])) best = k;
  REQUIRE(best >= 0);

  vae::Selection sel = vae::select_microstructure(m, target, tol, gn);
  CHECK(sel.z1 == doctest::Approx(Z(best, 0)).epsilon(1e-12).scale(1.0));
  CHECK(sel.z2 == doctest::Approx(Z(best, 1)).epsilon(1e-12).scale(1.0));
  CHECK(1.0 - sel.decoded.rec.vf == doctest::Approx(solid[best]).epsilon(1e-12));

  // a band too thin for the grid: bisection still hits the level set
  double mid = 0.5 * (solid.minCoeff() + solid.maxCoeff());
  double thin = 1e-7;
  vae::Selection fine = vae::select_microstructure(m, mid, thin, gn);
  CHECK(std::abs((1.0 - fine.decoded.rec.vf) - mid) <= thin);

  // an unreachable target fails with a clear error
  CHECK_THROWS_AS(vae::select_microstructure(m, -0.5, 1e-3, gn), mto::Error);
  CHECK_THROWS_AS(vae::select_microstructure(m, 0.3, -1.0, gn), mto::Error);
  CHECK_THROWS_AS(vae::select_microstructure(m, 0.3, 1e-3, 5), mto::Error);
}
