#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>

#include "mto/neural.hpp"

namespace nn = mto::nn;
namespace ad = mto::ad;
using ad::Matrix;

namespace {

nn::MlpSpec small_spec(nn::OutputKind out = nn::OutputKind::Linear) {
  nn::MlpSpec s;
  s.widths = {3, 8, 8, 2};
  s.output = out;
  return s;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

TEST_CASE("initialization is seed-deterministic and Xavier-bounded") {
  auto spec = small_spec();
  nn::MlpParams p1 = nn::init_mlp(spec, 77);
  nn::MlpParams p2 = nn::init_mlp(spec, 77);
  nn::MlpParams p3 = nn::init_mlp(spec, 78);

  REQUIRE(p1.W.size() == 3);
  bool any_diff = false;
  for (std::size_t l = 0; l < p1.W.size(); ++l) {
    CHECK(bitwise_equal(p1.W[l], p2.W[l]));
    CHECK(p1.b[l].isZero(0.0));
    CHECK(p1.W[l].rows() == spec.widths[l]);
    CHECK(p1.W[l].cols() == spec.widths[l + 1]);
    double bound = std::sqrt(6.0 / (spec.widths[l] + spec.widths[l + 1]));
    CHECK(p1.W[l].cwiseAbs().maxCoeff() <= bound);
    CHECK(p1.W[l].cwiseAbs().maxCoeff() > 0.1 * bound);  // actually random, not zeros
    if (!bitwise_equal(p1.W[l], p3.W[l])) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("zero input through zero biases gives zero output") {
  nn::MlpParams p = nn::init_mlp(small_spec(), 5);
  Matrix y = nn::forward_plain(p, Matrix::Zero(4, 3));
  CHECK(y.isZero(0.0));
}

TEST_CASE("taped forward reproduces the plain forward bitwise") {
  for (auto kind : {nn::OutputKind::Linear, nn::OutputKind::Sigmoid}) {
    nn::MlpParams p = nn::init_mlp(small_spec(kind), 9);
    mto::Rng rng(13);
    Matrix x(5, 3);
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 5; ++i) x(i, j) = rng.normal();

    ad::Tape tape;
    nn::MlpVars vars = nn::stage(tape, p, true);
    ad::Var y = nn::forward(tape, p.spec, vars, tape.constant(x));
    CHECK(bitwise_equal(tape.val(y), nn::forward_plain(p, x)));
  }
}

TEST_CASE("adam ignores zero gradients and moves ~lr on the first step") {
  Matrix w = Matrix::Constant(2, 2, 0.5);
  Matrix w0 = w;
  nn::Adam zero_adam;
  zero_adam.lr = 4e-3;
  zero_adam.step({&w}, {Matrix::Zero(2, 2)});
  CHECK(bitwise_equal(w, w0));

  nn::Adam adam;  // fresh state: a zero step still counts as a step
  adam.lr = 4e-3;
  Matrix g(2, 2);
  g << 1.0, -2.0, 0.3, 5.0;
  adam.step({&w}, {g});
  Matrix delta = w - w0;
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) {
      // after bias correction the first update is -lr * sign(g)
      CHECK(std::abs(delta(i, j)) == doctest::Approx(adam.lr).epsilon(1e-6));
      CHECK(delta(i, j) * g(i, j) < 0);
    }
}

TEST_CASE("adam update is antisymmetric in the gradient sign") {
  // from w = 0 the updates themselves are the new weights, so negating the
  // gradient must negate them bitwise
  Matrix wa = Matrix::Zero(1, 3), wb = wa;
  Matrix g(1, 3);
  g << 0.4, -1.2, 2.0;
  nn::Adam a, b;
  a.step({&wa}, {g});
  b.step({&wb}, {(-g).eval()});
  CHECK(bitwise_equal(wa, (-wb).eval()));
}

TEST_CASE("adam on a quadratic bowl follows the pinned trajectory") {
  // f(w) = w^2 from w=1 with lr 4e-3: slow, monotone descent.
  Matrix w = Matrix::Constant(1, 1, 1.0);
  nn::Adam adam;
  adam.lr = 4e-3;
  double prev = w(0, 0);
  double w200 = 0;
  bool monotone = true;
  for (int it = 0; it < 400; ++it) {
    adam.step({&w}, {(2.0 * w).eval()});
    if (w(0, 0) >= prev) monotone = false;
    prev = w(0, 0);
    if (it == 199) w200 = w(0, 0);
  }
  CHECK(w200 == doctest::Approx(0.35412476307017837).epsilon(1e-12));
  CHECK(monotone);
  CHECK(w(0, 0) < 0.1);
}

TEST_CASE("fourier features embed as paired cosine and sine") {
  nn::FourierFeatures ff = nn::make_fourier_features(16, 6.0, 3);
  REQUIRE(ff.freqs.rows() == 2);
  REQUIRE(ff.freqs.cols() == 16);
  CHECK(ff.freqs.minCoeff() >= 0.0);
  CHECK(ff.freqs.maxCoeff() <= 6.0);

  Matrix zero = nn::fourier_embed(ff, Matrix::Zero(1, 2));
  REQUIRE(zero.cols() == 32);
  CHECK((zero.leftCols(16).array() == 1.0).all());
  CHECK(zero.rightCols(16).isZero(0.0));

  mto::Rng rng(4);
  Matrix xy(3, 2);
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 3; ++i) xy(i, j) = rng.uniform(-1.0, 1.0);
  Matrix emb = nn::fourier_embed(ff, xy);
  CHECK(emb.cwiseAbs().maxCoeff() <= 1.0 + 1e-15);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 16; ++j) {
      double phase = 2.0 * M_PI * (xy.row(i) * ff.freqs.col(j))(0, 0);
      CHECK(emb(i, j) == doctest::Approx(std::cos(phase)).epsilon(1e-12));
      CHECK(emb(i, 16 + j) == doctest::Approx(std::sin(phase)).epsilon(1e-12));
    }
}

TEST_CASE("mlp json round-trip is exact") {
  nn::MlpParams p = nn::init_mlp(small_spec(nn::OutputKind::Sigmoid), 123);
  p.b[1].setConstant(0.25);  // make biases non-trivial too
  nn::MlpParams q = nn::mlp_from_json(nn::mlp_to_json(p));
  CHECK(q.spec.widths == p.spec.widths);
  CHECK(q.spec.leaky_slope == p.spec.leaky_slope);
  CHECK(q.spec.output == p.spec.output);
  for (std::size_t l = 0; l < p.W.size(); ++l) {
    CHECK(bitwise_equal(p.W[l], q.W[l]));
    CHECK(bitwise_equal(p.b[l], q.b[l]));
  }
}
