#include "mto/neural.hpp"

#include <cmath>

namespace mto::nn {

MlpParams init_mlp(const MlpSpec& spec, std::uint64_t seed) {
  require(spec.widths.size() >= 2, ErrorKind::Config, "mlp: need at least input and output widths");
  for (int w : spec.widths)
    require(w >= 1, ErrorKind::Config, "mlp: layer widths must be positive");
  MlpParams p;
  p.spec = spec;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    int fan_in = spec.widths[l];
    int fan_out = spec.widths[l + 1];
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix W(fan_in, fan_out);
    for (int j = 0; j < fan_out; ++j)
      for (int i = 0; i < fan_in; ++i) W(i, j) = rng.uniform(-limit, limit);
    p.W.push_back(std::move(W));
    p.b.push_back(Matrix::Zero(1, fan_out));
  }
  return p;
}

MlpVars stage(Tape& tape, const MlpParams& params, bool trainable) {
  MlpVars v;
  for (std::size_t l = 0; l < params.W.size(); ++l) {
    v.W.push_back(trainable ? tape.leaf(params.W[l]) : tape.constant(params.W[l]));
    v.b.push_back(trainable ? tape.leaf(params.b[l]) : tape.constant(params.b[l]));
  }
  return v;
}

Var forward(Tape& tape, const MlpSpec& spec, const MlpVars& vars, Var x) {
  require(vars.W.size() + 1 == spec.widths.size(), ErrorKind::Config,
          "mlp forward: staged layer count does not match spec");
  Var h = x;
  for (std::size_t l = 0; l < vars.W.size(); ++l) {
    h = ad::add_rowvec(ad::matmul(h, vars.W[l]), vars.b[l]);
    bool last = (l + 1 == vars.W.size());
    if (!last)
      h = ad::leaky_relu(h, spec.leaky_slope);
    else if (spec.output == OutputKind::Sigmoid)
      h = ad::sigmoid(h);
  }
  return h;
}

Matrix forward_plain(const MlpParams& params, const Matrix& x) {
  require(x.cols() == params.spec.widths.front(), ErrorKind::Config,
          "mlp forward: input width mismatch");
  Matrix h = x;
  double slope = params.spec.leaky_slope;
  for (std::size_t l = 0; l < params.W.size(); ++l) {
    Matrix out = h * params.W[l];
    out.rowwise() += params.b[l].row(0);
    bool last = (l + 1 == params.W.size());
    if (!last)
      h = out.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
    else if (params.spec.output == OutputKind::Sigmoid)
      h = out.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    else
      h = std::move(out);
  }
  return h;
}

void Adam::step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
  require(params.size() == grads.size(), ErrorKind::Config, "adam: params/grads size mismatch");
  if (m.empty()) {
    for (const Matrix* p : params) {
      m.push_back(Matrix::Zero(p->rows(), p->cols()));
      v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  require(m.size() == params.size(), ErrorKind::Config, "adam: state size changed between steps");
  ++t;
  double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    require(g.rows() == params[i]->rows() && g.cols() == params[i]->cols(), ErrorKind::Numeric,
            "adam: gradient shape mismatch");
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseProduct(g);
    Matrix mhat = m[i] / c1;
    Matrix vhat = v[i] / c2;
    *params[i] -= (lr * mhat.array() / (vhat.array().sqrt() + eps)).matrix();
  }
}

std::vector<Matrix*> param_refs(MlpParams& params) {
  std::vector<Matrix*> out;
  for (std::size_t l = 0; l < params.W.size(); ++l) {
    out.push_back(&params.W[l]);
    out.push_back(&params.b[l]);
  }
  return out;
}

FourierFeatures make_fourier_features(int n_freq, double fmax, std::uint64_t seed) {
  require(n_freq >= 1, ErrorKind::Config, "fourier: need at least one frequency");
  require(fmax > 0.0, ErrorKind::Config, "fourier: fmax must be positive");
  FourierFeatures ff;
  ff.freqs.resize(2, n_freq);
  Rng rng(seed);
  for (int k = 0; k < n_freq; ++k) {
    ff.freqs(0, k) = rng.uniform(0.0, fmax);
    ff.freqs(1, k) = rng.uniform(0.0, fmax);
  }
  return ff;
}

Matrix fourier_embed(const FourierFeatures& ff, const Matrix& xy) {
  require(xy.cols() == 2, ErrorKind::Config, "fourier: points must be N x 2");
  Matrix phase = 2.0 * M_PI * (xy * ff.freqs);
  Matrix out(xy.rows(), 2 * ff.freqs.cols());
  out.leftCols(ff.freqs.cols()) = phase.array().cos();
  out.rightCols(ff.freqs.cols()) = phase.array().sin();
  return out;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  j["data"] = data;
  return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  auto data = j.at("data").get<std::vector<double>>();
  require(static_cast<Eigen::Index>(data.size()) == rows * cols, ErrorKind::Io,
          "matrix: serialized size mismatch");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  return m;
}

nlohmann::json mlp_to_json(const MlpParams& params) {
  nlohmann::json j;
  j["widths"] = params.spec.widths;
  j["leaky_slope"] = params.spec.leaky_slope;
  j["output"] = params.spec.output == OutputKind::Sigmoid ? "sigmoid" : "linear";
  for (std::size_t l = 0; l < params.W.size(); ++l) {
    j["W"].push_back(matrix_to_json(params.W[l]));
    j["b"].push_back(matrix_to_json(params.b[l]));
  }
  return j;
}

MlpParams mlp_from_json(const nlohmann::json& j) {
  MlpParams p;
  p.spec.widths = j.at("widths").get<std::vector<int>>();
  p.spec.leaky_slope = j.at("leaky_slope").get<double>();
  std::string out = j.at("output").get<std::string>();
  if (out == "sigmoid")
    p.spec.output = OutputKind::Sigmoid;
  else if (out == "linear")
    p.spec.output = OutputKind::Linear;
  else
    fail_io("mlp: unknown output kind '" + out + "'");
  for (const auto& w : j.at("W")) p.W.push_back(matrix_from_json(w));
  for (const auto& b : j.at("b")) p.b.push_back(matrix_from_json(b));
  require(p.W.size() + 1 == p.spec.widths.size() && p.b.size() == p.W.size(), ErrorKind::Io,
          "mlp: layer count does not match widths");
  for (std::size_t l = 0; l < p.W.size(); ++l) {
    require(p.W[l].rows() == p.spec.widths[l] && p.W[l].cols() == p.spec.widths[l + 1],
            ErrorKind::Io, "mlp: weight shape does not match widths");
    require(p.b[l].rows() == 1 && p.b[l].cols() == p.spec.widths[l + 1], ErrorKind::Io,
            "mlp: bias shape does not match widths");
  }
  return p;
}

}  // namespace mto::nn
