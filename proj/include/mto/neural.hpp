#pragma once

#include <cstdint>
#include <json.hpp>
#include <vector>

#include "mto/autodiff.hpp"
#include "mto/common.hpp"

namespace mto::nn {

using ad::Matrix;
using ad::Tape;
using ad::Var;

enum class OutputKind { Linear, Sigmoid };

struct MlpSpec {
  std::vector<int> widths;  // input width, hidden widths..., output width
  double leaky_slope = 0.01;
  OutputKind output = OutputKind::Linear;
};

struct MlpParams {
  MlpSpec spec;
  std::vector<Matrix> W;  // W[l] is widths[l] x widths[l+1]
  std::vector<Matrix> b;  // b[l] is 1 x widths[l+1], zero at init
};

// Xavier-uniform weights: |w| <= sqrt(6 / (fan_in + fan_out)), biases zero.
// The draw order is fixed (layer by layer, column-major within a matrix),
// so one seed pins every parameter.
MlpParams init_mlp(const MlpSpec& spec, std::uint64_t seed);

struct MlpVars {
  std::vector<Var> W, b;
};

// Records the parameters on a tape. Trainable params become leaves
// (gradients accumulate), frozen ones constants.
MlpVars stage(Tape& tape, const MlpParams& params, bool trainable);

// x is one sample per row. Hidden layers use LeakyReLU, the output layer
// the spec's OutputKind.
Var forward(Tape& tape, const MlpSpec& spec, const MlpVars& vars, Var x);

// Same arithmetic without a tape, for inference paths that must reproduce
// training-time values exactly.
Matrix forward_plain(const MlpParams& params, const Matrix& x);

// Adam with bias correction. Moment buffers are lazily sized on first step.
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<Matrix> m, v;

  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads);
};

// Collects pointers to every trainable matrix of an MLP in the order Adam
// and the gradient extraction must agree on.
std::vector<Matrix*> param_refs(MlpParams& params);

// Random Fourier embedding of 2-D points: columns of `freqs` are frequency
// vectors with components uniform in [0, fmax].
struct FourierFeatures {
  Matrix freqs;  // 2 x n_freq
};

FourierFeatures make_fourier_features(int n_freq, double fmax, std::uint64_t seed);

// xy is N x 2; returns N x 2*n_freq as [cos(2*pi*xy*F), sin(2*pi*xy*F)].
Matrix fourier_embed(const FourierFeatures& ff, const Matrix& xy);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json mlp_to_json(const MlpParams& params);
MlpParams mlp_from_json(const nlohmann::json& j);

}  // namespace mto::nn
