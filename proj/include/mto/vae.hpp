#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mto/dataset.hpp"
#include "mto/neural.hpp"

// Variational autoencoder over the 10 normalized microstructure fields.
// The 2-D latent space is the design parametrization of the optimizer: a
// point z decodes to shape parameters plus the properties (permeability,
// contact perimeter, solid fraction) the macro model needs, without running
// geometry or homogenization in the optimization loop.
namespace mto::vae {

struct VaeModel {
  nn::MlpParams encoder;  // 10 -> hidden -> hidden -> 2*latent (mean, log variance)
  nn::MlpParams decoder;  // latent -> hidden -> hidden -> 10, sigmoid output
  double beta = 1e-7;
  data::NormalizationSpec norm;
  std::uint64_t seed = 77;

  int latent_dim() const { return decoder.spec.widths.front(); }
};

struct TrainOptions {
  int hidden = 600;
  int latent = 2;
  double beta = 1e-7;      // weight of the KL term
  double lr = 1e-3;
  int max_epochs = 800;
  double conv_tol = 1e-6;  // epoch-to-epoch loss change
  int conv_window = 25;    // consecutive small changes required to stop
  double holdout = 0.1;    // fraction excluded from training, used for the quality gate
  std::uint64_t seed = 77;
};

struct EpochLoss {
  double total = 0, recon = 0, kl = 0;
};

struct TrainResult {
  VaeModel model;
  std::vector<EpochLoss> history;
  std::vector<int> train_indices, holdout_indices;
  // Held-out mean reconstruction error per field, relative to the field's
  // normalization range (log10 range for the permeabilities).
  Eigen::VectorXd holdout_field_err;
};

// Deterministic shuffle-split of [0, n).
std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double holdout,
                                                            std::uint64_t seed);

TrainResult train(const data::Dataset& ds, const TrainOptions& opts,
                  const std::function<void(int epoch, const EpochLoss&)>& progress = {});

struct Decoded {
  data::Record rec;                 // denormalized fields
  std::array<double, 10> norm_row;  // raw decoder output in [0,1]
};

Decoded decode(const VaeModel& m, double z1, double z2);
Eigen::MatrixXd decode_batch_norm(const VaeModel& m, const Eigen::MatrixXd& Z);  // N x 10

// Encoder pass on one record: (mean..., log variance...) of the posterior.
Eigen::VectorXd encode(const VaeModel& m, const data::Record& r);

Eigen::VectorXd reconstruction_field_error(const VaeModel& m,
                                           const std::vector<data::Record>& recs);

struct Selection {
  double z1 = 0, z2 = 0;
  Decoded decoded;
};

// Scans a grid over the latent box [-3,3]^2 for the decoded point with the
// largest permeability trace c00 + c11 among those whose SOLID fraction
// (1 - decoded fluid vf) lies within vf_target +- vf_tol. When the band is
// thinner than the grid resolves, bisects grid-edge crossings of the target
// level set instead of failing outright.
Selection select_microstructure(const VaeModel& m, double vf_target, double vf_tol,
                                int grid_n = 200);

void save_model(const VaeModel& m, const std::string& path);
VaeModel load_model(const std::string& path);

}  // namespace mto::vae
