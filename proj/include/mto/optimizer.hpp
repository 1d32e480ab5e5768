#pragma once

#include <Eigen/Dense>
#include <functional>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "mto/macrofea.hpp"
#include "mto/neural.hpp"
#include "mto/vae.hpp"

// Global dissipated-power minimization. A coordinate network maps element
// centers (through a fixed Fourier embedding) to a latent microstructure
// point and an orientation per element; the frozen decoder turns the latent
// point into permeability, contact perimeter and fluid fraction; the macro
// solve and its adjoint close the loop. Training the small network instead
// of per-element variables is what makes the design field smooth.
namespace mto::opt {

struct DesignNetSpec {
  int n_freq = 64;
  double fmax = 6.0;
  std::vector<int> hidden = {20, 20};
  double leaky = 0.01;
  std::uint64_t seed = 77;
};

struct Hyper {
  double lr = 4e-3;
  int max_epochs = 300;
  double penalty0 = 1.0;        // epoch-k constraint weight: penalty0 + growth*k
  double penalty_growth = 0.1;
  double conv_tol = 1e-5;       // stop when the loss change drops below this
};

enum class ConstraintType { None, MinContact, MaxVolume };

struct Constraint {
  ConstraintType type = ConstraintType::None;
  double bound = 0;
};

// Orientation-only mode: one fixed microstructure everywhere, only the
// angle field is optimized. `fields` is the full 10-field record of the
// chosen cell so designs stay self-describing.
struct FixedMicrostructure {
  double c00 = 0, c11 = 0;
  std::array<double, 10> fields{};
  double z1 = 0, z2 = 0;  // latent point it came from, for provenance
};

struct Problem {
  std::string name;
  fea::Mesh mesh;
  std::vector<fea::BoundarySegment> segments;
  double mu = 1.0;
  Constraint constraint;
  Hyper hyper;
  DesignNetSpec net;
  bool orientation_only = false;  // config intent; requires `fixed` before optimize
  std::optional<FixedMicrostructure> fixed;
};

struct EpochStats {
  double loss = 0, J = 0, g = 0, penalty_weight = 0;
  double contact = 0, volume_fraction = 0;
};

struct DesignField {
  std::string problem_name;
  int nelx = 0, nely = 0;
  double h = 0;
  Eigen::MatrixXd z;      // N x 2, zero in orientation-only mode
  Eigen::VectorXd theta;  // N
  Eigen::MatrixXd psi;    // N x 10 decoded (or fixed) fields, denormalized
  double J_initial = 0, J_final = 0;
  double contact_total = 0;    // sum over elements of h * gamma
  double volume_fraction = 0;  // mean fluid fraction (the constrained flow volume)
  std::vector<EpochStats> history;
  nlohmann::json provenance;
};

struct DesignEval {
  double J = 0;
  double contact = 0;
  double volume_fraction = 0;
  fea::FlowSolution sol;
  Eigen::VectorXd cinv00, cinv01, cinv11;
};

// Recomputes the objective from the persisted per-element fields alone
// (no network, no decoder). optimize() reports J_final through this same
// path, so a reload must reproduce it exactly.
DesignEval evaluate_design(const Problem& prob, const DesignField& design);

using ProgressFn = std::function<void(int epoch, const EpochStats&)>;

// One evaluation of the penalty loss at the given network parameters:
// network forward, decode (or fixed fields), rotate/invert permeability,
// flow solve, J/J0 plus the epoch's penalty term. When `grads` is non-null
// the tape is backpropagated into it (nn::param_refs order). J0 <= 0 means
// "this is the first epoch": the objective is normalized by its own value.
// optimize() runs exactly this every epoch; tests difference it directly.
EpochStats epoch_loss(const Problem& prob, fea::MacroProblem& fe, const Eigen::MatrixXd& F,
                      const nn::MlpParams& net, const vae::VaeModel* model, int epoch, double J0,
                      std::vector<ad::Matrix>* grads);

// `model` may be null only in orientation-only mode.
DesignField optimize(const Problem& prob, const vae::VaeModel* model,
                     const ProgressFn& progress = {});

struct ParetoPoint {
  double bound = 0;
  double J = 0;
  double contact = 0;
  DesignField design;
};

// Re-optimizes from scratch per bound (same seed), tightest bound last.
std::vector<ParetoPoint> pareto_sweep(const Problem& base, const std::vector<double>& bounds,
                                      const vae::VaeModel* model, const ProgressFn& progress = {});

void save_design(const DesignField& d, const std::string& path);
DesignField load_design(const std::string& path);

Problem problem_from_json(const nlohmann::json& j);
nlohmann::json problem_to_json(const Problem& p);
Problem load_problem(const std::string& path);

}  // namespace mto::opt
