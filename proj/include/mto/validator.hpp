#pragma once

#include <Eigen/Dense>
#include <functional>
#include <json.hpp>
#include <string>

#include "mto/optimizer.hpp"

// Full-fidelity check of an optimized design: every element's decoded
// parameters are sent back through real geometry and homogenization, the
// macro problem is re-solved with those measured properties, and the
// surrogate's claims (dissipated power, contact area) are compared against
// the re-simulated truth.
namespace mto::val {

struct ValidationOptions {
  int resolution = 64;       // homogenization pixels, matches dataset default
  int boundary_points = 1000;
  int workers = 1;
  micro::HomogenizeOptions homog{};
  // optional per-element checkpoint file: a long validation interrupted and
  // rerun with the same memo path resumes instead of re-homogenizing
  std::string memo;
};

struct ValidationReport {
  double J_pred = 0, J_true = 0;
  double contact_pred = 0, contact_true = 0;
  double J_rel_err = 0, contact_rel_err = 0;
  int projected_elements = 0;   // decoded params outside the sampling box
  int degenerate_elements = 0;  // unusable even after projection; solid fallback
  double mean_perm_log_err = 0; // |log10 c_pred - log10 c_true|, both axes
  double max_perm_log_err = 0;
  Eigen::VectorXd c00_true, c11_true, gamma_true, vf_true;
  fea::FlowSolution sol_true;
};

ValidationReport validate(const opt::Problem& prob, const opt::DesignField& design,
                          const ValidationOptions& opts = {},
                          const std::function<void(int done, int total)>& progress = {});

nlohmann::json report_to_json(const ValidationReport& r);
void save_report(const ValidationReport& r, const std::string& path);

// Decoded microstructures drawn in their elements (rotated, clipped).
void export_design_svg(const opt::DesignField& design, const std::string& path,
                       int points_per_shape = 180);

// Flow solution at the predicted properties plus per-element design fields.
void export_design_vtk(const opt::Problem& prob, const opt::DesignField& design,
                       const std::string& path);

}  // namespace mto::val
