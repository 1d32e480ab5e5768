#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mto/autodiff.hpp"
#include "mto/common.hpp"

// Stokes-Brinkman finite elements on a structured quad mesh.
// Velocity is biquadratic (9 nodes/element), pressure bilinear (4 nodes),
// plus one global multiplier pinning the pressure mean to zero. The Brinkman
// drag couples velocity to an inverse permeability tensor that differs per
// element, which is how homogenized microstructures enter the macro model.
namespace mto::fea {

// Element-local operators for a square element of side h, viscosity 1,
// integrated with 3x3 Gauss quadrature (exact for these polynomials).
// Velocity dofs are interleaved (2*node+component); local node numbering is
// ix + 3*iy over the 3x3 grid, pressure ix + 2*iy over corners.
struct ElementMatrices {
  Eigen::Matrix<double, 18, 18> visc;  // 2*mu*eps(u):eps(v) with mu=1
  Eigen::Matrix<double, 9, 9> mass;    // scalar shape mass, Brinkman building block
  Eigen::Matrix<double, 18, 4> div;    // -integral( dNi/dxa * Pj )
  Eigen::Matrix<double, 4, 1> pint;    // integral of each pressure shape
  Eigen::Matrix<double, 9, 1> vint;    // integral of each velocity shape
  double size = 0;

  static ElementMatrices compute(double h);
};

struct Mesh {
  int nelx = 0, nely = 0;
  double h = 0;  // element side

  int n_elems() const { return nelx * nely; }
  int vnx() const { return 2 * nelx + 1; }
  int vny() const { return 2 * nely + 1; }
  int n_vnodes() const { return vnx() * vny(); }
  int n_pnodes() const { return (nelx + 1) * (nely + 1); }
  int n_vdofs() const { return 2 * n_vnodes(); }
  int n_total() const { return n_vdofs() + n_pnodes() + 1; }  // + pressure-mean multiplier
  double width() const { return nelx * h; }
  double height() const { return nely * h; }

  int elem_id(int ex, int ey) const { return ey * nelx + ex; }
  std::array<int, 9> elem_vnodes(int ex, int ey) const;
  std::array<int, 4> elem_pnodes(int ex, int ey) const;
  Eigen::Vector2d vnode_pos(int node) const;
  Eigen::Vector2d elem_center(int e) const;

  void validate() const;
};

// Velocity prescribed on a span of the domain boundary with a parabolic
// profile (zero at span ends, `peak * dir` at the middle). Boundary not
// covered by any segment is a no-slip wall.
struct BoundarySegment {
  enum class Edge { Left, Right, Bottom, Top };
  Edge edge;
  double lo = 0, hi = 0;  // span along the edge, physical units
  double peak = 0;
  Eigen::Vector2d dir = Eigen::Vector2d::Zero();
};

// Net analytic flux of the segments through the boundary (outward positive).
double segment_flux(const Mesh& mesh, const std::vector<BoundarySegment>& segs);

struct FlowSolution {
  Eigen::VectorXd S;  // full state [velocity; pressure; multiplier]
  double rel_residual = 0;
  double lambda = 0;
  double max_divergence = 0;
};

// One macro problem = mesh + boundary data. Assembly sparsity and the
// Dirichlet reduction are built once; per-coefficient solves only refill
// values and refactorize. The stiffness matrix is symmetric, so the same
// factorization serves the forward solve and the adjoint solve in backward.
class MacroProblem {
 public:
  MacroProblem(const Mesh& mesh, std::vector<BoundarySegment> segments, double mu = 1.0);

  const Mesh& mesh() const { return mesh_; }
  int n_elems() const { return mesh_.n_elems(); }
  Eigen::MatrixXd elem_centers_normalized() const;  // N x 2 in [0,1]^2

  // cinv* are per-element entries of the inverse effective permeability
  // tensor [[cinv00, cinv01], [cinv01, cinv11]].
  FlowSolution solve(const Eigen::VectorXd& cinv00, const Eigen::VectorXd& cinv01,
                     const Eigen::VectorXd& cinv11);

  // J = 1/2 sum_e u_e^T [mu * visc + Brinkman(cinv)] u_e; equals half the
  // boundary work of the reaction forces for pure-Dirichlet problems.
  double dissipated_power(const FlowSolution& sol, const Eigen::VectorXd& cinv00,
                          const Eigen::VectorXd& cinv01, const Eigen::VectorXd& cinv11) const;

  // Tape variants. cinv* are N x 1 variables; the returned state is the full
  // vector (prescribed entries included as constants in the value, zero rows
  // in the gradient). Backward solves the adjoint with the cached
  // factorization and routes sensitivities into the cinv parents.
  ad::Var solve_on_tape(ad::Tape& tape, ad::Var cinv00, ad::Var cinv01, ad::Var cinv11);
  ad::Var dissipated_power_on_tape(ad::Tape& tape, ad::Var S, ad::Var cinv00, ad::Var cinv01,
                                   ad::Var cinv11);

  // Dense assembled reduced system for cross-checks on small meshes.
  Eigen::MatrixXd dense_reduced_matrix(const Eigen::VectorXd& cinv00,
                                       const Eigen::VectorXd& cinv01,
                                       const Eigen::VectorXd& cinv11);
  Eigen::VectorXd dense_reduced_rhs(const Eigen::VectorXd& cinv00,
                                    const Eigen::VectorXd& cinv01,
                                    const Eigen::VectorXd& cinv11);
  int n_reduced() const { return n_red_; }
  const Eigen::VectorXd& prescribed_values() const { return presc_val_; }

 private:
  using SpMat = Eigen::SparseMatrix<double>;
  using Solver = Eigen::SparseLU<SpMat>;

  Mesh mesh_;
  std::vector<BoundarySegment> segs_;
  double mu_;
  ElementMatrices em_;

  std::vector<char> is_presc_;   // per velocity dof
  Eigen::VectorXd presc_val_;    // per velocity dof, 0 where free
  std::vector<int> red_index_;   // full dof -> reduced index or -1
  std::vector<int> full_index_;  // reduced index -> full dof
  int n_red_ = 0;

  SpMat K_;                           // reduced matrix, pattern fixed
  std::vector<double> base_vals_;     // coefficient-independent part of K_
  Eigen::VectorXd base_rhs_;          // Dirichlet lift of the base part
  std::vector<std::int64_t> slots_;   // per element, 18x18 value slots (-1 if row prescribed)
  struct PrescTerm {                  // Brinkman coupling into a nonzero prescribed dof
    int e;
    int row;    // reduced rhs row
    int dcomp;  // 0: cinv00, 1: cinv01, 2: cinv11
    double coeff;
  };
  std::vector<PrescTerm> presc_terms_;
  std::shared_ptr<Solver> solver_;
  bool analyzed_ = false;

  void build_prescription();
  void build_pattern();
  void fill_values(const Eigen::VectorXd& cinv00, const Eigen::VectorXd& cinv01,
                   const Eigen::VectorXd& cinv11, Eigen::VectorXd& rhs);
  void check_coeffs(const Eigen::VectorXd& cinv00, const Eigen::VectorXd& cinv01,
                    const Eigen::VectorXd& cinv11) const;
};

// Q1-corner unstructured quad export with optional per-element fields;
// velocity vectors and pressure are written at the corners.
void export_flow_vtk(const std::string& path, const Mesh& mesh, const FlowSolution& sol,
                     const std::map<std::string, Eigen::VectorXd>& cell_fields);

}  // namespace mto::fea
