#pragma once

#include <Eigen/Dense>

#include "mto/common.hpp"
#include "mto/geometry.hpp"

// Periodic homogenization of one microstructure cell. The cell is meshed
// with the same biquadratic/bilinear Stokes elements as the macro model;
// solid pixels carry a large Brinkman drag, fluid pixels none. Two cell
// solves (unit body force along x, then y) yield the effective permeability
// as the volume-averaged velocity, since the cell has unit volume.
namespace mto::micro {

struct HomogenizeOptions {
  double alpha_solid = 1e6;     // inverse permeability inside solid pixels
  double fluid_cap = 1e4;       // stand-in permeability for an all-fluid cell
  bool allow_all_fluid = false; // without this an all-fluid cell is an error
};

struct CellPermeability {
  double c00 = 0, c11 = 0;
  bool fluid_capped = false;
};

struct CellFlowDetail {
  CellPermeability perm;
  double c01 = 0, c10 = 0;        // cross-coupling, not part of the reduced model
  double rel_residual = 0;        // worse of the two solves
  double max_divergence = 0;
};

// An all-solid cell comes out at 1/alpha_solid per axis (a uniform Brinkman
// medium is an exact discrete solution), an all-fluid cell at the cap.
CellPermeability homogenize_cell(const geom::IndicatorGrid& grid,
                                 const HomogenizeOptions& opts = {});
CellFlowDetail homogenize_cell_detail(const geom::IndicatorGrid& grid,
                                      const HomogenizeOptions& opts = {});

// Symmetric effective tensor in the macro frame.
struct EffectiveTensor {
  double c00 = 0, c01 = 0, c11 = 0;

  double det() const { return c00 * c11 - c01 * c01; }
  double trace() const { return c00 + c11; }
};

// R(theta) * diag(c00, c11) * R(theta)^T; pi-periodic in theta.
EffectiveTensor rotate_tensor(double c00, double c11, double theta);

// Inverse of a symmetric positive definite 2x2 tensor.
EffectiveTensor invert_tensor(const EffectiveTensor& t);

}  // namespace mto::micro
