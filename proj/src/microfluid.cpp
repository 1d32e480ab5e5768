#include "mto/microfluid.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <vector>

#include "mto/macrofea.hpp"

namespace mto::micro {

namespace {

// Periodic Stokes-Brinkman operator on an N x N pixel grid of the unit
// cell. Element size is 1/N; velocity nodes wrap to a 2N x 2N torus grid,
// pressure nodes to N x N, plus one pressure-mean multiplier. The sparsity
// pattern and the symbolic factorization depend only on N, so they are
// cached per resolution; per-call work is refilling values, one numeric
// factorization and two solves against the same matrix.
class CellSolver {
 public:
  explicit CellSolver(int n) : N(n), em_(fea::ElementMatrices::compute(1.0 / n)) {
    nvn_ = 2 * N * 2 * N;
    nv_ = 2 * nvn_;
    np_ = N * N;
    ntot_ = nv_ + np_ + 1;
    build_pattern();
    build_rhs();
  }

  int vnode(int gx, int gy) const {
    gx %= 2 * N;
    gy %= 2 * N;
    return gy * 2 * N + gx;
  }
  int pnode(int gx, int gy) const {
    gx %= N;
    gy %= N;
    return gy * N + gx;
  }

  CellFlowDetail solve(const geom::IndicatorGrid& grid, const HomogenizeOptions& opts) {
    std::copy(base_vals_.begin(), base_vals_.end(), K_.valuePtr());
    double* vals = K_.valuePtr();
    for (int ey = 0; ey < N; ++ey)
      for (int ex = 0; ex < N; ++ex) {
        if (!grid.at(ex, ey)) continue;
        const std::int64_t* sl = slots_.data() + (static_cast<std::size_t>(ey) * N + ex) * 162;
        for (int k = 0; k < 162; ++k) vals[sl[k]] += opts.alpha_solid * mass_flat_[k % 81];
      }
    if (!analyzed_) {
      solver_.analyzePattern(K_);
      analyzed_ = true;
    }
    solver_.factorize(K_);
    require(solver_.info() == Eigen::Success, ErrorKind::Numeric,
            "homogenize: cell operator factorization failed");
    Eigen::VectorXd U0 = solver_.solve(f0_);
    Eigen::VectorXd U1 = solver_.solve(f1_);
    require(U0.allFinite() && U1.allFinite(), ErrorKind::Numeric,
            "homogenize: non-finite cell solution");
    double r0 = (K_ * U0 - f0_).norm() / f0_.norm();
    double r1 = (K_ * U1 - f1_).norm() / f1_.norm();
    require(std::max(r0, r1) < 1e-8, ErrorKind::Numeric,
            "homogenize: cell solve residual too large");

    CellFlowDetail d;
    d.perm.c00 = f0_.dot(U0);  // volume average of u0_x over the unit cell
    d.c01 = f1_.dot(U0);
    d.c10 = f0_.dot(U1);
    d.perm.c11 = f1_.dot(U1);
    d.rel_residual = std::max(r0, r1);

    double maxdiv = 0;
    for (const Eigen::VectorXd* U : {&U0, &U1}) {
      Eigen::VectorXd divres = Eigen::VectorXd::Zero(np_);
      double lam = (*U)[ntot_ - 1];
      for (int ey = 0; ey < N; ++ey)
        for (int ex = 0; ex < N; ++ex)
          for (int j = 0; j < 4; ++j) {
            int pj = pnode(ex + j % 2, ey + j / 2);
            double acc = em_.pint(j) * lam;
            for (int li = 0; li < 18; ++li)
              acc += em_.div(li, j) * (*U)[vdof(ex, ey, li)];
            divres[pj] += acc;
          }
      maxdiv = std::max(maxdiv, divres.cwiseAbs().maxCoeff());
    }
    d.max_divergence = maxdiv;
    return d;
  }

 private:
  int N;
  fea::ElementMatrices em_;
  int nvn_ = 0, nv_ = 0, np_ = 0, ntot_ = 0;
  Eigen::SparseMatrix<double> K_;
  std::vector<double> base_vals_;
  std::vector<std::int64_t> slots_;   // per pixel: 162 (vdof-pair) slots, see below
  double mass_flat_[81];
  Eigen::VectorXd f0_, f1_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> solver_;
  bool analyzed_ = false;

  int vdof(int ex, int ey, int li) const {
    int i = li / 2, a = li % 2;
    return 2 * vnode(2 * ex + i % 3, 2 * ey + i / 3) + a;
  }

  void build_pattern() {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(N) * N * 560);
    int lam = ntot_ - 1;
    for (int ey = 0; ey < N; ++ey)
      for (int ex = 0; ex < N; ++ex) {
        int vd[18];
        for (int li = 0; li < 18; ++li) vd[li] = vdof(ex, ey, li);
        for (int li = 0; li < 18; ++li)
          for (int lj = 0; lj < 18; ++lj)
            trips.emplace_back(vd[li], vd[lj], em_.visc(li, lj));
        for (int li = 0; li < 18; ++li)
          for (int j = 0; j < 4; ++j) {
            int gp = nv_ + pnode(ex + j % 2, ey + j / 2);
            trips.emplace_back(vd[li], gp, em_.div(li, j));
            trips.emplace_back(gp, vd[li], em_.div(li, j));
          }
        for (int j = 0; j < 4; ++j) {
          int gp = nv_ + pnode(ex + j % 2, ey + j / 2);
          trips.emplace_back(gp, lam, em_.pint(j));
          trips.emplace_back(lam, gp, em_.pint(j));
        }
      }
    K_.resize(ntot_, ntot_);
    K_.setFromTriplets(trips.begin(), trips.end());
    K_.makeCompressed();
    base_vals_.assign(K_.valuePtr(), K_.valuePtr() + K_.nonZeros());

    // Brinkman drag couples same-component velocity dofs through the scalar
    // shape mass: per pixel 2 components x 81 node pairs = 162 slots.
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) mass_flat_[i * 9 + j] = em_.mass(i, j);
    const int* outer = K_.outerIndexPtr();
    const int* inner = K_.innerIndexPtr();
    auto find_slot = [&](int r, int c) -> std::int64_t {
      const int* beg = inner + outer[c];
      const int* end = inner + outer[c + 1];
      const int* it = std::lower_bound(beg, end, r);
      require(it != end && *it == r, ErrorKind::Numeric, "homogenize: missing pattern slot");
      return it - inner;
    };
    slots_.assign(static_cast<std::size_t>(N) * N * 162, -1);
    for (int ey = 0; ey < N; ++ey)
      for (int ex = 0; ex < N; ++ex) {
        std::int64_t* sl = slots_.data() + (static_cast<std::size_t>(ey) * N + ex) * 162;
        for (int a = 0; a < 2; ++a)
          for (int i = 0; i < 9; ++i)
            for (int j = 0; j < 9; ++j)
              sl[a * 81 + i * 9 + j] = find_slot(vdof(ex, ey, 2 * i + a), vdof(ex, ey, 2 * j + a));
      }
  }

  void build_rhs() {
    f0_ = Eigen::VectorXd::Zero(ntot_);
    f1_ = Eigen::VectorXd::Zero(ntot_);
    for (int ey = 0; ey < N; ++ey)
      for (int ex = 0; ex < N; ++ex)
        for (int i = 0; i < 9; ++i) {
          int node = vnode(2 * ex + i % 3, 2 * ey + i / 3);
          f0_[2 * node] += em_.vint(i);
          f1_[2 * node + 1] += em_.vint(i);
        }
  }
};

CellSolver& cached_solver(int resolution) {
  thread_local std::map<int, std::unique_ptr<CellSolver>> cache;
  auto& slot = cache[resolution];
  if (!slot) slot = std::make_unique<CellSolver>(resolution);
  return *slot;
}

}  // namespace

CellFlowDetail homogenize_cell_detail(const geom::IndicatorGrid& grid,
                                      const HomogenizeOptions& opts) {
  require(grid.resolution >= 2, ErrorKind::Config, "homogenize: resolution must be at least 2");
  require(grid.solid.size() ==
              static_cast<std::size_t>(grid.resolution) * static_cast<std::size_t>(grid.resolution),
          ErrorKind::Config, "homogenize: grid size does not match resolution");
  bool any_solid = std::any_of(grid.solid.begin(), grid.solid.end(),
                               [](std::uint8_t v) { return v != 0; });
  if (!any_solid) {
    require(opts.allow_all_fluid, ErrorKind::Numeric,
            "homogenize: all-fluid cell has no finite permeability (enable the cap to proceed)");
    CellFlowDetail d;
    d.perm.c00 = d.perm.c11 = opts.fluid_cap;
    d.perm.fluid_capped = true;
    return d;
  }
  return cached_solver(grid.resolution).solve(grid, opts);
}

CellPermeability homogenize_cell(const geom::IndicatorGrid& grid, const HomogenizeOptions& opts) {
  return homogenize_cell_detail(grid, opts).perm;
}

EffectiveTensor rotate_tensor(double c00, double c11, double theta) {
  require(std::isfinite(c00) && std::isfinite(c11) && std::isfinite(theta), ErrorKind::Numeric,
          "rotate: non-finite input");
  double c = std::cos(theta), s = std::sin(theta);
  EffectiveTensor t;
  t.c00 = c00 * c * c + c11 * s * s;
  t.c01 = (c00 - c11) * s * c;
  t.c11 = c00 * s * s + c11 * c * c;
  return t;
}

EffectiveTensor invert_tensor(const EffectiveTensor& t) {
  double d = t.det();
  require(std::isfinite(d) && d > 0 && t.c00 > 0, ErrorKind::Numeric,
          "invert: tensor is not symmetric positive definite");
  return EffectiveTensor{t.c11 / d, -t.c01 / d, t.c00 / d};
}

}  // namespace mto::micro
