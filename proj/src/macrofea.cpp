#include "mto/macrofea.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mto::fea {

namespace {

// 1-D quadratic shapes on [-1,1] with nodes at -1, 0, 1.
double q2(int k, double x) {
  switch (k) {
    case 0: return 0.5 * x * (x - 1.0);
    case 1: return 1.0 - x * x;
    default: return 0.5 * x * (x + 1.0);
  }
}
double dq2(int k, double x) {
  switch (k) {
    case 0: return x - 0.5;
    case 1: return -2.0 * x;
    default: return x + 0.5;
  }
}
double q1(int k, double x) { return k == 0 ? 0.5 * (1.0 - x) : 0.5 * (1.0 + x); }

}  // namespace

ElementMatrices ElementMatrices::compute(double h) {
  require(h > 0 && std::isfinite(h), ErrorKind::Config, "element: size must be positive");
  ElementMatrices em;
  em.size = h;
  em.visc.setZero();
  em.mass.setZero();
  em.div.setZero();
  em.pint.setZero();
  em.vint.setZero();

  const double gp[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
  const double gw[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  const double jac = h / 2.0;       // dx/dxi
  const double inv_jac = 2.0 / h;

  for (int qx = 0; qx < 3; ++qx) {
    for (int qy = 0; qy < 3; ++qy) {
      double xi = gp[qx], eta = gp[qy];
      double w = gw[qx] * gw[qy] * jac * jac;

      double N[9], dNx[9], dNy[9];
      for (int i = 0; i < 9; ++i) {
        int ix = i % 3, iy = i / 3;
        N[i] = q2(ix, xi) * q2(iy, eta);
        dNx[i] = dq2(ix, xi) * inv_jac * q2(iy, eta);
        dNy[i] = q2(ix, xi) * dq2(iy, eta) * inv_jac;
      }
      double P[4];
      for (int j = 0; j < 4; ++j) P[j] = q1(j % 2, xi) * q1(j / 2, eta);

      for (int i = 0; i < 9; ++i) {
        em.vint(i) += w * N[i];
        for (int j = 0; j < 9; ++j) {
          em.mass(i, j) += w * N[i] * N[j];
          // 2*eps(u):eps(v) = grad u : grad v + grad u : (grad v)^T
          double gi[2] = {dNx[i], dNy[i]};
          double gj[2] = {dNx[j], dNy[j]};
          double gdot = gi[0] * gj[0] + gi[1] * gj[1];
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              em.visc(2 * i + a, 2 * j + b) += w * ((a == b ? gdot : 0.0) + gi[b] * gj[a]);
        }
        for (int j = 0; j < 4; ++j) {
          em.div(2 * i + 0, j) += -w * dNx[i] * P[j];
          em.div(2 * i + 1, j) += -w * dNy[i] * P[j];
        }
      }
      for (int j = 0; j < 4; ++j) em.pint(j) += w * P[j];
    }
  }
  return em;
}

void Mesh::validate() const {
  require(nelx >= 1 && nely >= 1, ErrorKind::Config, "mesh: need at least one element per axis");
  require(h > 0 && std::isfinite(h), ErrorKind::Config, "mesh: element size must be positive");
}

std::array<int, 9> Mesh::elem_vnodes(int ex, int ey) const {
  std::array<int, 9> out{};
  for (int ly = 0; ly < 3; ++ly)
    for (int lx = 0; lx < 3; ++lx)
      out[static_cast<std::size_t>(lx + 3 * ly)] = (2 * ey + ly) * vnx() + (2 * ex + lx);
  return out;
}

std::array<int, 4> Mesh::elem_pnodes(int ex, int ey) const {
  std::array<int, 4> out{};
  for (int ly = 0; ly < 2; ++ly)
    for (int lx = 0; lx < 2; ++lx)
      out[static_cast<std::size_t>(lx + 2 * ly)] = (ey + ly) * (nelx + 1) + (ex + lx);
  return out;
}

Eigen::Vector2d Mesh::vnode_pos(int node) const {
  int gx = node % vnx(), gy = node / vnx();
  return {gx * h / 2.0, gy * h / 2.0};
}

Eigen::Vector2d Mesh::elem_center(int e) const {
  int ex = e % nelx, ey = e / nelx;
  return {(ex + 0.5) * h, (ey + 0.5) * h};
}

double segment_flux(const Mesh& mesh, const std::vector<BoundarySegment>& segs) {
  double flux = 0;
  for (const auto& s : segs) {
    Eigen::Vector2d n;
    switch (s.edge) {
      case BoundarySegment::Edge::Left: n = {-1, 0}; break;
      case BoundarySegment::Edge::Right: n = {1, 0}; break;
      case BoundarySegment::Edge::Bottom: n = {0, -1}; break;
      case BoundarySegment::Edge::Top: n = {0, 1}; break;
    }
    (void)mesh;
    flux += s.peak * (2.0 / 3.0) * (s.hi - s.lo) * s.dir.dot(n);
  }
  return flux;
}

MacroProblem::MacroProblem(const Mesh& mesh, std::vector<BoundarySegment> segments, double mu)
    : mesh_(mesh), segs_(std::move(segments)), mu_(mu) {
  mesh_.validate();
  require(mu_ > 0 && std::isfinite(mu_), ErrorKind::Config, "problem: viscosity must be positive");
  for (const auto& s : segs_) {
    require(s.hi > s.lo, ErrorKind::Config, "boundary segment: empty span");
    bool vertical = s.edge == BoundarySegment::Edge::Left || s.edge == BoundarySegment::Edge::Right;
    double extent = vertical ? mesh_.height() : mesh_.width();
    require(s.lo >= -1e-12 && s.hi <= extent + 1e-12, ErrorKind::Config,
            "boundary segment: span exceeds the domain edge");
    require(std::isfinite(s.peak) && s.dir.allFinite(), ErrorKind::Config,
            "boundary segment: non-finite data");
    require(std::abs(s.dir.norm() - 1.0) < 1e-9 || s.peak == 0.0, ErrorKind::Config,
            "boundary segment: direction must be a unit vector");
  }
  double flux = segment_flux(mesh_, segs_);
  require(std::abs(flux) < 1e-9, ErrorKind::Config,
          "boundary segments: net flux " + format_double(flux) + " violates incompressibility");
  em_ = ElementMatrices::compute(mesh_.h);
  build_prescription();
  build_pattern();
}

void MacroProblem::build_prescription() {
  int nv = mesh_.n_vdofs();
  is_presc_.assign(static_cast<std::size_t>(nv), 0);
  presc_val_ = Eigen::VectorXd::Zero(nv);

  double W = mesh_.width(), H = mesh_.height();
  const double tol = 1e-9 * std::max(W, H);
  for (int node = 0; node < mesh_.n_vnodes(); ++node) {
    Eigen::Vector2d p = mesh_.vnode_pos(node);
    bool on_l = p.x() < tol, on_r = p.x() > W - tol;
    bool on_b = p.y() < tol, on_t = p.y() > H - tol;
    if (!(on_l || on_r || on_b || on_t)) continue;
    Eigen::Vector2d val(0, 0);  // wall by default
    for (const auto& s : segs_) {
      bool applies = false;
      double t = 0;
      switch (s.edge) {
        case BoundarySegment::Edge::Left: applies = on_l; t = p.y(); break;
        case BoundarySegment::Edge::Right: applies = on_r; t = p.y(); break;
        case BoundarySegment::Edge::Bottom: applies = on_b; t = p.x(); break;
        case BoundarySegment::Edge::Top: applies = on_t; t = p.x(); break;
      }
      if (!applies || t < s.lo - tol || t > s.hi + tol) continue;
      double span = s.hi - s.lo;
      double prof = 4.0 * (t - s.lo) * (s.hi - t) / (span * span);
      val = s.peak * std::max(prof, 0.0) * s.dir;  // later segments override
    }
    is_presc_[static_cast<std::size_t>(2 * node)] = 1;
    is_presc_[static_cast<std::size_t>(2 * node + 1)] = 1;
    presc_val_[2 * node] = val.x();
    presc_val_[2 * node + 1] = val.y();
  }
}

void MacroProblem::build_pattern() {
  int nv = mesh_.n_vdofs();
  int ntotal = mesh_.n_total();
  red_index_.assign(static_cast<std::size_t>(ntotal), -1);
  full_index_.clear();
  for (int d = 0; d < ntotal; ++d) {
    if (d < nv && is_presc_[static_cast<std::size_t>(d)]) continue;
    red_index_[static_cast<std::size_t>(d)] = static_cast<int>(full_index_.size());
    full_index_.push_back(d);
  }
  n_red_ = static_cast<int>(full_index_.size());

  base_rhs_ = Eigen::VectorXd::Zero(n_red_);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(mesh_.n_elems()) * 700);
  int lam = ntotal - 1;
  int lam_red = red_index_[static_cast<std::size_t>(lam)];

  for (int ey = 0; ey < mesh_.nely; ++ey) {
    for (int ex = 0; ex < mesh_.nelx; ++ex) {
      auto vn = mesh_.elem_vnodes(ex, ey);
      auto pn = mesh_.elem_pnodes(ex, ey);
      int vd[18];
      for (int i = 0; i < 9; ++i) {
        vd[2 * i] = 2 * vn[static_cast<std::size_t>(i)];
        vd[2 * i + 1] = 2 * vn[static_cast<std::size_t>(i)] + 1;
      }
      // viscous block (and Brinkman slots at the same positions plus all
      // cross-component pairs; placeholder zeros keep them in the pattern)
      for (int li = 0; li < 18; ++li) {
        int gi = vd[li];
        int ri = red_index_[static_cast<std::size_t>(gi)];
        for (int lj = 0; lj < 18; ++lj) {
          int gj = vd[lj];
          double v = mu_ * em_.visc(li, lj);
          if (ri < 0) continue;
          if (is_presc_[static_cast<std::size_t>(gj)]) {
            base_rhs_[ri] -= v * presc_val_[gj];
          } else {
            trips.emplace_back(ri, red_index_[static_cast<std::size_t>(gj)], v);
          }
        }
      }
      // velocity-pressure coupling, both blocks
      for (int li = 0; li < 18; ++li) {
        int gi = vd[li];
        int ri = red_index_[static_cast<std::size_t>(gi)];
        for (int j = 0; j < 4; ++j) {
          int gp = nv + pn[static_cast<std::size_t>(j)];
          int rp = red_index_[static_cast<std::size_t>(gp)];
          double v = em_.div(li, j);
          if (ri >= 0) trips.emplace_back(ri, rp, v);
          if (ri >= 0)
            trips.emplace_back(rp, ri, v);
          else
            base_rhs_[rp] -= v * presc_val_[gi];
        }
      }
      // pressure-mean multiplier coupling
      for (int j = 0; j < 4; ++j) {
        int rp = red_index_[static_cast<std::size_t>(nv + pn[static_cast<std::size_t>(j)])];
        trips.emplace_back(rp, lam_red, em_.pint(j));
        trips.emplace_back(lam_red, rp, em_.pint(j));
      }
      // Brinkman slots: zero placeholders so the pattern is coefficient-free
      for (int li = 0; li < 18; ++li) {
        int ri = red_index_[static_cast<std::size_t>(vd[li])];
        if (ri < 0) continue;
        for (int lj = 0; lj < 18; ++lj) {
          int rj = red_index_[static_cast<std::size_t>(vd[lj])];
          if (rj >= 0) trips.emplace_back(ri, rj, 0.0);
        }
      }
    }
  }

  K_.resize(n_red_, n_red_);
  K_.setFromTriplets(trips.begin(), trips.end());
  K_.makeCompressed();
  base_vals_.assign(K_.valuePtr(), K_.valuePtr() + K_.nonZeros());

  // Map every element Brinkman entry to its compressed slot, or record the
  // Dirichlet-lift term it contributes instead.
  slots_.assign(static_cast<std::size_t>(mesh_.n_elems()) * 324, -1);
  presc_terms_.clear();
  const int* outer = K_.outerIndexPtr();
  const int* inner = K_.innerIndexPtr();
  auto find_slot = [&](int r, int c) -> std::int64_t {
    const int* beg = inner + outer[c];
    const int* end = inner + outer[c + 1];
    const int* it = std::lower_bound(beg, end, r);
    require(it != end && *it == r, ErrorKind::Numeric, "assembly: missing slot in pattern");
    return it - inner;
  };
  for (int ey = 0; ey < mesh_.nely; ++ey) {
    for (int ex = 0; ex < mesh_.nelx; ++ex) {
      int e = mesh_.elem_id(ex, ey);
      auto vn = mesh_.elem_vnodes(ex, ey);
      for (int li = 0; li < 18; ++li) {
        int gi = 2 * vn[static_cast<std::size_t>(li / 2)] + li % 2;
        int ri = red_index_[static_cast<std::size_t>(gi)];
        if (ri < 0) continue;
        for (int lj = 0; lj < 18; ++lj) {
          int gj = 2 * vn[static_cast<std::size_t>(lj / 2)] + lj % 2;
          int rj = red_index_[static_cast<std::size_t>(gj)];
          std::size_t k = (static_cast<std::size_t>(e) * 324) + static_cast<std::size_t>(li * 18 + lj);
          if (rj >= 0) {
            slots_[k] = find_slot(ri, rj);
          } else if (presc_val_[gj] != 0.0) {
            int dcomp = (li % 2 == 0) ? (lj % 2 == 0 ? 0 : 1) : (lj % 2 == 0 ? 1 : 2);
            presc_terms_.push_back(
                {e, ri, dcomp, em_.mass(li / 2, lj / 2) * presc_val_[gj]});
          }
        }
      }
    }
  }
  solver_ = std::make_shared<Solver>();
}

void MacroProblem::check_coeffs(const Eigen::VectorXd& c00, const Eigen::VectorXd& c01,
                                const Eigen::VectorXd& c11) const {
  int n = mesh_.n_elems();
  require(c00.size() == n && c01.size() == n && c11.size() == n, ErrorKind::Config,
          "solve: coefficient vectors must have one entry per element");
  for (int e = 0; e < n; ++e) {
    bool ok = std::isfinite(c00[e]) && std::isfinite(c01[e]) && std::isfinite(c11[e]) &&
              c00[e] > 0 && c11[e] > 0 && c00[e] * c11[e] - c01[e] * c01[e] > 0;
    require(ok, ErrorKind::Numeric,
            "solve: inverse permeability at element " + std::to_string(e) +
                " is not symmetric positive definite");
  }
}

void MacroProblem::fill_values(const Eigen::VectorXd& c00, const Eigen::VectorXd& c01,
                               const Eigen::VectorXd& c11, Eigen::VectorXd& rhs) {
  std::copy(base_vals_.begin(), base_vals_.end(), K_.valuePtr());
  rhs = base_rhs_;
  double* vals = K_.valuePtr();
  for (int e = 0; e < mesh_.n_elems(); ++e) {
    double D[3] = {c00[e], c01[e], c11[e]};
    const std::int64_t* sl = slots_.data() + static_cast<std::size_t>(e) * 324;
    for (int li = 0; li < 18; ++li) {
      int i = li / 2, a = li % 2;
      for (int lj = 0; lj < 18; ++lj) {
        std::int64_t s = sl[li * 18 + lj];
        if (s < 0) continue;
        int b = lj % 2;
        int dcomp = (a == 0) ? (b == 0 ? 0 : 1) : (b == 0 ? 1 : 2);
        vals[s] += D[dcomp] * em_.mass(i, lj / 2);
      }
    }
  }
  for (const auto& t : presc_terms_) {
    double d = t.dcomp == 0 ? c00[t.e] : (t.dcomp == 1 ? c01[t.e] : c11[t.e]);
    rhs[t.row] -= d * t.coeff;
  }
}

FlowSolution MacroProblem::solve(const Eigen::VectorXd& c00, const Eigen::VectorXd& c01,
                                 const Eigen::VectorXd& c11) {
  check_coeffs(c00, c01, c11);
  Eigen::VectorXd rhs;
  fill_values(c00, c01, c11, rhs);
  if (!analyzed_) {
    solver_->analyzePattern(K_);
    analyzed_ = true;
  }
  solver_->factorize(K_);
  require(solver_->info() == Eigen::Success, ErrorKind::Numeric,
          "solve: factorization failed (singular system)");
  Eigen::VectorXd x = solver_->solve(rhs);
  require(x.allFinite(), ErrorKind::Numeric, "solve: non-finite solution");
  double rel = (K_ * x - rhs).norm() / (rhs.norm() + 1e-30);
  require(rel < 1e-8, ErrorKind::Numeric,
          "solve: residual " + format_double(rel) + " exceeds tolerance");

  FlowSolution sol;
  sol.S = Eigen::VectorXd::Zero(mesh_.n_total());
  for (int d = 0; d < mesh_.n_vdofs(); ++d)
    if (is_presc_[static_cast<std::size_t>(d)]) sol.S[d] = presc_val_[d];
  for (int r = 0; r < n_red_; ++r) sol.S[full_index_[static_cast<std::size_t>(r)]] = x[r];
  sol.rel_residual = rel;
  sol.lambda = sol.S[mesh_.n_total() - 1];

  // continuity residual against the full (unreduced) divergence operator
  Eigen::VectorXd divres = Eigen::VectorXd::Zero(mesh_.n_pnodes());
  for (int ey = 0; ey < mesh_.nely; ++ey)
    for (int ex = 0; ex < mesh_.nelx; ++ex) {
      auto vn = mesh_.elem_vnodes(ex, ey);
      auto pn = mesh_.elem_pnodes(ex, ey);
      for (int j = 0; j < 4; ++j) {
        double acc = em_.pint(j) * sol.lambda;
        for (int li = 0; li < 18; ++li)
          acc += em_.div(li, j) * sol.S[2 * vn[static_cast<std::size_t>(li / 2)] + li % 2];
        divres[pn[static_cast<std::size_t>(j)]] += acc;
      }
    }
  sol.max_divergence = divres.cwiseAbs().maxCoeff();
  return sol;
}

namespace {
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Vec18 = Eigen::Matrix<double, 18, 1>;

void gather_velocity(const Mesh& mesh, const Eigen::VectorXd& S, int ex, int ey, Vec18& u,
                     Vec9& ux, Vec9& uy) {
  auto vn = mesh.elem_vnodes(ex, ey);
  for (int i = 0; i < 9; ++i) {
    double a = S[2 * vn[static_cast<std::size_t>(i)]];
    double b = S[2 * vn[static_cast<std::size_t>(i)] + 1];
    u[2 * i] = a;
    u[2 * i + 1] = b;
    ux[i] = a;
    uy[i] = b;
  }
}
}  // namespace

double MacroProblem::dissipated_power(const FlowSolution& sol, const Eigen::VectorXd& c00,
                                      const Eigen::VectorXd& c01,
                                      const Eigen::VectorXd& c11) const {
  check_coeffs(c00, c01, c11);
  double J = 0;
  Vec18 u;
  Vec9 ux, uy;
  for (int ey = 0; ey < mesh_.nely; ++ey)
    for (int ex = 0; ex < mesh_.nelx; ++ex) {
      int e = mesh_.elem_id(ex, ey);
      gather_velocity(mesh_, sol.S, ex, ey, u, ux, uy);
      Vec9 mx = em_.mass * ux, my = em_.mass * uy;
      J += 0.5 * (mu_ * u.dot(em_.visc * u) + c00[e] * ux.dot(mx) +
                  2.0 * c01[e] * ux.dot(my) + c11[e] * uy.dot(my));
    }
  require(std::isfinite(J), ErrorKind::Numeric, "dissipated power: non-finite value");
  return J;
}

ad::Var MacroProblem::solve_on_tape(ad::Tape& tape, ad::Var v00, ad::Var v01, ad::Var v11) {
  int n = mesh_.n_elems();
  auto col = [&](ad::Var v) -> Eigen::VectorXd {
    const auto& m = tape.val(v);
    require(m.rows() == n && m.cols() == 1, ErrorKind::Config,
            "solve: coefficient variable must be N x 1");
    return m.col(0);
  };
  Eigen::VectorXd c00 = col(v00), c01 = col(v01), c11 = col(v11);
  FlowSolution sol = solve(c00, c01, c11);
  auto solver = solver_;       // keeps this epoch's factorization alive for backward
  Eigen::VectorXd S = sol.S;   // forward state, needed for coefficient sensitivities
  return tape.op(sol.S, {v00, v01, v11},
                 [this, solver, S, v00, v01, v11, n](ad::Tape& t, const ad::Matrix& g) {
                   Eigen::VectorXd gred(n_red_);
                   for (int r = 0; r < n_red_; ++r)
                     gred[r] = g(full_index_[static_cast<std::size_t>(r)], 0);
                   Eigen::VectorXd yred = solver->solve(gred);
                   require(yred.allFinite(), ErrorKind::Numeric,
                           "adjoint solve: non-finite solution");
                   Eigen::VectorXd yfull = Eigen::VectorXd::Zero(mesh_.n_total());
                   for (int r = 0; r < n_red_; ++r)
                     yfull[full_index_[static_cast<std::size_t>(r)]] = yred[r];
                   ad::Matrix g00(n, 1), g01(n, 1), g11(n, 1);
                   Vec18 u, y;
                   Vec9 ux, uy, yx, yy;
                   for (int ey = 0; ey < mesh_.nely; ++ey)
                     for (int ex = 0; ex < mesh_.nelx; ++ex) {
                       int e = mesh_.elem_id(ex, ey);
                       gather_velocity(mesh_, S, ex, ey, u, ux, uy);
                       gather_velocity(mesh_, yfull, ex, ey, y, yx, yy);
                       Vec9 mx = em_.mass * ux, my = em_.mass * uy;
                       g00(e, 0) = -yx.dot(mx);
                       g01(e, 0) = -(yx.dot(my) + yy.dot(mx));
                       g11(e, 0) = -yy.dot(my);
                     }
                   t.accumulate(v00, g00);
                   t.accumulate(v01, g01);
                   t.accumulate(v11, g11);
                 });
}

ad::Var MacroProblem::dissipated_power_on_tape(ad::Tape& tape, ad::Var S, ad::Var v00,
                                               ad::Var v01, ad::Var v11) {
  int n = mesh_.n_elems();
  require(tape.val(S).rows() == mesh_.n_total() && tape.val(S).cols() == 1, ErrorKind::Config,
          "dissipated power: state variable has wrong shape");
  FlowSolution tmp;
  tmp.S = tape.val(S).col(0);
  Eigen::VectorXd c00 = tape.val(v00).col(0), c01 = tape.val(v01).col(0),
                  c11 = tape.val(v11).col(0);
  double J = dissipated_power(tmp, c00, c01, c11);
  ad::Matrix value(1, 1);
  value(0, 0) = J;
  return tape.op(value, {S, v00, v01, v11},
                 [this, S, v00, v01, v11, n](ad::Tape& t, const ad::Matrix& g) {
                   double gJ = g(0, 0);
                   Eigen::VectorXd Sv = t.val(S).col(0);
                   Eigen::VectorXd c00 = t.val(v00).col(0), c01 = t.val(v01).col(0),
                                   c11 = t.val(v11).col(0);
                   ad::Matrix dS = ad::Matrix::Zero(mesh_.n_total(), 1);
                   ad::Matrix g00(n, 1), g01(n, 1), g11(n, 1);
                   Vec18 u;
                   Vec9 ux, uy;
                   for (int ey = 0; ey < mesh_.nely; ++ey)
                     for (int ex = 0; ex < mesh_.nelx; ++ex) {
                       int e = mesh_.elem_id(ex, ey);
                       gather_velocity(mesh_, Sv, ex, ey, u, ux, uy);
                       Vec9 mx = em_.mass * ux, my = em_.mass * uy;
                       g00(e, 0) = gJ * 0.5 * ux.dot(mx);
                       g01(e, 0) = gJ * ux.dot(my);
                       g11(e, 0) = gJ * 0.5 * uy.dot(my);
                       Vec18 fe = mu_ * (em_.visc * u);
                       for (int i = 0; i < 9; ++i) {
                         fe[2 * i] += c00[e] * mx[i] + c01[e] * my[i];
                         fe[2 * i + 1] += c01[e] * mx[i] + c11[e] * my[i];
                       }
                       auto vn = mesh_.elem_vnodes(ex, ey);
                       for (int i = 0; i < 9; ++i) {
                         dS(2 * vn[static_cast<std::size_t>(i)], 0) += gJ * fe[2 * i];
                         dS(2 * vn[static_cast<std::size_t>(i)] + 1, 0) += gJ * fe[2 * i + 1];
                       }
                     }
                   t.accumulate(S, dS);
                   t.accumulate(v00, g00);
                   t.accumulate(v01, g01);
                   t.accumulate(v11, g11);
                 });
}

Eigen::MatrixXd MacroProblem::dense_reduced_matrix(const Eigen::VectorXd& c00,
                                                   const Eigen::VectorXd& c01,
                                                   const Eigen::VectorXd& c11) {
  check_coeffs(c00, c01, c11);
  Eigen::VectorXd rhs;
  fill_values(c00, c01, c11, rhs);
  return Eigen::MatrixXd(K_);
}

Eigen::VectorXd MacroProblem::dense_reduced_rhs(const Eigen::VectorXd& c00,
                                                const Eigen::VectorXd& c01,
                                                const Eigen::VectorXd& c11) {
  check_coeffs(c00, c01, c11);
  Eigen::VectorXd rhs;
  fill_values(c00, c01, c11, rhs);
  return rhs;
}

Eigen::MatrixXd MacroProblem::elem_centers_normalized() const {
  Eigen::MatrixXd out(mesh_.n_elems(), 2);
  for (int e = 0; e < mesh_.n_elems(); ++e) {
    Eigen::Vector2d c = mesh_.elem_center(e);
    out(e, 0) = c.x() / mesh_.width();
    out(e, 1) = c.y() / mesh_.height();
  }
  return out;
}

void export_flow_vtk(const std::string& path, const Mesh& mesh, const FlowSolution& sol,
                     const std::map<std::string, Eigen::VectorXd>& cell_fields) {
  std::ofstream f(path);
  if (!f) fail_io("vtk: cannot open '" + path + "' for writing");
  int npx = mesh.nelx + 1, npy = mesh.nely + 1;
  f << "# vtk DataFile Version 3.0\nflow field\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  f << "POINTS " << npx * npy << " double\n";
  for (int iy = 0; iy < npy; ++iy)
    for (int ix = 0; ix < npx; ++ix)
      f << ix * mesh.h << ' ' << iy * mesh.h << " 0\n";
  f << "CELLS " << mesh.n_elems() << ' ' << 5 * mesh.n_elems() << '\n';
  for (int ey = 0; ey < mesh.nely; ++ey)
    for (int ex = 0; ex < mesh.nelx; ++ex)
      f << "4 " << ey * npx + ex << ' ' << ey * npx + ex + 1 << ' ' << (ey + 1) * npx + ex + 1
        << ' ' << (ey + 1) * npx + ex << '\n';
  f << "CELL_TYPES " << mesh.n_elems() << '\n';
  for (int e = 0; e < mesh.n_elems(); ++e) f << "9\n";

  f << "POINT_DATA " << npx * npy << '\n';
  f << "VECTORS velocity double\n";
  for (int iy = 0; iy < npy; ++iy)
    for (int ix = 0; ix < npx; ++ix) {
      int q2node = (2 * iy) * mesh.vnx() + 2 * ix;
      f << sol.S[2 * q2node] << ' ' << sol.S[2 * q2node + 1] << " 0\n";
    }
  f << "SCALARS pressure double 1\nLOOKUP_TABLE default\n";
  for (int pn = 0; pn < mesh.n_pnodes(); ++pn) f << sol.S[mesh.n_vdofs() + pn] << '\n';

  if (!cell_fields.empty()) {
    f << "CELL_DATA " << mesh.n_elems() << '\n';
    for (const auto& [name, vals] : cell_fields) {
      require(vals.size() == mesh.n_elems(), ErrorKind::Config,
              "vtk: cell field '" + name + "' has wrong length");
      f << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (int e = 0; e < mesh.n_elems(); ++e) f << vals[e] << '\n';
    }
  }
  if (!f) fail_io("vtk: write to '" + path + "' failed");
}

}  // namespace mto::fea
