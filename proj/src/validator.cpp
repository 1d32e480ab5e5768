#include "mto/validator.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "mto/geometry.hpp"
#include "mto/microfluid.hpp"

namespace mto::val {

namespace {
struct ElementTruth {
  double c00 = 0, c11 = 0, gamma = 0, vf = 0;
  bool projected = false;
  bool degenerate = false;
};

ElementTruth measure_element(const geom::SuperShapeParams& raw, int resolution,
                             int boundary_points, const micro::HomogenizeOptions& homog) {
  ElementTruth t;
  geom::SuperShapeParams p = raw;
  if (!geom::kSamplingBox.contains(p)) {
    p = geom::kSamplingBox.project(p);
    t.projected = true;
  }
  try {
    geom::BoundaryPolygon poly = geom::boundary_in_cell(p, boundary_points);
    geom::ShapeMeasures ms = geom::measure(poly);
    // a decoded shape thinner than the grid is (almost) free flow, not an error
    micro::HomogenizeOptions h = homog;
    h.allow_all_fluid = true;
    micro::CellPermeability perm = micro::homogenize_cell(geom::rasterize(poly, resolution), h);
    t.c00 = perm.c00;
    t.c11 = perm.c11;
    t.gamma = ms.wetted_perimeter;
    t.vf = 1.0 - ms.solid_area;
  } catch (const geom::DegenerateShape&) {
    // unusable geometry even inside the box: treat as a solid plug
    t.degenerate = true;
    t.c00 = t.c11 = 1.0 / homog.alpha_solid;
    t.gamma = 0;
    t.vf = 0;
  }
  return t;
}

using MemoKey = std::array<double, 6>;

std::string memo_header(const ValidationOptions& opts) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "# truth memo res=%d bp=%d alpha=%.17g cap=%.17g",
                opts.resolution, opts.boundary_points, opts.homog.alpha_solid,
                opts.homog.fluid_cap);
  return buf;
}

std::map<MemoKey, ElementTruth> load_memo(const std::string& path, const std::string& header) {
  std::map<MemoKey, ElementTruth> known;
  std::ifstream in(path);
  if (!in) return known;
  std::string line;
  if (!std::getline(in, line) || line != header) return {};  // settings changed: start over
  while (std::getline(in, line)) {
    MemoKey k;
    ElementTruth t;
    int proj = 0, degen = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%d,%d", &k[0], &k[1],
                    &k[2], &k[3], &k[4], &k[5], &t.c00, &t.c11, &t.gamma, &t.vf, &proj,
                    &degen) != 12)
      continue;  // torn tail line from an interrupted append
    t.projected = proj != 0;
    t.degenerate = degen != 0;
    known[k] = t;
  }
  return known;
}

void append_memo(std::ofstream& out, const MemoKey& k, const ElementTruth& t) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d", k[0], k[1],
                k[2], k[3], k[4], k[5], t.c00, t.c11, t.gamma, t.vf, t.projected ? 1 : 0,
                t.degenerate ? 1 : 0);
  out << buf << '\n' << std::flush;
}
}  // namespace

ValidationReport validate(const opt::Problem& prob, const opt::DesignField& design,
                          const ValidationOptions& opts,
                          const std::function<void(int done, int total)>& progress) {
  int n = prob.mesh.n_elems();
  require(design.psi.rows() == n && design.psi.cols() == 10, ErrorKind::Config,
          "validate: design does not match the problem mesh");

  ValidationReport rep;
  rep.c00_true.resize(n);
  rep.c11_true.resize(n);
  rep.gamma_true.resize(n);
  rep.vf_true.resize(n);

  // identical parameter rows (e.g. orientation-only designs) are measured once
  std::vector<ElementTruth> truth(static_cast<std::size_t>(n));
  std::map<std::array<double, 6>, int> unique;
  std::vector<int> rep_of(static_cast<std::size_t>(n));
  std::vector<int> unique_elems;
  for (int e = 0; e < n; ++e) {
    std::array<double, 6> key{design.psi(e, 0), design.psi(e, 1), design.psi(e, 2),
                              design.psi(e, 3), design.psi(e, 4), design.psi(e, 5)};
    auto [it, inserted] = unique.try_emplace(key, static_cast<int>(unique_elems.size()));
    if (inserted) unique_elems.push_back(e);
    rep_of[static_cast<std::size_t>(e)] = it->second;
  }

  std::vector<ElementTruth> unique_truth(unique_elems.size());

  std::map<MemoKey, ElementTruth> memo;
  std::ofstream memo_out;
  std::mutex memo_mutex;
  if (!opts.memo.empty()) {
    std::string header = memo_header(opts);
    memo = load_memo(opts.memo, header);
    memo_out.open(opts.memo, memo.empty() ? std::ios::trunc : std::ios::app);
    if (memo_out && memo.empty()) memo_out << header << '\n' << std::flush;
  }

  std::atomic<int> done{0};
  std::mutex progress_mutex;
  parallel_for(unique_elems.size(), opts.workers, [&](std::size_t u) {
    int e = unique_elems[u];
    MemoKey key{design.psi(e, 0), design.psi(e, 1), design.psi(e, 2),
                design.psi(e, 3), design.psi(e, 4), design.psi(e, 5)};
    bool hit = false;
    if (!memo.empty()) {
      std::lock_guard<std::mutex> lock(memo_mutex);
      auto it = memo.find(key);
      if (it != memo.end()) {
        unique_truth[u] = it->second;
        hit = true;
      }
    }
    if (!hit) {
      geom::SuperShapeParams p{key[0], key[1], key[2], key[3], key[4], key[5]};
      unique_truth[u] = measure_element(p, opts.resolution, opts.boundary_points, opts.homog);
      if (memo_out) {
        std::lock_guard<std::mutex> lock(memo_mutex);
        append_memo(memo_out, key, unique_truth[u]);
      }
    }
    int d = done.fetch_add(1, std::memory_order_relaxed) + 1;
    if (progress) {
      std::lock_guard<std::mutex> lock(progress_mutex);
      progress(d, static_cast<int>(unique_elems.size()));
    }
  });
  for (int e = 0; e < n; ++e)
    truth[static_cast<std::size_t>(e)] = unique_truth[static_cast<std::size_t>(rep_of[static_cast<std::size_t>(e)])];

  Eigen::VectorXd i00(n), i01(n), i11(n);
  double log_err_sum = 0;
  for (int e = 0; e < n; ++e) {
    const ElementTruth& t = truth[static_cast<std::size_t>(e)];
    rep.projected_elements += t.projected;
    rep.degenerate_elements += t.degenerate;
    rep.c00_true[e] = t.c00;
    rep.c11_true[e] = t.c11;
    rep.gamma_true[e] = t.gamma;
    rep.vf_true[e] = t.vf;
    double le0 = std::abs(std::log10(design.psi(e, 6)) - std::log10(t.c00));
    double le1 = std::abs(std::log10(design.psi(e, 7)) - std::log10(t.c11));
    log_err_sum += le0 + le1;
    rep.max_perm_log_err = std::max({rep.max_perm_log_err, le0, le1});

    micro::EffectiveTensor ct = micro::rotate_tensor(t.c00, t.c11, design.theta[e]);
    micro::EffectiveTensor ci = micro::invert_tensor(ct);
    i00[e] = ci.c00;
    i01[e] = ci.c01;
    i11[e] = ci.c11;
  }
  rep.mean_perm_log_err = log_err_sum / (2.0 * n);

  fea::MacroProblem fe(prob.mesh, prob.segments, prob.mu);
  rep.sol_true = fe.solve(i00, i01, i11);
  rep.J_true = fe.dissipated_power(rep.sol_true, i00, i01, i11);
  rep.contact_true = prob.mesh.h * rep.gamma_true.sum();

  rep.J_pred = design.J_final;
  rep.contact_pred = design.contact_total;
  rep.J_rel_err = std::abs(rep.J_pred - rep.J_true) / std::abs(rep.J_true);
  rep.contact_rel_err = rep.contact_true == 0
                            ? std::abs(rep.contact_pred)
                            : std::abs(rep.contact_pred - rep.contact_true) / rep.contact_true;
  return rep;
}

nlohmann::json report_to_json(const ValidationReport& r) {
  nlohmann::json j;
  j["kind"] = "validation_report";
  j["J_pred"] = r.J_pred;
  j["J_true"] = r.J_true;
  j["J_rel_err"] = r.J_rel_err;
  j["contact_pred"] = r.contact_pred;
  j["contact_true"] = r.contact_true;
  j["contact_rel_err"] = r.contact_rel_err;
  j["projected_elements"] = r.projected_elements;
  j["degenerate_elements"] = r.degenerate_elements;
  j["mean_perm_log_err"] = r.mean_perm_log_err;
  j["max_perm_log_err"] = r.max_perm_log_err;
  return j;
}

void save_report(const ValidationReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) fail_io("report: cannot open '" + path + "' for writing");
  f << report_to_json(r).dump(2) << '\n';
  if (!f) fail_io("report: write to '" + path + "' failed");
}

void export_design_svg(const opt::DesignField& design, const std::string& path,
                       int points_per_shape) {
  require(design.nelx >= 1 && design.nely >= 1 && design.h > 0, ErrorKind::Config,
          "svg export: empty design");
  std::vector<geom::BoundaryPolygon> shapes;
  shapes.reserve(static_cast<std::size_t>(design.nelx) * design.nely);
  for (int e = 0; e < design.nelx * design.nely; ++e) {
    geom::SuperShapeParams p{design.psi(e, 0), design.psi(e, 1), design.psi(e, 2),
                             design.psi(e, 3), design.psi(e, 4), design.psi(e, 5)};
    geom::BoundaryPolygon poly;
    try {
      poly = geom::boundary_in_cell(p, points_per_shape);
    } catch (const geom::DegenerateShape&) {
      continue;  // drawn as empty cell
    }
    double ex = (e % design.nelx) * design.h;
    double ey = (e / design.nelx) * design.h;
    double ct = std::cos(design.theta[e]), st = std::sin(design.theta[e]);
    for (auto& pt : poly.pts) {
      double x = pt.x() - 0.5, y = pt.y() - 0.5;
      pt.x() = ct * x - st * y + 0.5;
      pt.y() = st * x + ct * y + 0.5;
    }
    poly = geom::clip_to_box(poly, Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1));
    if (poly.pts.size() < 3) continue;
    for (auto& pt : poly.pts) {
      pt.x() = ex + design.h * pt.x();
      pt.y() = ey + design.h * pt.y();
    }
    shapes.push_back(std::move(poly));
  }
  geom::write_svg(path, shapes, design.nelx * design.h, design.nely * design.h);
}

void export_design_vtk(const opt::Problem& prob, const opt::DesignField& design,
                       const std::string& path) {
  opt::DesignEval ev = opt::evaluate_design(prob, design);
  std::map<std::string, Eigen::VectorXd> fields;
  fields["z1"] = design.z.col(0);
  fields["z2"] = design.z.col(1);
  fields["theta"] = design.theta;
  fields["c00"] = design.psi.col(6);
  fields["c11"] = design.psi.col(7);
  fields["gamma"] = design.psi.col(8);
  fields["vf"] = design.psi.col(9);
  fea::export_flow_vtk(path, prob.mesh, ev.sol, fields);
}

}  // namespace mto::val
