#include "mto/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mto::opt {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

nn::MlpSpec net_spec(const DesignNetSpec& s) {
  nn::MlpSpec spec;
  spec.widths.push_back(2 * s.n_freq);
  for (int hdim : s.hidden) spec.widths.push_back(hdim);
  spec.widths.push_back(3);  // two latent coordinates + one angle, squashed later
  spec.leaky_slope = s.leaky;
  spec.output = nn::OutputKind::Linear;
  return spec;
}

struct PlainHeads {
  Eigen::MatrixXd z;      // N x 2 in (-3,3)
  Eigen::VectorXd theta;  // N in (0, 2*pi)
};

PlainHeads plain_heads(const Eigen::MatrixXd& raw) {
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  PlainHeads h;
  h.z.resize(raw.rows(), 2);
  h.theta.resize(raw.rows());
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    h.z(r, 0) = 6.0 * sig(raw(r, 0)) - 3.0;
    h.z(r, 1) = 6.0 * sig(raw(r, 1)) - 3.0;
    h.theta[r] = kTwoPi * sig(raw(r, 2));
  }
  return h;
}

// Inverse effective tensor entries from principal permeabilities and angle.
void plain_cinv(const Eigen::VectorXd& c00, const Eigen::VectorXd& c11,
                const Eigen::VectorXd& theta, Eigen::VectorXd& i00, Eigen::VectorXd& i01,
                Eigen::VectorXd& i11) {
  Eigen::Index n = c00.size();
  i00.resize(n);
  i01.resize(n);
  i11.resize(n);
  for (Eigen::Index e = 0; e < n; ++e) {
    double ct = std::cos(theta[e]), st = std::sin(theta[e]);
    double a = 1.0 / c00[e], b = 1.0 / c11[e];
    i00[e] = ct * ct * a + st * st * b;
    i01[e] = st * ct * (a - b);
    i11[e] = st * st * a + ct * ct * b;
  }
}

struct FieldNormRef {
  double lo, span;
  bool log10;
};

FieldNormRef field_ref(const data::NormalizationSpec& norm, int f) {
  const auto& fn = norm.fields[static_cast<std::size_t>(f)];
  return {fn.lo, fn.hi - fn.lo, fn.log10};
}

ad::Var denorm_col(ad::Tape& tape, ad::Var rows, const data::NormalizationSpec& norm, int f) {
  FieldNormRef r = field_ref(norm, f);
  ad::Var lin = ad::add_scalar(ad::scale(ad::cols(rows, f, 1), r.span), r.lo);
  (void)tape;
  return r.log10 ? ad::vexp(ad::scale(lin, std::log(10.0))) : lin;
}

void check_problem(const Problem& prob, const vae::VaeModel* model) {
  prob.mesh.validate();
  require(prob.hyper.max_epochs >= 1, ErrorKind::Config, "optimize: max_epochs must be positive");
  require(prob.hyper.lr > 0, ErrorKind::Config, "optimize: learning rate must be positive");
  require(prob.net.n_freq >= 1 && prob.net.fmax > 0, ErrorKind::Config,
          "optimize: bad Fourier embedding spec");
  if (prob.constraint.type != ConstraintType::None)
    require(prob.constraint.bound > 0, ErrorKind::Config,
            "optimize: constraint bound must be positive");
  if (prob.orientation_only)
    require(prob.fixed.has_value(), ErrorKind::Config,
            "optimize: orientation-only mode needs a selected microstructure (pass one with "
            "--fixed)");
  if (prob.fixed) {
    require(prob.fixed->c00 > 0 && prob.fixed->c11 > 0, ErrorKind::Config,
            "optimize: fixed microstructure permeability must be positive");
  } else {
    require(model != nullptr, ErrorKind::Config,
            "optimize: a decoder model is required unless a fixed microstructure is given");
    require(model->latent_dim() == 2, ErrorKind::Config,
            "optimize: decoder latent dimension must be 2");
  }
}

}  // namespace

DesignEval evaluate_design(const Problem& prob, const DesignField& design) {
  require(design.nelx == prob.mesh.nelx && design.nely == prob.mesh.nely, ErrorKind::Config,
          "evaluate: design grid does not match the problem mesh");
  int n = prob.mesh.n_elems();
  require(design.psi.rows() == n && design.psi.cols() == 10 && design.theta.size() == n,
          ErrorKind::Config, "evaluate: design field sizes are inconsistent");

  DesignEval ev;
  Eigen::VectorXd c00 = design.psi.col(6), c11 = design.psi.col(7);
  plain_cinv(c00, c11, design.theta, ev.cinv00, ev.cinv01, ev.cinv11);
  fea::MacroProblem fe(prob.mesh, prob.segments, prob.mu);
  ev.sol = fe.solve(ev.cinv00, ev.cinv01, ev.cinv11);
  ev.J = fe.dissipated_power(ev.sol, ev.cinv00, ev.cinv01, ev.cinv11);
  ev.contact = prob.mesh.h * design.psi.col(8).sum();
  ev.volume_fraction = design.psi.col(9).mean();
  return ev;
}

EpochStats epoch_loss(const Problem& prob, fea::MacroProblem& fe, const Eigen::MatrixXd& F,
                      const nn::MlpParams& net, const vae::VaeModel* model, int epoch, double J0,
                      std::vector<ad::Matrix>* grads) {
  int n = prob.mesh.n_elems();
  bool fixed_mode = prob.fixed.has_value();

  ad::Tape tape;
  nn::MlpVars nv = nn::stage(tape, net, grads != nullptr);
  ad::Var feat = tape.constant(F);
  ad::Var raw = nn::forward(tape, net.spec, nv, feat);

  ad::Var theta = ad::scale(ad::sigmoid(ad::cols(raw, 2, 1)), kTwoPi);
  ad::Var c00, c11, gam, vf;
  if (fixed_mode) {
    c00 = tape.constant(Eigen::VectorXd::Constant(n, prob.fixed->c00));
    c11 = tape.constant(Eigen::VectorXd::Constant(n, prob.fixed->c11));
    gam = tape.constant(Eigen::VectorXd::Constant(n, prob.fixed->fields[8]));
    vf = tape.constant(Eigen::VectorXd::Constant(n, prob.fixed->fields[9]));
  } else {
    ad::Var z = ad::add_scalar(ad::scale(ad::sigmoid(ad::cols(raw, 0, 2)), 6.0), -3.0);
    nn::MlpVars dec = nn::stage(tape, model->decoder, false);
    ad::Var rows = nn::forward(tape, model->decoder.spec, dec, z);
    c00 = denorm_col(tape, rows, model->norm, 6);
    c11 = denorm_col(tape, rows, model->norm, 7);
    gam = denorm_col(tape, rows, model->norm, 8);
    vf = denorm_col(tape, rows, model->norm, 9);
  }

  ad::Var ct = ad::vcos(theta), st = ad::vsin(theta);
  ad::Var ones = tape.constant(Eigen::MatrixXd::Ones(n, 1));
  ad::Var ia = ad::div(ones, c00), ib = ad::div(ones, c11);
  ad::Var ct2 = ad::mul(ct, ct), st2 = ad::mul(st, st);
  ad::Var cinv00 = ad::add(ad::mul(ct2, ia), ad::mul(st2, ib));
  ad::Var cinv01 = ad::mul(ad::mul(st, ct), ad::sub(ia, ib));
  ad::Var cinv11 = ad::add(ad::mul(st2, ia), ad::mul(ct2, ib));

  ad::Var S = fe.solve_on_tape(tape, cinv00, cinv01, cinv11);
  ad::Var J = fe.dissipated_power_on_tape(tape, S, cinv00, cinv01, cinv11);

  EpochStats out;
  out.J = tape.val(J)(0, 0);
  if (J0 <= 0) {
    J0 = out.J;
    require(J0 > 0 && std::isfinite(J0), ErrorKind::Numeric,
            "optimize: initial objective is not positive");
  }
  out.penalty_weight = prob.hyper.penalty0 + prob.hyper.penalty_growth * epoch;

  ad::Var loss = ad::scale(J, 1.0 / J0);
  if (prob.constraint.type != ConstraintType::None) {
    ad::Var g;
    if (prob.constraint.type == ConstraintType::MinContact) {
      ad::Var contact = ad::scale(ad::sum(gam), prob.mesh.h);
      g = ad::add_scalar(ad::scale(contact, -1.0 / prob.constraint.bound), 1.0);
      out.contact = tape.val(contact)(0, 0);
      out.volume_fraction = tape.val(vf).mean();
    } else {
      ad::Var vfrac = ad::scale(ad::sum(vf), 1.0 / n);
      g = ad::add_scalar(ad::scale(vfrac, 1.0 / prob.constraint.bound), -1.0);
      out.volume_fraction = tape.val(vfrac)(0, 0);
      out.contact = prob.mesh.h * tape.val(gam).sum();
    }
    out.g = tape.val(g)(0, 0);
    ad::Var gpos = ad::relu(g);
    loss = ad::add(loss, ad::scale(ad::mul(gpos, gpos), out.penalty_weight));
  } else {
    out.contact = prob.mesh.h * tape.val(gam).sum();
    out.volume_fraction = tape.val(vf).mean();
  }
  out.loss = tape.val(loss)(0, 0);
  require(std::isfinite(out.loss), ErrorKind::Numeric, "optimize: loss diverged");

  if (grads) {
    tape.backward(loss);
    grads->clear();
    for (std::size_t l = 0; l < nv.W.size(); ++l) {
      grads->push_back(tape.grad(nv.W[l]));
      grads->push_back(tape.grad(nv.b[l]));
    }
  }
  return out;
}

DesignField optimize(const Problem& prob, const vae::VaeModel* model,
                     const ProgressFn& progress) {
  check_problem(prob, model);
  fea::MacroProblem fe(prob.mesh, prob.segments, prob.mu);
  int n = prob.mesh.n_elems();

  nn::FourierFeatures ff =
      nn::make_fourier_features(prob.net.n_freq, prob.net.fmax, prob.net.seed);
  Eigen::MatrixXd F = nn::fourier_embed(ff, fe.elem_centers_normalized());
  nn::MlpSpec spec = net_spec(prob.net);
  nn::MlpParams net = nn::init_mlp(spec, Rng::derive(prob.net.seed, 1));

  bool fixed_mode = prob.fixed.has_value();
  nn::Adam adam;
  adam.lr = prob.hyper.lr;
  DesignField design;
  design.history.reserve(static_cast<std::size_t>(prob.hyper.max_epochs));

  double J0 = 0;
  double prev_loss = std::numeric_limits<double>::infinity();
  std::vector<ad::Matrix> grads;

  for (int epoch = 0; epoch < prob.hyper.max_epochs; ++epoch) {
    EpochStats st_now = epoch_loss(prob, fe, F, net, model, epoch, J0, &grads);
    if (epoch == 0) J0 = st_now.J;
    adam.step(nn::param_refs(net), grads);

    design.history.push_back(st_now);
    if (progress) progress(epoch, st_now);
    if (std::abs(st_now.loss - prev_loss) < prob.hyper.conv_tol) break;
    prev_loss = st_now.loss;
  }

  // Final design from the trained network, through the same plain path the
  // persisted field will be evaluated with.
  Eigen::MatrixXd raw = nn::forward_plain(net, F);
  PlainHeads heads = plain_heads(raw);
  design.problem_name = prob.name;
  design.nelx = prob.mesh.nelx;
  design.nely = prob.mesh.nely;
  design.h = prob.mesh.h;
  design.theta = heads.theta;
  design.psi.resize(n, 10);
  if (fixed_mode) {
    design.z = Eigen::MatrixXd::Zero(n, 2);
    for (int e = 0; e < n; ++e)
      for (int f = 0; f < 10; ++f) design.psi(e, f) = prob.fixed->fields[static_cast<std::size_t>(f)];
  } else {
    design.z = heads.z;
    Eigen::MatrixXd rows = vae::decode_batch_norm(*model, heads.z);
    for (int e = 0; e < n; ++e) {
      data::Record rec = model->norm.denormalize_row(rows.row(e).transpose());
      auto v = data::NormalizationSpec::raw(rec);
      for (int f = 0; f < 10; ++f) design.psi(e, f) = v[static_cast<std::size_t>(f)];
    }
  }
  design.J_initial = J0;
  DesignEval ev = evaluate_design(prob, design);
  design.J_final = ev.J;
  design.contact_total = ev.contact;
  design.volume_fraction = ev.volume_fraction;
  design.provenance = problem_to_json(prob);
  design.provenance["epochs_run"] = design.history.size();
  return design;
}

std::vector<ParetoPoint> pareto_sweep(const Problem& base, const std::vector<double>& bounds,
                                      const vae::VaeModel* model, const ProgressFn& progress) {
  require(!bounds.empty(), ErrorKind::Config, "pareto: need at least one bound");
  require(base.constraint.type != ConstraintType::None, ErrorKind::Config,
          "pareto: base problem must carry a constraint to sweep");
  std::vector<ParetoPoint> out;
  for (double b : bounds) {
    Problem p = base;
    p.constraint.bound = b;
    p.name = base.name + "_bound_" + format_double(b);
    ParetoPoint pt;
    pt.bound = b;
    pt.design = optimize(p, model, progress);
    pt.J = pt.design.J_final;
    pt.contact = pt.design.contact_total;
    out.push_back(std::move(pt));
  }
  return out;
}

namespace {
nlohmann::json stats_to_json(const std::vector<EpochStats>& hist) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : hist)
    arr.push_back({{"loss", s.loss},
                   {"J", s.J},
                   {"g", s.g},
                   {"penalty_weight", s.penalty_weight},
                   {"contact", s.contact},
                   {"volume_fraction", s.volume_fraction}});
  return arr;
}

std::vector<EpochStats> stats_from_json(const nlohmann::json& arr) {
  std::vector<EpochStats> out;
  for (const auto& j : arr) {
    EpochStats s;
    s.loss = j.at("loss").get<double>();
    s.J = j.at("J").get<double>();
    s.g = j.at("g").get<double>();
    s.penalty_weight = j.at("penalty_weight").get<double>();
    s.contact = j.at("contact").get<double>();
    s.volume_fraction = j.at("volume_fraction").get<double>();
    out.push_back(s);
  }
  return out;
}
}  // namespace

void save_design(const DesignField& d, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["kind"] = "design";
  j["problem_name"] = d.problem_name;
  j["nelx"] = d.nelx;
  j["nely"] = d.nely;
  j["h"] = d.h;
  j["z"] = nn::matrix_to_json(d.z);
  j["theta"] = nn::matrix_to_json(d.theta);
  j["psi"] = nn::matrix_to_json(d.psi);
  j["J_initial"] = d.J_initial;
  j["J_final"] = d.J_final;
  j["contact_total"] = d.contact_total;
  j["volume_fraction"] = d.volume_fraction;
  j["history"] = stats_to_json(d.history);
  j["provenance"] = d.provenance;
  std::ofstream f(path);
  if (!f) fail_io("design: cannot open '" + path + "' for writing");
  f << j.dump() << '\n';
  if (!f) fail_io("design: write to '" + path + "' failed");
}

DesignField load_design(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail_io("design: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    fail_io(std::string("design: parse error: ") + e.what());
  }
  require(j.value("kind", "") == std::string("design"), ErrorKind::Io,
          "design: '" + path + "' is not a design file");
  DesignField d;
  d.problem_name = j.at("problem_name").get<std::string>();
  d.nelx = j.at("nelx").get<int>();
  d.nely = j.at("nely").get<int>();
  d.h = j.at("h").get<double>();
  d.z = nn::matrix_from_json(j.at("z"));
  d.theta = nn::matrix_from_json(j.at("theta"));
  d.psi = nn::matrix_from_json(j.at("psi"));
  d.J_initial = j.at("J_initial").get<double>();
  d.J_final = j.at("J_final").get<double>();
  d.contact_total = j.at("contact_total").get<double>();
  d.volume_fraction = j.at("volume_fraction").get<double>();
  d.history = stats_from_json(j.at("history"));
  d.provenance = j.at("provenance");
  int n = d.nelx * d.nely;
  require(d.psi.rows() == n && d.psi.cols() == 10 && d.theta.size() == n && d.z.rows() == n,
          ErrorKind::Io, "design: field sizes do not match the grid");
  return d;
}

namespace {
fea::BoundarySegment::Edge edge_from_string(const std::string& s) {
  if (s == "left") return fea::BoundarySegment::Edge::Left;
  if (s == "right") return fea::BoundarySegment::Edge::Right;
  if (s == "bottom") return fea::BoundarySegment::Edge::Bottom;
  if (s == "top") return fea::BoundarySegment::Edge::Top;
  fail_config("problem: unknown edge '" + s + "' (use left/right/bottom/top)");
}

std::string edge_to_string(fea::BoundarySegment::Edge e) {
  switch (e) {
    case fea::BoundarySegment::Edge::Left: return "left";
    case fea::BoundarySegment::Edge::Right: return "right";
    case fea::BoundarySegment::Edge::Bottom: return "bottom";
    default: return "top";
  }
}
}  // namespace

Problem problem_from_json(const nlohmann::json& j) {
  Problem p;
  p.name = j.at("name").get<std::string>();
  p.mesh.nelx = j.at("mesh").at("nelx").get<int>();
  p.mesh.nely = j.at("mesh").at("nely").get<int>();
  p.mesh.h = j.at("mesh").at("h").get<double>();
  p.mu = j.value("viscosity", 1.0);
  for (const auto& s : j.at("segments")) {
    fea::BoundarySegment seg;
    seg.edge = edge_from_string(s.at("edge").get<std::string>());
    seg.lo = s.at("lo").get<double>();
    seg.hi = s.at("hi").get<double>();
    seg.peak = s.at("peak").get<double>();
    auto dir = s.at("dir").get<std::vector<double>>();
    require(dir.size() == 2, ErrorKind::Config, "problem: segment dir must have 2 components");
    seg.dir = Eigen::Vector2d(dir[0], dir[1]);
    p.segments.push_back(seg);
  }
  if (j.contains("constraint")) {
    std::string t = j.at("constraint").at("type").get<std::string>();
    if (t == "none") {
      p.constraint.type = ConstraintType::None;
    } else if (t == "min_contact") {
      p.constraint.type = ConstraintType::MinContact;
      p.constraint.bound = j.at("constraint").at("bound").get<double>();
    } else if (t == "max_volume") {
      p.constraint.type = ConstraintType::MaxVolume;
      p.constraint.bound = j.at("constraint").at("bound").get<double>();
    } else {
      fail_config("problem: unknown constraint type '" + t + "'");
    }
  }
  if (j.contains("hyper")) {
    const auto& hj = j.at("hyper");
    p.hyper.lr = hj.value("lr", p.hyper.lr);
    p.hyper.max_epochs = hj.value("max_epochs", p.hyper.max_epochs);
    p.hyper.penalty0 = hj.value("penalty0", p.hyper.penalty0);
    p.hyper.penalty_growth = hj.value("penalty_growth", p.hyper.penalty_growth);
    p.hyper.conv_tol = hj.value("conv_tol", p.hyper.conv_tol);
  }
  if (j.contains("net")) {
    const auto& nj = j.at("net");
    p.net.n_freq = nj.value("n_freq", p.net.n_freq);
    p.net.fmax = nj.value("fmax", p.net.fmax);
    p.net.hidden = nj.value("hidden", p.net.hidden);
    p.net.leaky = nj.value("leaky", p.net.leaky);
    p.net.seed = nj.value("seed", p.net.seed);
  }
  if (j.contains("fixed")) {
    FixedMicrostructure fx;
    const auto& fj = j.at("fixed");
    auto fields = fj.at("fields").get<std::vector<double>>();
    require(fields.size() == 10, ErrorKind::Config, "problem: fixed.fields must have 10 entries");
    std::copy(fields.begin(), fields.end(), fx.fields.begin());
    fx.c00 = fx.fields[6];
    fx.c11 = fx.fields[7];
    fx.z1 = fj.value("z1", 0.0);
    fx.z2 = fj.value("z2", 0.0);
    p.fixed = fx;
  }
  p.orientation_only = j.value("orientation_only", false);
  return p;
}

nlohmann::json problem_to_json(const Problem& p) {
  nlohmann::json j;
  j["name"] = p.name;
  j["mesh"] = {{"nelx", p.mesh.nelx}, {"nely", p.mesh.nely}, {"h", p.mesh.h}};
  j["viscosity"] = p.mu;
  j["segments"] = nlohmann::json::array();
  for (const auto& s : p.segments)
    j["segments"].push_back({{"edge", edge_to_string(s.edge)},
                             {"lo", s.lo},
                             {"hi", s.hi},
                             {"peak", s.peak},
                             {"dir", {s.dir.x(), s.dir.y()}}});
  const char* ct = p.constraint.type == ConstraintType::None
                       ? "none"
                       : (p.constraint.type == ConstraintType::MinContact ? "min_contact"
                                                                          : "max_volume");
  j["constraint"] = {{"type", ct}, {"bound", p.constraint.bound}};
  j["hyper"] = {{"lr", p.hyper.lr},
                {"max_epochs", p.hyper.max_epochs},
                {"penalty0", p.hyper.penalty0},
                {"penalty_growth", p.hyper.penalty_growth},
                {"conv_tol", p.hyper.conv_tol}};
  j["net"] = {{"n_freq", p.net.n_freq},
              {"fmax", p.net.fmax},
              {"hidden", p.net.hidden},
              {"leaky", p.net.leaky},
              {"seed", p.net.seed}};
  j["orientation_only"] = p.orientation_only;
  if (p.fixed) {
    nlohmann::json fj;
    fj["fields"] = std::vector<double>(p.fixed->fields.begin(), p.fixed->fields.end());
    fj["z1"] = p.fixed->z1;
    fj["z2"] = p.fixed->z2;
    j["fixed"] = fj;
  }
  return j;
}

Problem load_problem(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail_io("problem: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    fail_io(std::string("problem: parse error in '") + path + "': " + e.what());
  }
  return problem_from_json(j);
}

}  // namespace mto::opt
