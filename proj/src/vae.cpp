#include "mto/vae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>

namespace mto::vae {

std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double holdout,
                                                            std::uint64_t seed) {
  require(n >= 2, ErrorKind::Config, "split: need at least two records");
  require(holdout >= 0.0 && holdout < 1.0, ErrorKind::Config, "split: holdout must be in [0,1)");
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(Rng::derive(seed, 0x5eed));
  for (int i = n - 1; i > 0; --i) {
    int j = rng.uniform_int(0, i);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  int nh = static_cast<int>(std::lround(holdout * n));
  nh = std::min(nh, n - 1);
  std::vector<int> hold(idx.begin(), idx.begin() + nh);
  std::vector<int> train(idx.begin() + nh, idx.end());
  std::sort(hold.begin(), hold.end());
  std::sort(train.begin(), train.end());
  return {train, hold};
}

TrainResult train(const data::Dataset& ds, const TrainOptions& opts,
                  const std::function<void(int epoch, const EpochLoss&)>& progress) {
  require(opts.latent >= 1 && opts.hidden >= 1, ErrorKind::Config, "train: bad architecture");
  require(opts.max_epochs >= 1, ErrorKind::Config, "train: max_epochs must be positive");
  require(ds.records.size() >= 10, ErrorKind::Config, "train: not enough records");

  auto [train_idx, hold_idx] = split_indices(static_cast<int>(ds.records.size()), opts.holdout,
                                             opts.seed);
  std::vector<data::Record> train_recs, hold_recs;
  for (int i : train_idx) train_recs.push_back(ds.records[static_cast<std::size_t>(i)]);
  for (int i : hold_idx) hold_recs.push_back(ds.records[static_cast<std::size_t>(i)]);

  TrainResult res;
  res.train_indices = train_idx;
  res.holdout_indices = hold_idx;
  res.model.beta = opts.beta;
  res.model.seed = opts.seed;
  res.model.norm = ds.norm;

  nn::MlpSpec enc_spec{{10, opts.hidden, opts.hidden, 2 * opts.latent}, 0.01,
                       nn::OutputKind::Linear};
  nn::MlpSpec dec_spec{{opts.latent, opts.hidden, opts.hidden, 10}, 0.01,
                       nn::OutputKind::Sigmoid};
  res.model.encoder = nn::init_mlp(enc_spec, opts.seed);
  res.model.decoder = nn::init_mlp(dec_spec, Rng::derive(opts.seed, 1));

  Eigen::MatrixXd X = ds.norm.normalize(train_recs);
  Eigen::Index n = X.rows();
  Rng noise(Rng::derive(opts.seed, 2));

  nn::Adam adam;
  adam.lr = opts.lr;
  int plateau = 0;
  double prev_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    ad::Tape tape;
    nn::MlpVars enc = nn::stage(tape, res.model.encoder, true);
    nn::MlpVars dec = nn::stage(tape, res.model.decoder, true);
    ad::Var x = tape.constant(X);

    ad::Var enc_out = nn::forward(tape, enc_spec, enc, x);
    ad::Var mu = ad::cols(enc_out, 0, opts.latent);
    ad::Var logvar = ad::cols(enc_out, opts.latent, opts.latent);

    Eigen::MatrixXd epsm(n, opts.latent);
    for (Eigen::Index r = 0; r < n; ++r)
      for (int c = 0; c < opts.latent; ++c) epsm(r, c) = noise.normal();
    ad::Var eps = tape.constant(epsm);
    ad::Var z = ad::add(mu, ad::mul(ad::vexp(ad::scale(logvar, 0.5)), eps));

    ad::Var xhat = nn::forward(tape, dec_spec, dec, z);
    ad::Var diff = ad::sub(xhat, x);
    ad::Var recon = ad::scale(ad::dot(diff, diff), 1.0 / static_cast<double>(n));

    // KL(q || N(0,I)) summed over latent dims, averaged over the batch
    ad::Var kl_terms = ad::sub(ad::add_scalar(logvar, 1.0),
                               ad::add(ad::mul(mu, mu), ad::vexp(logvar)));
    ad::Var kl = ad::scale(ad::sum(kl_terms), -0.5 / static_cast<double>(n));

    ad::Var loss = ad::add(recon, ad::scale(kl, opts.beta));
    tape.backward(loss);

    EpochLoss el;
    el.total = tape.val(loss)(0, 0);
    el.recon = tape.val(recon)(0, 0);
    el.kl = tape.val(kl)(0, 0);
    require(std::isfinite(el.total), ErrorKind::Numeric, "train: loss diverged");
    res.history.push_back(el);
    if (progress) progress(epoch, el);

    std::vector<ad::Matrix> grads;
    std::vector<ad::Matrix*> params;
    auto collect = [&](nn::MlpVars& vars, nn::MlpParams& p) {
      for (std::size_t l = 0; l < vars.W.size(); ++l) {
        grads.push_back(tape.grad(vars.W[l]));
        grads.push_back(tape.grad(vars.b[l]));
        params.push_back(&p.W[l]);
        params.push_back(&p.b[l]);
      }
    };
    collect(enc, res.model.encoder);
    collect(dec, res.model.decoder);
    adam.step(params, grads);

    if (std::abs(el.total - prev_loss) < opts.conv_tol) {
      if (++plateau >= opts.conv_window) break;
    } else {
      plateau = 0;
    }
    prev_loss = el.total;
  }

  res.holdout_field_err =
      reconstruction_field_error(res.model, hold_recs.empty() ? train_recs : hold_recs);
  return res;
}

Eigen::MatrixXd decode_batch_norm(const VaeModel& m, const Eigen::MatrixXd& Z) {
  require(Z.cols() == m.latent_dim(), ErrorKind::Config,
          "decode: latent points have wrong dimension");
  return nn::forward_plain(m.decoder, Z);
}

Decoded decode(const VaeModel& m, double z1, double z2) {
  require(m.latent_dim() == 2, ErrorKind::Config, "decode: model latent dimension is not 2");
  Eigen::MatrixXd Z(1, 2);
  Z << z1, z2;
  Eigen::MatrixXd row = decode_batch_norm(m, Z);
  Decoded d;
  for (int f = 0; f < 10; ++f) d.norm_row[static_cast<std::size_t>(f)] = row(0, f);
  d.rec = m.norm.denormalize_row(row.row(0).transpose());
  return d;
}

Eigen::VectorXd encode(const VaeModel& m, const data::Record& r) {
  auto nr = m.norm.normalize_one(r);
  Eigen::MatrixXd x(1, 10);
  for (int f = 0; f < 10; ++f) x(0, f) = nr[static_cast<std::size_t>(f)];
  Eigen::MatrixXd out = nn::forward_plain(m.encoder, x);
  return out.row(0).transpose();
}

Eigen::VectorXd reconstruction_field_error(const VaeModel& m,
                                           const std::vector<data::Record>& recs) {
  require(!recs.empty(), ErrorKind::Config, "reconstruction error: empty record set");
  Eigen::VectorXd err = Eigen::VectorXd::Zero(10);
  int latent = m.latent_dim();
  for (const data::Record& r : recs) {
    Eigen::VectorXd code = encode(m, r);
    Eigen::MatrixXd Z(1, latent);
    for (int c = 0; c < latent; ++c) Z(0, c) = code[c];  // posterior mean, no sampling
    Eigen::MatrixXd row = decode_batch_norm(m, Z);
    auto truth = m.norm.normalize_one(r);
    for (int f = 0; f < 10; ++f)
      err[f] += std::abs(row(0, f) - truth[static_cast<std::size_t>(f)]);
  }
  return err / static_cast<double>(recs.size());
}

Selection select_microstructure(const VaeModel& m, double vf_target, double vf_tol, int grid_n) {
  require(grid_n >= 11, ErrorKind::Config, "select: grid too coarse");
  require(vf_tol > 0, ErrorKind::Config, "select: tolerance must be positive");

  const double lo = -3.0, hi = 3.0;
  const double step = (hi - lo) / (grid_n - 1);
  Eigen::MatrixXd Z(grid_n * grid_n, 2);
  for (int i = 0; i < grid_n; ++i)
    for (int j = 0; j < grid_n; ++j) {
      Z(i * grid_n + j, 0) = lo + step * i;
      Z(i * grid_n + j, 1) = lo + step * j;
    }
  Eigen::MatrixXd rows = decode_batch_norm(m, Z);

  // solid(k) = 1 - decoded fluid fraction; trace(k) = c00 + c11
  const int n = grid_n * grid_n;
  Eigen::VectorXd solid(n), trace(n);
  for (int k = 0; k < n; ++k) {
    data::Record rec = m.norm.denormalize_row(rows.row(k).transpose());
    solid[k] = 1.0 - rec.vf;
    trace[k] = rec.c00 + rec.c11;
  }

  auto finish = [&](double z1, double z2) {
    Selection sel;
    sel.z1 = z1;
    sel.z2 = z2;
    sel.decoded = decode(m, z1, z2);
    require(std::abs(1.0 - sel.decoded.rec.vf - vf_target) <= vf_tol, ErrorKind::Numeric,
            "select: no latent point matches the target solid fraction within tolerance; "
            "increase --tol or --grid");
    return sel;
  };

  // Exhaustive scan: best trace among grid points inside the band.
  int best = -1;
  for (int k = 0; k < n; ++k)
    if (std::abs(solid[k] - vf_target) <= vf_tol && (best < 0 || trace[k] > trace[best])) best = k;
  if (best >= 0) return finish(Z(best, 0), Z(best, 1));

  // The band is thinner than the grid resolves. The decoded solid fraction is
  // continuous in z, so wherever adjacent grid points straddle the target the
  // connecting segment crosses it; bisect the crossings near the best traces
  // and keep the one with the largest trace.
  double best_trace = -std::numeric_limits<double>::infinity();
  double bz1 = 0, bz2 = 0;
  bool got = false;
  auto solid_at = [&](double z1, double z2) { return 1.0 - decode(m, z1, z2).rec.vf; };
  auto consider = [&](int ka, int kb) {
    if ((solid[ka] - vf_target) * (solid[kb] - vf_target) > 0) return;
    if (std::max(trace[ka], trace[kb]) <= best_trace) return;
    double a1 = Z(ka, 0), a2 = Z(ka, 1), b1 = Z(kb, 0), b2 = Z(kb, 1);
    double fa = solid[ka] - vf_target;
    for (int it = 0; it < 60; ++it) {
      double m1 = 0.5 * (a1 + b1), m2 = 0.5 * (a2 + b2);
      double fm = solid_at(m1, m2) - vf_target;
      if (std::abs(fm) <= vf_tol * 0.5) break;
      if ((fm > 0) == (fa > 0)) {
        a1 = m1;
        a2 = m2;
        fa = fm;
      } else {
        b1 = m1;
        b2 = m2;
      }
    }
    double z1 = 0.5 * (a1 + b1), z2 = 0.5 * (a2 + b2);
    if (std::abs(solid_at(z1, z2) - vf_target) > vf_tol) return;
    auto rec = decode(m, z1, z2).rec;
    double tr = rec.c00 + rec.c11;
    if (tr > best_trace) {
      best_trace = tr;
      bz1 = z1;
      bz2 = z2;
      got = true;
    }
  };
  for (int i = 0; i < grid_n; ++i)
    for (int j = 0; j < grid_n; ++j) {
      int k = i * grid_n + j;
      if (i + 1 < grid_n) consider(k, k + grid_n);
      if (j + 1 < grid_n) consider(k, k + 1);
    }
  require(got, ErrorKind::Numeric,
          "select: no latent point matches the target solid fraction within tolerance; "
          "increase --tol or --grid");
  return finish(bz1, bz2);
}

void save_model(const VaeModel& m, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["kind"] = "vae";
  j["beta"] = m.beta;
  j["seed"] = m.seed;
  j["encoder"] = nn::mlp_to_json(m.encoder);
  j["decoder"] = nn::mlp_to_json(m.decoder);
  j["normalization"] = data::norm_spec_to_json(m.norm);
  std::ofstream f(path);
  if (!f) fail_io("model: cannot open '" + path + "' for writing");
  f << j.dump() << '\n';
  if (!f) fail_io("model: write to '" + path + "' failed");
}

VaeModel load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail_io("model: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    fail_io(std::string("model: parse error: ") + e.what());
  }
  require(j.value("kind", "") == std::string("vae"), ErrorKind::Io,
          "model: '" + path + "' is not an autoencoder file");
  VaeModel m;
  m.beta = j.at("beta").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.encoder = nn::mlp_from_json(j.at("encoder"));
  m.decoder = nn::mlp_from_json(j.at("decoder"));
  m.norm = data::norm_spec_from_json(j.at("normalization"));
  require(m.encoder.spec.widths.front() == 10 && m.decoder.spec.widths.back() == 10,
          ErrorKind::Io, "model: field width is not 10");
  require(m.encoder.spec.widths.back() == 2 * m.decoder.spec.widths.front(), ErrorKind::Io,
          "model: encoder/decoder latent widths disagree");
  return m;
}

}  // namespace mto::vae
