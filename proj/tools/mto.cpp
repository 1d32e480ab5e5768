#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "mto/common.hpp"
#include "mto/dataset.hpp"
#include "mto/optimizer.hpp"
#include "mto/vae.hpp"
#include "mto/validator.hpp"

namespace {

using nlohmann::json;

mto::opt::FixedMicrostructure load_selection(const std::string& path) {
  std::ifstream f(path);
  if (!f) mto::fail_io("selection: cannot open '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    mto::fail_io(std::string("selection: parse error: ") + e.what());
  }
  mto::require(j.value("kind", "") == std::string("selection"), mto::ErrorKind::Io,
               "selection: '" + path + "' is not a selection file");
  auto fields = j.at("fields").get<std::vector<double>>();
  mto::require(fields.size() == 10, mto::ErrorKind::Io, "selection: fields must have 10 entries");
  mto::opt::FixedMicrostructure fx;
  std::copy(fields.begin(), fields.end(), fx.fields.begin());
  fx.c00 = fx.fields[6];
  fx.c11 = fx.fields[7];
  fx.z1 = j.at("z1").get<double>();
  fx.z2 = j.at("z2").get<double>();
  return fx;
}

int run(int argc, char** argv) {
  CLI::App app{"Multiscale flow topology optimization toolkit"};
  app.require_subcommand(1);

  // ---- generate ----
  auto* gen = app.add_subcommand("generate", "Sample microstructures and homogenize them");
  mto::data::GenerateOptions gopts;
  std::string gen_out = "dataset.csv";
  gen->add_option("--count", gopts.count, "number of records");
  gen->add_option("--seed", gopts.seed, "sampling seed");
  gen->add_option("--resolution", gopts.resolution, "homogenization grid per cell side");
  gen->add_option("--boundary-points", gopts.boundary_points, "polygon sampling density");
  gen->add_option("--workers", gopts.workers, "parallel workers");
  gen->add_option("--checkpoint", gopts.checkpoint, "per-record checkpoint file for resumable runs");
  gen->add_option("-o,--out", gen_out, "output CSV path");
  gen->callback([&] {
    auto ds = mto::data::generate(gopts, [](int d, int t) {
      std::fprintf(stderr, "\rgenerate: %d/%d", d, t);
      if (d == t) std::fprintf(stderr, "\n");
    });
    mto::data::save_dataset(ds, gen_out);
    std::printf("wrote %zu records to %s (rejected %ld degenerate draws)\n",
                ds.records.size(), gen_out.c_str(), ds.rejected);
  });

  // ---- train ----
  auto* tr = app.add_subcommand("train", "Train the microstructure autoencoder");
  std::string tr_data, tr_out = "model.json";
  mto::vae::TrainOptions topts;
  tr->add_option("--data", tr_data, "dataset CSV")->required();
  tr->add_option("-o,--out", tr_out, "model output path");
  tr->add_option("--epochs", topts.max_epochs, "max training epochs");
  tr->add_option("--lr", topts.lr, "learning rate");
  tr->add_option("--beta", topts.beta, "KL weight");
  tr->add_option("--hidden", topts.hidden, "hidden width");
  tr->add_option("--latent", topts.latent, "latent dimension");
  tr->add_option("--holdout", topts.holdout, "held-out fraction for the quality gate");
  tr->add_option("--seed", topts.seed, "training seed");
  tr->callback([&] {
    auto ds = mto::data::load_dataset(tr_data);
    auto res = mto::vae::train(ds, topts, [](int e, const mto::vae::EpochLoss& l) {
      if (e % 25 == 0) std::fprintf(stderr, "epoch %d  loss %.6g  recon %.6g\n", e, l.total, l.recon);
    });
    mto::vae::save_model(res.model, tr_out);
    std::printf("trained %zu epochs, final loss %.6g\n", res.history.size(),
                res.history.back().total);
    const auto& names = mto::data::NormalizationSpec::names();
    std::printf("held-out reconstruction error per field (fraction of range):\n");
    for (int f = 0; f < 10; ++f)
      std::printf("  %-6s %.4f\n", names[static_cast<std::size_t>(f)], res.holdout_field_err[f]);
    std::printf("model written to %s\n", tr_out.c_str());
  });

  // ---- select ----
  auto* sel = app.add_subcommand("select", "Pick a microstructure from the latent space");
  std::string sel_model, sel_out = "selection.json";
  double sel_vf = 0.25, sel_tol = 1e-3;
  int sel_grid = 200;
  sel->add_option("--model", sel_model, "autoencoder file")->required();
  sel->add_option("--vf", sel_vf, "target solid fraction");
  sel->add_option("--tol", sel_tol, "solid fraction tolerance");
  sel->add_option("--grid", sel_grid, "latent scan grid size");
  sel->add_option("-o,--out", sel_out, "selection output path");
  sel->callback([&] {
    auto model = mto::vae::load_model(sel_model);
    auto s = mto::vae::select_microstructure(model, sel_vf, sel_tol, sel_grid);
    json j;
    j["kind"] = "selection";
    j["z1"] = s.z1;
    j["z2"] = s.z2;
    auto raw = mto::data::NormalizationSpec::raw(s.decoded.rec);
    j["fields"] = std::vector<double>(raw.begin(), raw.end());
    j["vf_target"] = sel_vf;
    std::ofstream f(sel_out);
    if (!f) mto::fail_io("selection: cannot open '" + sel_out + "' for writing");
    f << j.dump(2) << '\n';
    std::printf("z* = (%.4f, %.4f)  solid %.4f  c00 %.4g  c11 %.4g  gamma %.4f\n", s.z1, s.z2,
                1.0 - s.decoded.rec.vf, s.decoded.rec.c00, s.decoded.rec.c11, s.decoded.rec.gamma);
    std::printf("selection written to %s\n", sel_out.c_str());
  });

  // ---- optimize ----
  auto* op = app.add_subcommand("optimize", "Optimize a design for a problem config");
  std::string op_cfg, op_model, op_fixed, op_out = "design.json", op_svg, op_vtk;
  int op_epochs = -1;
  op->add_option("--config", op_cfg, "problem config (JSON)")->required();
  op->add_option("--model", op_model, "autoencoder file (full mode)");
  op->add_option("--fixed", op_fixed, "selection file (orientation-only mode)");
  op->add_option("--epochs", op_epochs, "override max epochs");
  op->add_option("-o,--out", op_out, "design output path");
  op->add_option("--svg", op_svg, "also draw the design to this SVG");
  op->add_option("--vtk", op_vtk, "also export the flow field to this VTK");
  op->callback([&] {
    auto prob = mto::opt::load_problem(op_cfg);
    if (!op_fixed.empty()) prob.fixed = load_selection(op_fixed);
    if (op_epochs > 0) prob.hyper.max_epochs = op_epochs;
    mto::vae::VaeModel model;
    bool has_model = !op_model.empty();
    if (has_model) model = mto::vae::load_model(op_model);
    mto::require(has_model || prob.fixed.has_value(), mto::ErrorKind::Config,
                 "optimize: pass --model, or --fixed for orientation-only configs");
    auto design = mto::opt::optimize(prob, has_model ? &model : nullptr,
                                     [](int e, const mto::opt::EpochStats& s) {
                                       if (e % 10 == 0)
                                         std::fprintf(stderr,
                                                      "epoch %3d  loss %.6f  J %.4f  g %.4f\n", e,
                                                      s.loss, s.J, s.g);
                                     });
    mto::opt::save_design(design, op_out);
    std::printf("%s: J %.6g (initial %.6g), contact %.6g, volume fraction %.4f, %zu epochs\n",
                prob.name.c_str(), design.J_final, design.J_initial, design.contact_total,
                design.volume_fraction, design.history.size());
    if (!op_svg.empty()) mto::val::export_design_svg(design, op_svg);
    if (!op_vtk.empty()) mto::val::export_design_vtk(prob, design, op_vtk);
    std::printf("design written to %s\n", op_out.c_str());
  });

  // ---- pareto ----
  auto* pa = app.add_subcommand("pareto", "Sweep a constraint bound");
  std::string pa_cfg, pa_model, pa_prefix = "pareto";
  std::vector<double> pa_bounds;
  pa->add_option("--config", pa_cfg, "problem config (JSON)")->required();
  pa->add_option("--model", pa_model, "autoencoder file")->required();
  pa->add_option("--bounds", pa_bounds, "constraint bounds to sweep")->required();
  pa->add_option("--out-prefix", pa_prefix, "output prefix for designs and table");
  pa->callback([&] {
    auto prob = mto::opt::load_problem(pa_cfg);
    auto model = mto::vae::load_model(pa_model);
    auto points = mto::opt::pareto_sweep(prob, pa_bounds, &model);
    json table = json::array();
    std::printf("%-12s %-12s %-12s\n", "bound", "J", "contact");
    for (auto& pt : points) {
      mto::opt::save_design(pt.design,
                            pa_prefix + "_" + mto::format_double(pt.bound) + ".design.json");
      table.push_back({{"bound", pt.bound}, {"J", pt.J}, {"contact", pt.contact}});
      std::printf("%-12.6g %-12.6g %-12.6g\n", pt.bound, pt.J, pt.contact);
    }
    std::ofstream f(pa_prefix + "_table.json");
    if (!f) mto::fail_io("pareto: cannot write table");
    f << table.dump(2) << '\n';
  });

  // ---- validate ----
  auto* va = app.add_subcommand("validate", "Re-simulate a design at full fidelity");
  std::string va_cfg, va_design, va_out = "report.json";
  mto::val::ValidationOptions vopts;
  va->add_option("--config", va_cfg, "problem config (JSON)")->required();
  va->add_option("--design", va_design, "design file")->required();
  va->add_option("--resolution", vopts.resolution, "re-homogenization grid");
  va->add_option("--boundary-points", vopts.boundary_points, "polygon sampling density");
  va->add_option("--workers", vopts.workers, "parallel workers");
  va->add_option("--memo", vopts.memo, "per-element checkpoint file for resumable runs");
  va->add_option("-o,--out", va_out, "report output path");
  va->callback([&] {
    auto prob = mto::opt::load_problem(va_cfg);
    auto design = mto::opt::load_design(va_design);
    auto rep = mto::val::validate(prob, design, vopts, [](int d, int t) {
      std::fprintf(stderr, "\rvalidate: %d/%d", d, t);
      if (d == t) std::fprintf(stderr, "\n");
    });
    mto::val::save_report(rep, va_out);
    std::printf("J: predicted %.6g, true %.6g (rel err %.2f%%)\n", rep.J_pred, rep.J_true,
                100 * rep.J_rel_err);
    std::printf("contact: predicted %.6g, true %.6g (rel err %.2f%%)\n", rep.contact_pred,
                rep.contact_true, 100 * rep.contact_rel_err);
    std::printf("projected %d, degenerate %d, perm log err mean %.4f max %.4f\n",
                rep.projected_elements, rep.degenerate_elements, rep.mean_perm_log_err,
                rep.max_perm_log_err);
    std::printf("report written to %s\n", va_out.c_str());
  });

  // ---- export ----
  auto* ex = app.add_subcommand("export", "Render a design to SVG or VTK");
  std::string ex_design, ex_fmt = "svg", ex_out, ex_cfg;
  ex->add_option("--design", ex_design, "design file")->required();
  ex->add_option("--format", ex_fmt, "svg or vtk");
  ex->add_option("-o,--out", ex_out, "output path")->required();
  ex->add_option("--config", ex_cfg, "problem config (needed for vtk)");
  ex->callback([&] {
    auto design = mto::opt::load_design(ex_design);
    if (ex_fmt == "svg") {
      mto::val::export_design_svg(design, ex_out);
    } else if (ex_fmt == "vtk") {
      mto::require(!ex_cfg.empty(), mto::ErrorKind::Config,
                   "export: vtk needs --config to rebuild the flow problem");
      auto prob = mto::opt::load_problem(ex_cfg);
      mto::val::export_design_vtk(prob, design, ex_out);
    } else {
      mto::fail_config("export: unknown format '" + ex_fmt + "' (use svg or vtk)");
    }
    std::printf("wrote %s\n", ex_out.c_str());
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const mto::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
}
