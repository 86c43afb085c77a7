/**
 * \file main.cpp
 * \brief Command-line front end of qlab.
 *
 * Exit codes: 0 all checks pass, 1 a constraint or check fails, 2 input error,
 * 3 numerical divergence of the fixed-point solver.
 */
#include <iostream>

#include "CLI11.hpp"
#include "pipeline.hpp"

int main(int argc, char** argv) {
  using qlab::tools::RunManifest;
  CLI::App app{"qlab: q-analogue singular perturbation experiments"};
  app.require_subcommand(1, 1);

  RunManifest m;
  app.add_option("--spec", m.spec_path, "problem spec (JSON); default the bundled reference instance");
  app.add_option("--out", m.out_dir, "output directory for tables and summary.json");
  app.add_option("--seed", m.seed, "seed of every random sample-point selection");
  app.add_option("--eps-decades", m.eps_decades, "decades spanned by the eps ladder");
  app.add_option("--grid-density", m.grid_density, "scale of radial oversampling and of the m-grid");
  app.add_option("--iota", m.iota, "number of sectors of the covering");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"validate", "check every structural constraint of the spec and the coverings"},
      {"solve", "solve the fixed point on the sector containing arg eps = 0"},
      {"assemble", "evaluate u on a sample grid"},
      {"diff", "difference of consecutive solutions on one overlap"},
      {"fit", "fit a flatness model to a table of abs_eps,log_abs"},
      {"rs-check", "cocycle ladders and the Ramis-Sibuya conditions on every overlap"},
      {"theta-check", "theta functional equation and lower bound"},
      {"lambertw-check", "Lambert W_{-1} accuracy and bracket"},
      {"envelope-check", "mixed envelope bound and its maximizer"},
      {"pipeline", "run the selected acceptance stages"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) subs.push_back(app.add_subcommand(name, help));

  auto sub = [&](const std::string& name) { return app.get_subcommand(name); };
  sub("pipeline")->add_option("--subset", m.subset,
                              "comma-separated stages: theta, lambertw, borel, kernels, solver, bounds, envelope, "
                              "outer, inner, fit, all");
  for (const auto* name : {"solve", "assemble", "diff"})
    sub(name)->add_option("--eps", m.eps, "modulus of eps");
  sub("diff")->add_option("--overlap", m.overlap_index, "overlap index h");
  for (const auto* name : {"rs-check", "pipeline"})
    sub(name)->add_option("--eps-top", m.eps_top, "largest |eps| of the ladder; default eps0");
  sub("rs-check")->add_option("--covering", m.covering, "outer or inner");
  sub("fit")->add_option("--data", m.data_path, "table with columns abs_eps,log_abs")->required();
  sub("fit")->add_option("--model", m.model, "gevrey, q_gevrey or mixed");
  sub("fit")->add_option("--gevrey-s", m.gevrey_s, "Gevrey order s");
  sub("fit")->add_option("--inverse-power", m.inverse_power, "power of the 1/|eps| term of the q-Gevrey model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : qlab::tools::kInputError;
  }
  for (auto* s : subs)
    if (s->parsed()) m.command = s->get_name();
  return qlab::tools::run_command(m, std::cout);
}
