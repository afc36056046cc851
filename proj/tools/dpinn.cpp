// dpinn command-line front end: run, matrix, oracle.

#include "dpinn/config.hpp"
#include "dpinn/experiment.hpp"
#include "dpinn/oracle.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

int cmd_run(const std::string& config, const std::optional<std::string>& preset,
            const std::optional<std::uint64_t>& seed, const std::optional<std::string>& out) {
  std::ifstream in(config, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read config " + config);
  std::stringstream text;
  text << in.rdbuf();
  nlohmann::json j = nlohmann::json::parse(text.str());
  if (seed) j["seed"] = *seed;
  if (out) j["output_dir"] = *out;
  const dpinn::ExperimentConfig cfg = dpinn::config_from_json(j.dump(), preset);
  std::cerr << "running " << cfg.cell() << " -> " << cfg.output_dir.string() << "\n";
  const dpinn::ResultBundle b = dpinn::run_experiment(cfg);
  dpinn::emit_outputs(b, cfg);
  std::cout << "rel_l2_error " << b.rel_l2_error << "\ninterface_jump " << b.interface_jump
            << "\naccept_rate " << b.accept_rate << "\ndivergences " << b.divergences
            << "\nburn_in_divergences " << b.burn_in_divergences << "\n";
  if (b.lambda)
    std::cout << "lambda_mean " << b.lambda->mean.transpose() << "\nlambda_std "
              << b.lambda->std.transpose() << "\n";
  std::cout << "runtime_seconds " << b.runtime_seconds << "\n";
  return 0;
}

int cmd_matrix(const std::string& file, const std::optional<std::string>& preset,
               const std::optional<std::uint64_t>& seed, const std::string& out) {
  const auto rows = dpinn::run_matrix(file, out, preset, seed);
  int failed = 0;
  for (const auto& r : rows) {
    std::cout << r.name << ": " << r.status;
    if (r.bundle) std::cout << " rel_l2_error=" << r.bundle->rel_l2_error;
    if (!r.message.empty()) std::cout << " (" << r.message << ")";
    std::cout << "\n";
    failed += r.status != "ok";
  }
  std::cout << rows.size() << " experiments, " << failed << " failed; summary in "
            << (std::filesystem::path(out) / "summary.csv").string() << "\n";
  return 0;
}

int cmd_oracle(const std::string& pde, const std::string& out, const std::string& scheme,
               const std::string& ic_form, int nx, int ny, int nt, int substeps) {
  dpinn::PdeSpec spec = dpinn::PdeSpec::make(dpinn::pde_id_from_string(pde));
  if (ic_form == "normalized") spec.ic_form = dpinn::IcForm::normalized;
  else if (ic_form != "as_printed") throw std::invalid_argument("ic-form must be as_printed or normalized");
  dpinn::GridResolution res = dpinn::default_resolution(spec.id);
  if (nx > 0) res.nx = nx;
  if (ny > 0) res.ny = ny;
  if (nt > 0) res.nt = nt;
  if (substeps > 0) res.substeps = substeps;
  const dpinn::Scheme s = dpinn::scheme_from_string(scheme);
  const dpinn::GridSolution sol = dpinn::solve_reference(spec, res, s);
  dpinn::write_grid_solution(sol, spec, s, out);
  std::cout << "wrote " << (std::filesystem::path(out) / "reference.csv").string() << " (" << sol.nx() << " x "
            << sol.ny() << " x " << sol.nt() << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian PINNs with domain decomposition"};
  app.require_subcommand(1);

  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--preset", preset, "Scale preset")->check(CLI::IsMember({"desk", "paper"}));
    sub->add_option("--seed", seed, "Experiment seed");
  };

  std::string config;
  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory");
  add_common(run);

  std::string matrix_file, matrix_out = "out";
  auto* matrix = app.add_subcommand("matrix", "Run a matrix of experiments");
  matrix->add_option("--file", matrix_file, "Matrix JSON")->required()->check(CLI::ExistingFile);
  matrix->add_option("--out", matrix_out, "Output directory")->capture_default_str();
  add_common(matrix);

  std::string pde, oracle_out, scheme = "crank_nicolson", ic_form = "as_printed";
  int nx = 0, ny = 0, nt = 0, substeps = 0;
  auto* oracle = app.add_subcommand("oracle", "Write a finite-difference reference solution");
  oracle->add_option("--pde", pde, "burgers, fisher_kpp, fokker_planck_1d, fokker_planck_2d, allen_cahn")
      ->required();
  oracle->add_option("--out", oracle_out, "Output directory")->required();
  oracle->add_option("--scheme", scheme, "crank_nicolson or explicit_rk4")->capture_default_str();
  oracle->add_option("--ic-form", ic_form, "Fokker-Planck IC: as_printed or normalized")->capture_default_str();
  oracle->add_option("--nx", nx, "Grid points in x");
  oracle->add_option("--ny", ny, "Grid points in y (2D)");
  oracle->add_option("--nt", nt, "Stored time levels");
  oracle->add_option("--substeps", substeps, "Steps per stored level");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, preset, seed, out);
    if (*matrix) return cmd_matrix(matrix_file, preset, seed, matrix_out);
    if (*oracle) return cmd_oracle(pde, oracle_out, scheme, ic_form, nx, ny, nt, substeps);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
