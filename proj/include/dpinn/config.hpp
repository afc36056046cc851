#pragma once

// Experiment configuration: JSON schema 1, presets, test-matrix validation
// and matrix-file expansion.

#include "dpinn/dataset.hpp"
#include "dpinn/hmc.hpp"
#include "dpinn/network.hpp"
#include "dpinn/oracle.hpp"
#include "dpinn/pde.hpp"
#include "dpinn/posterior.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dpinn {

struct PosteriorOptions {
  double prior_std_theta = 1.0;
  double lambda_prior_mean = 0.0;
  double lambda_prior_std = 1.0;
  double soft_constraint_sigma = 0.05;
  /// Interface stds; 0 means "same as the residual std".
  double sigma_avg = 0.0;
  double sigma_flux = 0.0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  PdeId pde = PdeId::fokker_planck_1d;
  ProblemKind problem = ProblemKind::forward;
  int dims = 1;
  Scenario scenario = Scenario::BI;
  NoiseSpec noise;
  bool noise_seed_set = false;
  DecompositionSpec decomp;
  std::optional<Budget> budget;
  LambdaMode constraint_mode = LambdaMode::forward;
  LambdaTransform lambda_transform = LambdaTransform::exp;
  HmcConfig hmc;
  bool hmc_seed_set = false;
  NetworkArch arch;
  InitRule init = InitRule::xavier;
  std::string preset = "desk";
  std::vector<double> snapshot_times{0.5};
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  bool extended = false;
  IcForm ic_form = IcForm::as_printed;
  FluxForm flux_form = FluxForm::normal_derivative;
  bool mirrored_interface = false;
  bool parallel = false;
  PosteriorOptions posterior;
  std::optional<GridResolution> resolution;
  Scheme scheme = Scheme::crank_nicolson;
  /// Evaluation grid per snapshot; 0 picks 201 points in 1D and 41 x 41 in 2D.
  int eval_nx = 0;
  int eval_ny = 0;
  int checkpoint_every = 50;
  bool resume = false;

  PdeSpec pde_spec() const;
  /// `budget` when set, otherwise the default budget for this setup.
  Budget effective_budget() const;
  /// Test-matrix axis implied by the decomposition and noise layout:
  /// "base", "DN" (uneven noise), "DS" (uneven sizes), "DNS" (both) or "2D".
  std::string axis() const;
  /// Matrix cell label, e.g. "FP 1D / DS / BIC / Fokker-Planck / 5%".
  std::string cell() const;
  /// Structural checks plus membership in the supported test matrix unless
  /// `extended` is set.
  void validate() const;
};

struct Preset {
  int burn_in;
  int n_samples;
  int hidden_width;
  int hidden_layers;
};
Preset preset_values(const std::string& name);

/// Parses a schema-1 config. `preset_override` replaces the file's preset;
/// explicit hmc / network fields in the file still take precedence.
ExperimentConfig config_from_json(const std::string& text,
                                  const std::optional<std::string>& preset_override = std::nullopt);
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::optional<std::string>& preset_override = std::nullopt);
/// Canonical JSON echo of a config (stable key order).
std::string config_to_json(const ExperimentConfig& cfg);

struct MatrixEntry {
  std::string name;
  std::string config_json;  ///< merged config, ready for config_from_json
};

/// Matrix file: {"schema": 1, "base": {...}, "experiments": [{...}, ...],
/// "sweep": {"noise.level": [...], ...}}. Each experiment is merged over
/// `base`, then expanded over the cartesian product of `sweep` (dotted keys
/// address nested fields). With no "experiments" key the base alone is
/// swept; an explicit empty list yields no entries. Each entry's output_dir
/// is `<out>/<name>`.
std::vector<MatrixEntry> expand_matrix(const std::string& text, const std::filesystem::path& out);

}  // namespace dpinn
