#pragma once

// End-to-end runs: reference solve, sampling, posterior, HMC, metrics and
// result files.

#include "dpinn/config.hpp"
#include "dpinn/dataset.hpp"
#include "dpinn/hmc.hpp"
#include "dpinn/oracle.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dpinn {

struct Snapshot {
  double t = 0.0;
  Eigen::MatrixXd points;  ///< input_dim x M
  Eigen::VectorXd mean, std, reference;
  double rel_l2_error = 0.0;
  /// Largest |mean_q - mean_{q+1}| over the interface points of this slice.
  double interface_jump = 0.0;
};

struct LambdaEstimate {
  Eigen::VectorXd mean, std;
  Eigen::VectorXd abs_error_pct;  ///< |mean - true| / true * 100
  Eigen::MatrixXd samples;        ///< n_samples x n_lambda
  double truth = 0.0;
};

struct ResultBundle {
  std::string name;
  std::string cell;
  std::vector<Snapshot> snapshots;
  double rel_l2_error = 0.0;  ///< first snapshot
  double interface_jump = 0.0;  ///< max over snapshots
  double reference_max_abs = 0.0;
  std::optional<LambdaEstimate> lambda;
  double accept_rate = 0.0;
  double burn_in_accept_rate = 0.0;
  int divergences = 0;
  int burn_in_divergences = 0;
  double step_size = 0.0;
  double runtime_seconds = 0.0;
  Eigen::Index state_size = 0;
  std::vector<std::pair<std::string, Eigen::Index>> dataset_counts;
  /// Mean predictive std over eval points with |x - cut| <= radius (first
  /// snapshot, all cuts); NaN for a single subdomain.
  double near_interface_std = 0.0;
};

/// Runs the full pipeline. Writes the chain checkpoint to
/// `<output_dir>/chain.csv`. Stage failures are rethrown as
/// std::runtime_error naming the stage.
ResultBundle run_experiment(const ExperimentConfig& cfg);

/// Mean predictive std within `radius` of any cut at the first snapshot.
double near_interface_std(const ResultBundle& bundle, const ExperimentConfig& cfg, double radius);

/// summary.json (scalars and config echo, no timings), timing.json,
/// snapshot_t{T}.csv, plot.gp and, for inverse runs, lambda.csv.
void emit_outputs(const ResultBundle& bundle, const ExperimentConfig& cfg);

/// Stable text of summary.json.
std::string summary_json(const ResultBundle& bundle, const ExperimentConfig& cfg);

struct MatrixRow {
  std::string name;
  std::string status;  ///< "ok" or "error"
  std::string message;
  std::optional<ResultBundle> bundle;
};

/// Runs every entry of a matrix file in order, recording failures and
/// continuing. Writes `<out>/summary.csv` with one row per entry.
std::vector<MatrixRow> run_matrix(const std::filesystem::path& matrix_file, const std::filesystem::path& out,
                                  const std::optional<std::string>& preset_override = std::nullopt,
                                  const std::optional<std::uint64_t>& seed_override = std::nullopt);

}  // namespace dpinn
