#pragma once

// Domain decomposition, training-set sampling and the dataset CSV format.

#include "dpinn/oracle.hpp"
#include "dpinn/pde.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace dpinn {

/// Non-overlapping split of the x-axis into n_subdomains = cuts + 1 slabs.
/// Subdomain q spans [cut_{q-1}, cut_q]; interface q separates q and q + 1.
struct DecompositionSpec {
  std::vector<double> cuts;

  int n_subdomains() const { return static_cast<int>(cuts.size()) + 1; }
  void validate(const PdeSpec& spec) const;
  Interval x_range(int q, const PdeSpec& spec) const;
  /// Subdomain containing x; points on a cut go to the lower index.
  int locate(double x) const;
  bool equal_sized(const PdeSpec& spec, double tol = 1e-9) const;

  static DecompositionSpec equal(const PdeSpec& spec, int n_subdomains);
};

struct NoiseSpec {
  double level = 0.0;
  std::vector<double> per_subdomain_levels;  ///< overrides `level` when non-empty
  std::uint64_t seed = 0;
  /// Lower bound of the data / IC / BC likelihood stds.
  double sigma_floor = 0.01;
  /// Std of the residual and interface likelihood terms.
  double sigma_residual = 0.01;

  double level_for(int q) const {
    return per_subdomain_levels.empty() ? level : per_subdomain_levels.at(q);
  }
  double max_level() const;
  void validate(int n_subdomains) const;
};

enum class Scenario { BI, BIC, RD };
std::string_view to_string(Scenario s);
Scenario scenario_from_string(std::string_view name);

enum class ProblemKind { forward, inverse };

/// Point counts. Per-subdomain vectors have n_subdomains entries; per-cut
/// vectors have n_subdomains - 1.
struct Budget {
  std::vector<int> bc, ic, phi, data;
  std::vector<int> cdc, interface_data;

  void validate(int n_subdomains, Scenario scenario) const;
};

/// Default point counts for a scenario, following the standard budget table
/// (single-domain rows when n_subdomains == 1).
Budget default_budget(const PdeSpec& spec, Scenario scenario, ProblemKind problem,
                      const DecompositionSpec& decomp);

/// One data category. Points are columns of an input_dim x N matrix.
struct PointSet {
  Eigen::MatrixXd points;
  Eigen::VectorXd values;
  Eigen::VectorXd sigmas;
  std::vector<int> subdomain;

  Eigen::Index size() const { return points.cols(); }
  void reserve(int input_dim, Eigen::Index n);
  void push(std::span<const double> point, double value, double sigma, int q);
  /// Column indices of points assigned to subdomain q, in order.
  std::vector<Eigen::Index> indices_of(int q) const;
};

/// D = D_u + D_phi + D_ic + D_bc + D_cdc. Interface (cdc) points carry the
/// lower subdomain index; `cdc.sigmas` holds the average-continuity std and
/// `cdc_sigma_flux` the flux-continuity std. `cdc.values` is unused (0).
struct TrainingSet {
  int input_dim = 2;
  int n_subdomains = 1;
  PointSet u, phi, ic, bc, cdc;
  Eigen::VectorXd cdc_sigma_flux;

  /// Checks stds, dimensions and subdomain membership.
  void validate(const PdeSpec& spec, const DecompositionSpec& decomp) const;
};

/// Draws a training set from a reference solution. Point locations and noise
/// come from two independent streams derived from noise.seed, so changing the
/// noise level does not move the points.
TrainingSet sample_training_set(const GridSolution& solution, const PdeSpec& spec,
                                const DecompositionSpec& decomp, Scenario scenario,
                                const Budget& budget, const NoiseSpec& noise);

/// Dataset CSV: a `# dpinn-dataset schema=1` line, then
/// `category,subdomain,x[,y],t,value,sigma`. For cdc rows `sigma` is the
/// average-continuity std and `value` the flux-continuity std.
void export_dataset(const TrainingSet& ts, const std::filesystem::path& path);
TrainingSet import_dataset(const std::filesystem::path& path);

}  // namespace dpinn
