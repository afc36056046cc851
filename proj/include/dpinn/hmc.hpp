#pragma once

// Hamiltonian Monte Carlo with an identity mass matrix, leapfrog
// integration and dual-averaging step-size adaptation during burn-in.

#include "dpinn/posterior.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpinn {

struct HmcConfig {
  double step_size = 0.01;  ///< initial step size
  int n_leapfrog = 50;
  int burn_in = 1000;
  int n_samples = 1500;
  std::uint64_t seed = 0;
  bool adapt = true;
  double target_accept = 0.75;
  /// Energy error above which a trajectory counts as divergent.
  double divergence_threshold = 1000.0;
  int max_consecutive_divergences = 100;

  void validate() const;
  bool operator==(const HmcConfig&) const = default;
};

/// Log-density and its gradient at a state. Throws EvaluationError when the
/// density cannot be evaluated.
using LogDensityFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

class ChainAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Chain {
  std::vector<Eigen::VectorXd> samples;
  std::vector<double> log_density;
  double accept_rate = 0.0;         ///< over the sampling phase
  double burn_in_accept_rate = 0.0;
  int divergence_count = 0;         ///< over the sampling phase
  int burn_in_divergence_count = 0;
  double step_size = 0.0;           ///< step size used for sampling
};

/// Velocity Verlet for H(q, p) = -log pi(q) + |p|^2 / 2. On entry `grad` is
/// the log-density gradient at `q`; on exit q, p, grad and the returned log
/// density belong to the end point. Returns std::nullopt when a non-finite
/// value is met.
std::optional<double> leapfrog(Eigen::VectorXd& q, Eigen::VectorXd& p, Eigen::VectorXd& grad,
                               double step_size, int n_steps, const LogDensityFn& log_density);

/// Where and how often run_chain writes its checkpoint. `header` is stored
/// verbatim (a JSON object) and must match on resume.
struct CheckpointOptions {
  std::filesystem::path path;
  int every = 50;
  std::string header = "{}";
  bool resume = false;
};

Chain run_chain(const LogDensityFn& log_density, const HmcConfig& cfg, const Eigen::VectorXd& init,
                const CheckpointOptions* checkpoint = nullptr);
Chain run_chain(const Posterior& posterior, const HmcConfig& cfg, const Eigen::VectorXd& init,
                const CheckpointOptions* checkpoint = nullptr);

/// Posterior-predictive mean and population std at eval points (columns),
/// each evaluated with the network of the subdomain containing it.
struct PredictiveSummary {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  /// Inverse mode: effective coefficient per sample (rows) and its moments.
  Eigen::MatrixXd lambda_samples;
  Eigen::VectorXd lambda_mean;
  Eigen::VectorXd lambda_std;
};

PredictiveSummary predictive_summary(const Chain& chain, const Posterior& posterior,
                                     const Eigen::MatrixXd& eval_points);

}  // namespace dpinn
