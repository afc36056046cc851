#pragma once

// Log-posterior over the concatenated parameters of all subdomain networks
// and, in inverse mode, the inferred diffusion coefficients.

#include "dpinn/dataset.hpp"
#include "dpinn/network.hpp"
#include "dpinn/pde.hpp"

#include <Eigen/Dense>

#include <string_view>
#include <vector>

namespace dpinn {

enum class LambdaMode { forward, inverse_none, inverse_soft, inverse_hard };
enum class LambdaTransform { identity, exp };

std::string_view to_string(LambdaMode m);
LambdaMode lambda_mode_from_string(std::string_view name);
std::string_view to_string(LambdaTransform t);
LambdaTransform lambda_transform_from_string(std::string_view name);

struct PosteriorSpec {
  PdeSpec pde;
  NetworkArch arch;
  DecompositionSpec decomp;
  TrainingSet data;
  LambdaMode mode = LambdaMode::forward;
  LambdaTransform transform = LambdaTransform::exp;
  double prior_std_theta = 1.0;
  double lambda_prior_mean = 0.0;
  double lambda_prior_std = 1.0;
  double soft_constraint_sigma = 0.05;
  /// Adds the interface terms written from the upper subdomain as well.
  bool mirrored_interface = false;
  /// Evaluates subdomain networks on separate threads.
  bool parallel = false;

  int n_subdomains() const { return decomp.n_subdomains(); }
  Eigen::Index params_per_model() const { return arch.parameter_count(); }
  /// 0 (forward), 1 (hard) or n_subdomains (none / soft).
  int lambda_size() const;
  Eigen::Index state_size() const {
    return params_per_model() * n_subdomains() + lambda_size();
  }
  void validate() const;
};

/// Individual terms of the log-posterior.
struct LogPosteriorBlocks {
  double prior_theta = 0.0;
  double prior_lambda = 0.0;
  double data = 0.0;
  double residual = 0.0;
  double ic = 0.0;
  double bc = 0.0;
  double interface_avg = 0.0;
  double interface_flux = 0.0;
  double soft_lambda = 0.0;

  double prior() const { return prior_theta + prior_lambda; }
  double interface() const { return interface_avg + interface_flux; }
  double total() const {
    return prior() + data + residual + ic + bc + interface() + soft_lambda;
  }
};

/// Sum_i -0.5 ln(2 pi sigma_i^2) - (pred_i - targ_i)^2 / (2 sigma_i^2).
double log_lik_gaussian_block(const Eigen::Ref<const Eigen::VectorXd>& predictions,
                              const Eigen::Ref<const Eigen::VectorXd>& targets,
                              const Eigen::Ref<const Eigen::VectorXd>& sigmas);

/// A PosteriorSpec with the point batches of every subdomain network laid
/// out for batched evaluation.
class Posterior {
 public:
  explicit Posterior(PosteriorSpec spec);

  const PosteriorSpec& spec() const { return spec_; }
  Eigen::Index state_size() const { return spec_.state_size(); }

  Eigen::Ref<const Eigen::VectorXd> theta(const Eigen::VectorXd& state, int q) const;
  Eigen::Ref<const Eigen::VectorXd> lambda_raw(const Eigen::VectorXd& state) const;
  /// transform(raw): one entry per subdomain (none / soft), one (hard) or
  /// none (forward).
  Eigen::VectorXd effective_lambda(const Eigen::VectorXd& state) const;
  /// Diffusion coefficient used in subdomain q's residual.
  double diffusion(const Eigen::VectorXd& state, int q) const;

  /// Initial state: init_params per subdomain with seeds derived from
  /// `seed`, λ raw set to the prior mean.
  Eigen::VectorXd initial_state(std::uint64_t seed, InitRule rule = InitRule::xavier) const;

  LogPosteriorBlocks blocks(const Eigen::VectorXd& state) const;
  double log_posterior(const Eigen::VectorXd& state) const;
  /// Value and gradient; throws EvaluationError on non-finite results.
  double value_and_gradient(const Eigen::VectorXd& state, Eigen::VectorXd& grad,
                            LogPosteriorBlocks* parts = nullptr) const;

 private:
  struct Layout {
    Eigen::MatrixXd obs_points;  // order 0: u, ic and bc points
    Eigen::VectorXd obs_values, obs_sigmas;
    std::vector<int> obs_kind;  // 0 = u, 1 = ic, 2 = bc
    Eigen::MatrixXd phi_points;  // order 2
    Eigen::VectorXd phi_sigmas;
    Eigen::MatrixXd cdc_points;  // order 1, both sides of adjacent cuts
  };
  struct CdcLink {
    int cut;
    Eigen::Index lower_col, upper_col;
    double sigma_avg, sigma_flux;
  };

  double evaluate(const Eigen::VectorXd& state, Eigen::VectorXd* grad,
                  LogPosteriorBlocks& parts) const;

  PosteriorSpec spec_;
  std::vector<Layout> layout_;
  std::vector<CdcLink> links_;
  std::vector<int> cdc_per_cut_;
};

// Per-block views following the operation names used across the library.
double log_prior(const Posterior& p, const Eigen::VectorXd& state);
double log_lik_residual(const Posterior& p, const Eigen::VectorXd& state);
double log_lik_interface(const Posterior& p, const Eigen::VectorXd& state);
/// Throws std::logic_error unless the mode is inverse_soft.
double log_lik_soft_lambda(const Posterior& p, const Eigen::VectorXd& state);
double log_posterior(const Posterior& p, const Eigen::VectorXd& state);
Eigen::VectorXd grad_log_posterior(const Posterior& p, const Eigen::VectorXd& state);

}  // namespace dpinn
