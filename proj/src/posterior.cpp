#include "dpinn/posterior.hpp"

#include "dpinn/io.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>

namespace dpinn {

std::string_view to_string(LambdaMode m) {
  switch (m) {
    case LambdaMode::forward: return "forward";
    case LambdaMode::inverse_none: return "none";
    case LambdaMode::inverse_soft: return "soft";
    case LambdaMode::inverse_hard: return "hard";
  }
  return "?";
}

LambdaMode lambda_mode_from_string(std::string_view name) {
  if (name == "forward") return LambdaMode::forward;
  if (name == "none" || name == "inverse_none") return LambdaMode::inverse_none;
  if (name == "soft" || name == "inverse_soft") return LambdaMode::inverse_soft;
  if (name == "hard" || name == "inverse_hard") return LambdaMode::inverse_hard;
  throw std::invalid_argument("unknown constraint mode '" + std::string(name) + "'");
}

std::string_view to_string(LambdaTransform t) {
  return t == LambdaTransform::exp ? "exp" : "identity";
}

LambdaTransform lambda_transform_from_string(std::string_view name) {
  if (name == "exp") return LambdaTransform::exp;
  if (name == "identity") return LambdaTransform::identity;
  throw std::invalid_argument("unknown lambda transform '" + std::string(name) + "'");
}

int PosteriorSpec::lambda_size() const {
  switch (mode) {
    case LambdaMode::forward: return 0;
    case LambdaMode::inverse_hard: return 1;
    default: return n_subdomains();
  }
}

void PosteriorSpec::validate() const {
  pde.validate();
  arch.validate();
  decomp.validate(pde);
  if (arch.input_dim != pde.input_dim())
    throw std::invalid_argument("network input_dim does not match the PDE");
  data.validate(pde, decomp);
  if (!(prior_std_theta > 0.0) || !(lambda_prior_std > 0.0) || !(soft_constraint_sigma > 0.0))
    throw std::invalid_argument("posterior stds must be > 0");
  if (n_subdomains() > 1 && data.cdc.size() == 0)
    throw std::invalid_argument("interface points are required with more than one subdomain");
}

double log_lik_gaussian_block(const Eigen::Ref<const Eigen::VectorXd>& predictions,
                              const Eigen::Ref<const Eigen::VectorXd>& targets,
                              const Eigen::Ref<const Eigen::VectorXd>& sigmas) {
  if (predictions.size() != targets.size() || predictions.size() != sigmas.size())
    throw std::invalid_argument("likelihood block length mismatch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < predictions.size(); ++i) {
    const double s = sigmas[i];
    if (!(s > 0.0)) throw std::invalid_argument("likelihood std must be > 0");
    const double r = predictions[i] - targets[i];
    sum += -0.5 * std::log(2.0 * std::numbers::pi * s * s) - r * r / (2.0 * s * s);
  }
  return sum;
}

namespace {

double log_norm(double s) { return -0.5 * std::log(2.0 * std::numbers::pi * s * s); }

void append_column(Eigen::MatrixXd& m, const Eigen::Ref<const Eigen::VectorXd>& col) {
  const Eigen::Index n = m.cols();
  m.conservativeResize(col.size(), n + 1);
  m.col(n) = col;
}

void append_value(Eigen::VectorXd& v, double x) {
  v.conservativeResize(v.size() + 1);
  v[v.size() - 1] = x;
}

template <class F>
void for_each_subdomain(int n, bool parallel, F&& f) {
  if (!parallel || n == 1) {
    for (int q = 0; q < n; ++q) f(q);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(n);
  for (int q = 0; q < n; ++q)
    pool.emplace_back([&, q] {
      try {
        f(q);
      } catch (...) {
        errors[q] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

Posterior::Posterior(PosteriorSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const int n = spec_.n_subdomains();
  const int d = spec_.pde.input_dim();
  layout_.resize(n);
  for (auto& l : layout_) {
    l.obs_points.resize(d, 0);
    l.phi_points.resize(d, 0);
    l.cdc_points.resize(d, 0);
  }
  const TrainingSet& ts = spec_.data;
  const std::array<const PointSet*, 3> obs = {&ts.u, &ts.ic, &ts.bc};
  for (int kind = 0; kind < 3; ++kind) {
    const PointSet& s = *obs[kind];
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      Layout& l = layout_[s.subdomain[i]];
      append_column(l.obs_points, s.points.col(i));
      append_value(l.obs_values, s.values[i]);
      append_value(l.obs_sigmas, s.sigmas[i]);
      l.obs_kind.push_back(kind);
    }
  }
  for (Eigen::Index i = 0; i < ts.phi.size(); ++i) {
    Layout& l = layout_[ts.phi.subdomain[i]];
    append_column(l.phi_points, ts.phi.points.col(i));
    append_value(l.phi_sigmas, ts.phi.sigmas[i]);
  }
  cdc_per_cut_.assign(std::max(n - 1, 0), 0);
  for (Eigen::Index i = 0; i < ts.cdc.size(); ++i) {
    const int c = ts.cdc.subdomain[i];
    CdcLink link{c, layout_[c].cdc_points.cols(), layout_[c + 1].cdc_points.cols(),
                 ts.cdc.sigmas[i], ts.cdc_sigma_flux[i]};
    append_column(layout_[c].cdc_points, ts.cdc.points.col(i));
    append_column(layout_[c + 1].cdc_points, ts.cdc.points.col(i));
    links_.push_back(link);
    ++cdc_per_cut_[c];
  }
}

Eigen::Ref<const Eigen::VectorXd> Posterior::theta(const Eigen::VectorXd& state, int q) const {
  const Eigen::Index p = spec_.params_per_model();
  return state.segment(q * p, p);
}

Eigen::Ref<const Eigen::VectorXd> Posterior::lambda_raw(const Eigen::VectorXd& state) const {
  return state.tail(spec_.lambda_size());
}

Eigen::VectorXd Posterior::effective_lambda(const Eigen::VectorXd& state) const {
  Eigen::VectorXd raw = lambda_raw(state);
  if (spec_.transform == LambdaTransform::exp) raw = raw.array().exp();
  return raw;
}

double Posterior::diffusion(const Eigen::VectorXd& state, int q) const {
  switch (spec_.mode) {
    case LambdaMode::forward: return spec_.pde.diffusion();
    case LambdaMode::inverse_hard: return effective_lambda(state)[0];
    default: return effective_lambda(state)[q];
  }
}

Eigen::VectorXd Posterior::initial_state(std::uint64_t seed, InitRule rule) const {
  Eigen::VectorXd state(state_size());
  const Eigen::Index p = spec_.params_per_model();
  for (int q = 0; q < spec_.n_subdomains(); ++q)
    state.segment(q * p, p) =
        init_params(spec_.arch, io::derive_seed(seed, "theta/" + std::to_string(q)), rule);
  state.tail(spec_.lambda_size()).setConstant(spec_.lambda_prior_mean);
  return state;
}

double Posterior::evaluate(const Eigen::VectorXd& state, Eigen::VectorXd* grad,
                           LogPosteriorBlocks& parts) const {
  if (state.size() != state_size()) throw std::invalid_argument("posterior state length mismatch");
  const int n = spec_.n_subdomains();
  const int d = spec_.pde.input_dim();
  const int sd = spec_.pde.spatial_dim();
  const Eigen::Index p = spec_.params_per_model();
  const bool want_grad = grad != nullptr;
  parts = {};

  // Forward sweeps: observations (order 0), collocation (order 2), interface (order 1).
  using Batches = std::array<JetBatch<double>, 3>;
  using Tapes = std::array<JetTape<double>, 3>;
  std::vector<Batches> out(n), adj(n);
  std::vector<Tapes> tapes(n);
  for_each_subdomain(n, spec_.parallel, [&](int q) {
    const Layout& l = layout_[q];
    const std::array<const Eigen::MatrixXd*, 3> pts = {&l.obs_points, &l.phi_points, &l.cdc_points};
    constexpr std::array<int, 3> orders = {0, 2, 1};
    for (int k = 0; k < 3; ++k) {
      if (pts[k]->cols() == 0) {
        out[q][k] = JetBatch<double>::zeros(d, 0, orders[k]);
      } else {
        out[q][k] = forward_jet<double>(spec_.arch, theta(state, q), *pts[k], orders[k],
                                        want_grad ? &tapes[q][k] : nullptr);
      }
      adj[q][k] = JetBatch<double>::zeros(d, pts[k]->cols(), orders[k]);
    }
  });

  std::vector<double> diff(n), d_diff(n, 0.0);
  for (int q = 0; q < n; ++q) diff[q] = diffusion(state, q);

  // Observations.
  for (int q = 0; q < n; ++q) {
    const Layout& l = layout_[q];
    const auto& u = out[q][0].u;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      const double s = l.obs_sigmas[i];
      const double r = u[i] - l.obs_values[i];
      const double v = log_norm(s) - r * r / (2.0 * s * s);
      (l.obs_kind[i] == 0 ? parts.data : l.obs_kind[i] == 1 ? parts.ic : parts.bc) += v;
      adj[q][0].u[i] = -r / (s * s);
    }
  }

  // Residuals.
  for (int q = 0; q < n; ++q) {
    const Layout& l = layout_[q];
    const JetBatch<double>& j = out[q][1];
    JetBatch<double>& a = adj[q][1];
    for (Eigen::Index i = 0; i < j.size(); ++i) {
      const ResidualPartials rp = residual_partials(
          spec_.pde, diff[q], j.u[i], {j.du.col(i).data(), std::size_t(d)},
          {j.d2u.col(i).data(), std::size_t(d)}, {l.phi_points.col(i).data(), std::size_t(d)});
      const double s = l.phi_sigmas[i];
      parts.residual += log_norm(s) - rp.phi * rp.phi / (2.0 * s * s);
      const double g = -rp.phi / (s * s);
      a.u[i] += g * rp.d_u;
      a.du.col(i) += g * rp.d_du;
      a.d2u.col(i) += g * rp.d_d2u;
      d_diff[q] += g * rp.d_diffusion;
    }
  }

  // Interface continuity, written from the lower subdomain; the mirrored
  // terms from the upper side have identical misfits up to sign.
  const double weight = spec_.mirrored_interface ? 2.0 : 1.0;
  const bool conservative = spec_.pde.flux_form == FluxForm::conservative;
  std::vector<double> normal(sd, 0.0);
  normal[0] = 1.0;
  for (const CdcLink& link : links_) {
    const int lo = link.cut, hi = link.cut + 1;
    const JetBatch<double>& jl = out[lo][2];
    const JetBatch<double>& ju = out[hi][2];
    const Eigen::Index a = link.lower_col, b = link.upper_col;

    const double m = 0.5 * (jl.u[a] - ju.u[b]);
    const double sa = link.sigma_avg;
    parts.interface_avg += weight * (log_norm(sa) - m * m / (2.0 * sa * sa));
    const double gm = -weight * m / (sa * sa);
    adj[lo][2].u[a] += 0.5 * gm;
    adj[hi][2].u[b] -= 0.5 * gm;

    double dl_u, du_u;
    Eigen::VectorXd dl_du, du_du;
    const double fl = normal_flux_partials(spec_.pde, diff[lo], jl.u[a],
                                           {jl.du.col(a).data(), std::size_t(d)}, normal, dl_u, dl_du);
    const double fu = normal_flux_partials(spec_.pde, diff[hi], ju.u[b],
                                           {ju.du.col(b).data(), std::size_t(d)}, normal, du_u, du_du);
    const double mf = 0.5 * (fl - fu);
    const double sf = link.sigma_flux;
    parts.interface_flux += weight * (log_norm(sf) - mf * mf / (2.0 * sf * sf));
    const double gf = -weight * mf / (sf * sf);
    adj[lo][2].u[a] += 0.5 * gf * dl_u;
    adj[lo][2].du.col(a) += 0.5 * gf * dl_du;
    adj[hi][2].u[b] -= 0.5 * gf * du_u;
    adj[hi][2].du.col(b) -= 0.5 * gf * du_du;
    if (conservative) {
      // d flux / dD = -du/dn on each side.
      d_diff[lo] += 0.5 * gf * -jl.du(0, a);
      d_diff[hi] -= 0.5 * gf * -ju.du(0, b);
    }
  }

  // Soft coupling of neighbouring coefficients, one replica per interface point.
  if (spec_.mode == LambdaMode::inverse_soft) {
    const double s = spec_.soft_constraint_sigma;
    for (int c = 0; c + 1 < n; ++c) {
      const double reps = cdc_per_cut_[c];
      const double m = 0.5 * (diff[c] - diff[c + 1]);
      parts.soft_lambda += reps * (log_norm(s) - m * m / (2.0 * s * s));
      const double g = -reps * m / (s * s);
      d_diff[c] += 0.5 * g;
      d_diff[c + 1] -= 0.5 * g;
    }
  }

  // Priors.
  const double st = spec_.prior_std_theta;
  const auto thetas = state.head(p * n);
  parts.prior_theta = double(thetas.size()) * log_norm(st) - thetas.squaredNorm() / (2.0 * st * st);
  const int nl = spec_.lambda_size();
  const double sl = spec_.lambda_prior_std;
  const Eigen::VectorXd lam_dev =
      lambda_raw(state).array() - spec_.lambda_prior_mean;
  parts.prior_lambda = nl * log_norm(sl) - lam_dev.squaredNorm() / (2.0 * sl * sl);

  const double total = parts.total();
  if (!std::isfinite(total)) throw EvaluationError("log-posterior is not finite");
  if (!want_grad) return total;

  grad->resize(state_size());
  grad->head(p * n) = -thetas / (st * st);
  for_each_subdomain(n, spec_.parallel, [&](int q) {
    auto g = grad->segment(q * p, p);
    for (int k = 0; k < 3; ++k)
      if (out[q][k].size() > 0)
        backward<double>(spec_.arch, theta(state, q), tapes[q][k], adj[q][k], g);
  });

  if (nl > 0) {
    Eigen::VectorXd g_lam = -lam_dev / (sl * sl);
    const Eigen::VectorXd eff = effective_lambda(state);
    auto chain = [&](int k) { return spec_.transform == LambdaTransform::exp ? eff[k] : 1.0; };
    if (spec_.mode == LambdaMode::inverse_hard) {
      double s = 0.0;
      for (int q = 0; q < n; ++q) s += d_diff[q];
      g_lam[0] += s * chain(0);
    } else {
      for (int q = 0; q < n; ++q) g_lam[q] += d_diff[q] * chain(q);
    }
    grad->tail(nl) = g_lam;
  }
  if (!grad->allFinite()) throw EvaluationError("non-finite log-posterior gradient");
  return total;
}

LogPosteriorBlocks Posterior::blocks(const Eigen::VectorXd& state) const {
  LogPosteriorBlocks parts;
  evaluate(state, nullptr, parts);
  return parts;
}

double Posterior::log_posterior(const Eigen::VectorXd& state) const {
  LogPosteriorBlocks parts;
  return evaluate(state, nullptr, parts);
}

double Posterior::value_and_gradient(const Eigen::VectorXd& state, Eigen::VectorXd& grad,
                                     LogPosteriorBlocks* parts) const {
  LogPosteriorBlocks local;
  return evaluate(state, &grad, parts ? *parts : local);
}

double log_prior(const Posterior& p, const Eigen::VectorXd& state) {
  return p.blocks(state).prior();
}

double log_lik_residual(const Posterior& p, const Eigen::VectorXd& state) {
  return p.blocks(state).residual;
}

double log_lik_interface(const Posterior& p, const Eigen::VectorXd& state) {
  return p.blocks(state).interface();
}

double log_lik_soft_lambda(const Posterior& p, const Eigen::VectorXd& state) {
  if (p.spec().mode != LambdaMode::inverse_soft)
    throw std::logic_error("soft-constraint block exists only in inverse_soft mode");
  return p.blocks(state).soft_lambda;
}

double log_posterior(const Posterior& p, const Eigen::VectorXd& state) {
  return p.log_posterior(state);
}

Eigen::VectorXd grad_log_posterior(const Posterior& p, const Eigen::VectorXd& state) {
  Eigen::VectorXd g;
  p.value_and_gradient(state, g);
  return g;
}

}  // namespace dpinn
