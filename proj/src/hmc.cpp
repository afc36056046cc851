#include "dpinn/hmc.hpp"

#include "dpinn/io.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace dpinn {

void HmcConfig::validate() const {
  if (!(step_size > 0.0)) throw std::invalid_argument("hmc.step_size must be > 0");
  if (n_leapfrog < 1) throw std::invalid_argument("hmc.n_leapfrog must be >= 1");
  if (burn_in < 0) throw std::invalid_argument("hmc.burn_in must be >= 0");
  if (n_samples < 1) throw std::invalid_argument("hmc.n_samples must be >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("hmc.target_accept must lie in (0, 1)");
  if (!(divergence_threshold > 0.0)) throw std::invalid_argument("hmc.divergence_threshold must be > 0");
  if (max_consecutive_divergences < 1)
    throw std::invalid_argument("hmc.max_consecutive_divergences must be >= 1");
}

std::optional<double> leapfrog(Eigen::VectorXd& q, Eigen::VectorXd& p, Eigen::VectorXd& grad,
                               double step_size, int n_steps, const LogDensityFn& log_density) {
  double logp = 0.0;
  try {
    p += 0.5 * step_size * grad;
    for (int s = 0; s < n_steps; ++s) {
      q += step_size * p;
      logp = log_density(q, grad);
      if (!std::isfinite(logp) || !grad.allFinite()) return std::nullopt;
      p += (s + 1 == n_steps ? 0.5 : 1.0) * step_size * grad;
    }
  } catch (const EvaluationError&) {
    return std::nullopt;
  }
  if (!p.allFinite() || !q.allFinite()) return std::nullopt;
  return logp;
}

namespace {

using nlohmann::json;

json config_json(const HmcConfig& c) {
  return {{"step_size", c.step_size},
          {"n_leapfrog", c.n_leapfrog},
          {"burn_in", c.burn_in},
          {"n_samples", c.n_samples},
          {"seed", c.seed},
          {"adapt", c.adapt},
          {"target_accept", c.target_accept},
          {"divergence_threshold", c.divergence_threshold},
          {"max_consecutive_divergences", c.max_consecutive_divergences}};
}

// Dual averaging of log step size.
struct StepAdapter {
  double mu = 0.0, h_bar = 0.0, log_eps = 0.0, log_eps_bar = 0.0;
  static constexpr double gamma = 0.05, t0 = 10.0, kappa = 0.75;

  explicit StepAdapter(double eps0) : mu(std::log(10.0 * eps0)), log_eps(std::log(eps0)) {}

  void update(int m, double alpha, double target) {
    const double w = 1.0 / (m + t0);
    h_bar = (1.0 - w) * h_bar + w * (target - alpha);
    log_eps = mu - std::sqrt(double(m)) / gamma * h_bar;
    const double eta = std::pow(double(m), -kappa);
    log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar;
  }
};

struct SamplerState {
  int iteration = 0;
  Eigen::VectorXd q;
  double step_size = 0.0;
  StepAdapter adapter{1.0};
  std::mt19937_64 rng;
  std::normal_distribution<double> normal{0.0, 1.0};
  long accepted = 0, burn_accept = 0;
  double burn_alpha_sum = 0.0;
  int divergences = 0, burn_divergences = 0, consecutive = 0;
  Chain chain;
};

template <class T>
std::string stream_state(const T& obj) {
  std::ostringstream os;
  os << obj;
  return os.str();
}

template <class T>
void restore_state(T& obj, const std::string& s) {
  std::istringstream is(s);
  is >> obj;
  if (!is) throw std::runtime_error("checkpoint: malformed random-engine state");
}

json checkpoint_json(const SamplerState& s) {
  return {{"iteration", s.iteration},
          {"step_size", s.step_size},
          {"adapter", {s.adapter.mu, s.adapter.h_bar, s.adapter.log_eps, s.adapter.log_eps_bar}},
          {"rng", stream_state(s.rng)},
          {"normal", stream_state(s.normal)},
          {"accepted", s.accepted},
          {"burn_accept", s.burn_accept},
          {"burn_alpha_sum", s.burn_alpha_sum},
          {"divergences", s.divergences},
          {"burn_divergences", s.burn_divergences},
          {"consecutive", s.consecutive},
          {"state", std::vector<double>(s.q.data(), s.q.data() + s.q.size())}};
}

void apply_checkpoint(SamplerState& s, const json& j) {
  s.iteration = j.at("iteration");
  s.step_size = j.at("step_size");
  const auto& a = j.at("adapter");
  s.adapter.mu = a.at(0);
  s.adapter.h_bar = a.at(1);
  s.adapter.log_eps = a.at(2);
  s.adapter.log_eps_bar = a.at(3);
  restore_state(s.rng, j.at("rng").get<std::string>());
  restore_state(s.normal, j.at("normal").get<std::string>());
  s.accepted = j.at("accepted");
  s.burn_accept = j.at("burn_accept");
  s.burn_alpha_sum = j.at("burn_alpha_sum");
  s.divergences = j.at("divergences");
  s.burn_divergences = j.at("burn_divergences");
  s.consecutive = j.at("consecutive");
  const auto v = j.at("state").get<std::vector<double>>();
  s.q = Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
}

std::string header_line(const HmcConfig& cfg, const CheckpointOptions& opt, Eigen::Index n) {
  json h = {{"format", "dpinn-chain"},
            {"schema", 1},
            {"hmc", config_json(cfg)},
            {"state_size", n},
            {"run", json::parse(opt.header)}};
  return "# " + h.dump();
}

std::string columns_line(Eigen::Index n) {
  std::string s = "iteration,log_density";
  for (Eigen::Index i = 0; i < n; ++i) s += ",s" + std::to_string(i);
  return s;
}

void write_sample(std::ostream& out, int iteration, double logp, const Eigen::VectorXd& q) {
  out << iteration << ',' << io::format_double(logp);
  for (Eigen::Index i = 0; i < q.size(); ++i) out << ',' << io::format_double(q[i]);
  out << '\n';
}

// Restores the sampler from the last checkpoint line in `path`. Returns
// false when the file holds no checkpoint yet.
bool load_checkpoint(const std::filesystem::path& path, const std::string& expected_header,
                     SamplerState& s) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::string line;
  if (!std::getline(in, line)) return false;
  if (line != expected_header)
    throw std::runtime_error("checkpoint " + path.string() + " belongs to a different run");
  std::getline(in, line);  // column names
  std::vector<std::pair<int, std::string>> rows;
  std::optional<json> last;
  while (std::getline(in, line)) {
    if (line.rfind("#checkpoint ", 0) == 0) {
      last = json::parse(line.substr(12));
    } else if (!line.empty()) {
      const auto comma = line.find(',');
      rows.emplace_back(static_cast<int>(io::parse_int(std::string_view(line).substr(0, comma))),
                        line);
    }
  }
  if (!last) return false;
  apply_checkpoint(s, *last);
  for (const auto& [it, text] : rows) {
    if (it >= s.iteration) continue;
    const auto f = io::split(text);
    Eigen::VectorXd v(Eigen::Index(f.size()) - 2);
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = io::parse_double(f[i + 2]);
    s.chain.samples.push_back(std::move(v));
    s.chain.log_density.push_back(io::parse_double(f[1]));
  }
  return true;
}

}  // namespace

Chain run_chain(const LogDensityFn& log_density, const HmcConfig& cfg, const Eigen::VectorXd& init,
                const CheckpointOptions* checkpoint) {
  cfg.validate();
  if (!init.allFinite()) throw std::invalid_argument("initial state has non-finite entries");
  const Eigen::Index n = init.size();
  const int total = cfg.burn_in + cfg.n_samples;

  SamplerState s;
  s.q = init;
  s.step_size = cfg.step_size;
  s.adapter = StepAdapter(cfg.step_size);
  s.rng.seed(cfg.seed);

  std::ofstream out;
  if (checkpoint) {
    const std::string header = header_line(cfg, *checkpoint, n);
    const bool resumed = checkpoint->resume && load_checkpoint(checkpoint->path, header, s);
    if (checkpoint->path.has_parent_path())
      std::filesystem::create_directories(checkpoint->path.parent_path());
    out.open(checkpoint->path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + checkpoint->path.string());
    out << header << '\n' << columns_line(n) << '\n';
    if (resumed) {
      for (std::size_t k = 0; k < s.chain.samples.size(); ++k)
        write_sample(out, cfg.burn_in + int(k), s.chain.log_density[k], s.chain.samples[k]);
      out << "#checkpoint " << checkpoint_json(s).dump() << '\n';
    }
  }

  Eigen::VectorXd grad(n);
  double logp = 0.0;
  try {
    logp = log_density(s.q, grad);
  } catch (const EvaluationError& e) {
    throw std::invalid_argument(std::string("initial state cannot be evaluated: ") + e.what());
  }
  if (!std::isfinite(logp)) throw std::invalid_argument("initial state has non-finite log density");

  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Eigen::VectorXd q1, p(n), p1, g1;
  for (; s.iteration < total; ++s.iteration) {
    const int it = s.iteration;
    for (Eigen::Index i = 0; i < n; ++i) p[i] = s.normal(s.rng);
    const double h0 = -logp + 0.5 * p.squaredNorm();
    q1 = s.q;
    p1 = p;
    g1 = grad;
    const std::optional<double> lp1 = leapfrog(q1, p1, g1, s.step_size, cfg.n_leapfrog, log_density);
    double alpha = 0.0;
    bool divergent = !lp1.has_value();
    if (!divergent) {
      const double dh = (-*lp1 + 0.5 * p1.squaredNorm()) - h0;
      if (!std::isfinite(dh) || dh > cfg.divergence_threshold) {
        divergent = true;
      } else {
        alpha = dh <= 0.0 ? 1.0 : std::exp(-dh);
      }
    }
    const double u = uniform(s.rng);
    const bool accept = !divergent && u < alpha;
    if (accept) {
      s.q.swap(q1);
      grad.swap(g1);
      logp = *lp1;
    }
    if (divergent) {
      ++(it < cfg.burn_in ? s.burn_divergences : s.divergences);
      if (++s.consecutive >= cfg.max_consecutive_divergences)
        throw ChainAborted("HMC aborted after " + std::to_string(s.consecutive) +
                           " consecutive divergent trajectories at iteration " + std::to_string(it) +
                           " (step size " + io::format_double(s.step_size) + ")");
    } else {
      s.consecutive = 0;
    }

    if (it < cfg.burn_in) {
      s.burn_accept += accept;
      s.burn_alpha_sum += alpha;
      if (cfg.adapt) {
        s.adapter.update(it + 1, alpha, cfg.target_accept);
        s.step_size = std::exp(it + 1 == cfg.burn_in ? s.adapter.log_eps_bar : s.adapter.log_eps);
      }
    } else {
      s.accepted += accept;
      s.chain.samples.push_back(s.q);
      s.chain.log_density.push_back(logp);
      if (out.is_open()) write_sample(out, it, logp, s.q);
    }

    if (out.is_open() && ((it + 1) % std::max(checkpoint->every, 1) == 0 || it + 1 == total)) {
      ++s.iteration;
      out << "#checkpoint " << checkpoint_json(s).dump() << '\n';
      out.flush();
      --s.iteration;
    }
  }

  Chain chain = std::move(s.chain);
  chain.accept_rate = double(s.accepted) / cfg.n_samples;
  chain.burn_in_accept_rate = cfg.burn_in > 0 ? double(s.burn_accept) / cfg.burn_in : 0.0;
  chain.divergence_count = s.divergences;
  chain.burn_in_divergence_count = s.burn_divergences;
  chain.step_size = s.step_size;
  return chain;
}

Chain run_chain(const Posterior& posterior, const HmcConfig& cfg, const Eigen::VectorXd& init,
                const CheckpointOptions* checkpoint) {
  if (init.size() != posterior.state_size())
    throw std::invalid_argument("initial state length does not match the posterior");
  return run_chain(
      [&](const Eigen::VectorXd& q, Eigen::VectorXd& g) { return posterior.value_and_gradient(q, g); },
      cfg, init, checkpoint);
}

PredictiveSummary predictive_summary(const Chain& chain, const Posterior& posterior,
                                     const Eigen::MatrixXd& eval_points) {
  if (chain.samples.empty()) throw std::invalid_argument("chain has no samples");
  const PosteriorSpec& spec = posterior.spec();
  const int d = spec.pde.input_dim();
  if (eval_points.rows() != d) throw std::invalid_argument("eval point dimension mismatch");
  const int nq = spec.n_subdomains();
  const Eigen::Index m = eval_points.cols();
  const Eigen::Index ns = Eigen::Index(chain.samples.size());

  std::vector<std::vector<Eigen::Index>> cols(nq);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (int k = 0; k < spec.pde.spatial_dim(); ++k)
      if (!spec.pde.spatial_bounds[k].contains(eval_points(k, i), 1e-12))
        throw std::invalid_argument("eval point outside all subdomains");
    cols[spec.decomp.locate(eval_points(0, i))].push_back(i);
  }
  std::vector<Eigen::MatrixXd> pts(nq);
  for (int q = 0; q < nq; ++q) pts[q] = eval_points(Eigen::all, cols[q]);

  Eigen::MatrixXd values(ns, m);
  for (Eigen::Index s = 0; s < ns; ++s) {
    const Eigen::VectorXd& state = chain.samples[s];
    for (int q = 0; q < nq; ++q) {
      if (cols[q].empty()) continue;
      const JetBatch<double> b = forward_jet<double>(spec.arch, posterior.theta(state, q), pts[q], 0);
      for (std::size_t k = 0; k < cols[q].size(); ++k) values(s, cols[q][k]) = b.u[Eigen::Index(k)];
    }
  }

  auto moments = [ns](const Eigen::MatrixXd& v, Eigen::VectorXd& mean, Eigen::VectorXd& sd) {
    mean = v.colwise().sum().transpose() / double(ns);
    sd.resize(v.cols());
    for (Eigen::Index j = 0; j < v.cols(); ++j)
      sd[j] = std::sqrt((v.col(j).array() - mean[j]).square().sum() / double(ns));
  };

  PredictiveSummary out;
  moments(values, out.mean, out.std);
  const int nl = spec.lambda_size();
  if (nl > 0) {
    out.lambda_samples.resize(ns, nl);
    for (Eigen::Index s = 0; s < ns; ++s)
      out.lambda_samples.row(s) = posterior.effective_lambda(chain.samples[s]).transpose();
    moments(out.lambda_samples, out.lambda_mean, out.lambda_std);
  }
  return out;
}

}  // namespace dpinn
