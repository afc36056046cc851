#include "dpinn/hmc.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace dpinn;

namespace {

LogDensityFn gaussian(const Eigen::MatrixXd& precision) {
  return [precision](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
    g = -precision * q;
    return -0.5 * q.dot(precision * q);
  };
}

LogDensityFn standard_normal(int d) { return gaussian(Eigen::MatrixXd::Identity(d, d)); }

HmcConfig small_config(std::uint64_t seed) {
  HmcConfig c;
  c.step_size = 0.2;
  c.n_leapfrog = 10;
  c.burn_in = 200;
  c.n_samples = 2000;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("leapfrog conserves energy on a harmonic oscillator") {
  Eigen::VectorXd q(1), p(1), g(1);
  q << 1.0;
  p << 0.0;
  const auto f = standard_normal(1);
  const double h0 = -f(q, g) + 0.5 * p.squaredNorm();
  const auto lp = leapfrog(q, p, g, 0.01, 1000, f);
  REQUIRE(lp.has_value());
  CHECK(std::abs(-*lp + 0.5 * p.squaredNorm() - h0) < 1e-4);
}

TEST_CASE("leapfrog on a flat density keeps momentum") {
  const LogDensityFn flat = [](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
    g = Eigen::VectorXd::Zero(q.size());
    return 0.0;
  };
  Eigen::VectorXd q = Eigen::VectorXd::Zero(2), p(2), g = Eigen::VectorXd::Zero(2);
  p << 1.0, -2.0;
  leapfrog(q, p, g, 0.1, 10, flat);
  CHECK(q[0] == doctest::Approx(1.0));
  CHECK(q[1] == doctest::Approx(-2.0));
  CHECK(p == Eigen::Vector2d(1.0, -2.0));
}

TEST_CASE("leapfrog is reversible") {
  Eigen::MatrixXd prec(2, 2);
  prec << 2.0, 0.5, 0.5, 1.0;
  const auto f = gaussian(prec);
  Eigen::VectorXd q0(2), p0(2), g(2);
  q0 << 0.3, -0.7;
  p0 << 1.1, 0.4;
  Eigen::VectorXd q = q0, p = p0;
  f(q, g);
  leapfrog(q, p, g, 0.05, 40, f);
  p = -p;
  leapfrog(q, p, g, 0.05, 40, f);
  CHECK((q - q0).norm() < 1e-10);
  CHECK((p + p0).norm() < 1e-10);
}

TEST_CASE("leapfrog reports non-finite trajectories") {
  const LogDensityFn bad = [](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
    if (q[0] > 0.5) throw EvaluationError("outside");
    g = -q;
    return -0.5 * q.squaredNorm();
  };
  Eigen::VectorXd q = Eigen::VectorXd::Zero(1), p = Eigen::VectorXd::Ones(1), g = Eigen::VectorXd::Zero(1);
  CHECK_FALSE(leapfrog(q, p, g, 0.1, 20, bad).has_value());
}

TEST_CASE("standard normal moments") {
  const Chain c = run_chain(standard_normal(1), small_config(1), Eigen::VectorXd::Zero(1));
  double m = 0.0, v = 0.0;
  for (const auto& s : c.samples) m += s[0];
  m /= double(c.samples.size());
  for (const auto& s : c.samples) v += (s[0] - m) * (s[0] - m);
  v /= double(c.samples.size());
  CHECK(std::abs(m) < 0.1);
  CHECK(std::abs(v - 1.0) < 0.1);
  CHECK(c.accept_rate > 0.5);
  CHECK(c.divergence_count == 0);
}

TEST_CASE("correlated gaussian recovers its correlation") {
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 0.5, 0.5, 1.0;
  const Chain c = run_chain(gaussian(cov.inverse()), small_config(2), Eigen::VectorXd::Zero(2));
  Eigen::MatrixXd x(c.samples.size(), 2);
  for (std::size_t i = 0; i < c.samples.size(); ++i) x.row(Eigen::Index(i)) = c.samples[i].transpose();
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd s = centered.transpose() * centered / double(x.rows());
  CHECK(std::abs(s(0, 1) / std::sqrt(s(0, 0) * s(1, 1)) - 0.5) < 0.1);
}

TEST_CASE("a fixed small step is accepted almost always") {
  HmcConfig c = small_config(3);
  c.adapt = false;
  c.step_size = 0.05;
  const Chain ch = run_chain(standard_normal(3), c, Eigen::VectorXd::Zero(3));
  CHECK(ch.accept_rate > 0.9);
  CHECK(ch.step_size == 0.05);
}

TEST_CASE("adaptation reaches the target acceptance") {
  HmcConfig c = small_config(4);
  c.step_size = 2.5;
  c.burn_in = 500;
  const Chain ch = run_chain(standard_normal(10), c, Eigen::VectorXd::Zero(10));
  CHECK(ch.accept_rate > 0.55);
  CHECK(ch.accept_rate < 0.95);
  CHECK(ch.step_size < 2.5);
}

TEST_CASE("chains are deterministic per seed") {
  const Chain a = run_chain(standard_normal(2), small_config(9), Eigen::VectorXd::Zero(2));
  const Chain b = run_chain(standard_normal(2), small_config(9), Eigen::VectorXd::Zero(2));
  const Chain c = run_chain(standard_normal(2), small_config(10), Eigen::VectorXd::Zero(2));
  CHECK(a.samples == b.samples);
  CHECK(a.step_size == b.step_size);
  CHECK(a.samples != c.samples);
}

TEST_CASE("starting in the stationary distribution stays there") {
  HmcConfig c = small_config(5);
  c.burn_in = 0;
  c.adapt = false;
  c.n_samples = 3000;
  Eigen::VectorXd init(1);
  init << 0.3;
  const Chain ch = run_chain(standard_normal(1), c, init);
  double first = 0.0, second = 0.0;
  for (int i = 0; i < 1500; ++i) {
    first += ch.samples[std::size_t(i)][0] * ch.samples[std::size_t(i)][0];
    second += ch.samples[std::size_t(i + 1500)][0] * ch.samples[std::size_t(i + 1500)][0];
  }
  CHECK(std::abs(first / 1500 - 1.0) < 0.15);
  CHECK(std::abs(second / 1500 - 1.0) < 0.15);
}

TEST_CASE("persistent divergence aborts the chain") {
  const LogDensityFn cliff = [](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
    g = -q;
    if (q.norm() > 1e-3) throw EvaluationError("cliff");
    return 0.0;
  };
  HmcConfig c = small_config(6);
  c.step_size = 1.0;
  c.adapt = false;
  c.max_consecutive_divergences = 20;
  CHECK_THROWS_AS(run_chain(cliff, c, Eigen::VectorXd::Zero(2)), ChainAborted);
}

TEST_CASE("invalid configuration is rejected") {
  HmcConfig c;
  c.step_size = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = HmcConfig{};
  c.n_leapfrog = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  Eigen::VectorXd nan(1);
  nan << std::nan("");
  CHECK_THROWS_AS(run_chain(standard_normal(1), HmcConfig{}, nan), std::invalid_argument);
}

TEST_CASE("checkpoint resume reproduces an uninterrupted chain") {
  const auto dir = std::filesystem::temp_directory_path() / "dpinn_hmc_ckpt";
  std::filesystem::remove_all(dir);
  HmcConfig cfg = small_config(7);
  cfg.burn_in = 60;
  cfg.n_samples = 90;
  CheckpointOptions ck;
  ck.path = dir / "full.csv";
  ck.every = 25;
  ck.header = R"({"run":"test"})";
  const Chain full = run_chain(standard_normal(3), cfg, Eigen::VectorXd::Zero(3), &ck);

  // Crash part-way through sampling.
  int calls = 0;
  const auto base = standard_normal(3);
  const LogDensityFn crashing = [&](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
    if (++calls > 11 * 110) throw std::runtime_error("crash");
    return base(q, g);
  };
  CheckpointOptions part = ck;
  part.path = dir / "part.csv";
  CHECK_THROWS_AS(run_chain(crashing, cfg, Eigen::VectorXd::Zero(3), &part), std::runtime_error);
  part.resume = true;
  const Chain resumed = run_chain(standard_normal(3), cfg, Eigen::VectorXd::Zero(3), &part);
  CHECK(resumed.samples == full.samples);
  CHECK(resumed.log_density == full.log_density);
  CHECK(resumed.accept_rate == full.accept_rate);
  CHECK(resumed.step_size == full.step_size);

  // Same header and sample rows; checkpoint lines differ in number.
  auto rows = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);)
      if (line.rfind("#checkpoint", 0) != 0) out.push_back(line);
    return out;
  };
  CHECK(rows(ck.path) == rows(part.path));
  CHECK(rows(ck.path).size() == 2 + 90);

  CheckpointOptions other = ck;
  other.header = R"({"run":"other"})";
  other.resume = true;
  CHECK_THROWS(run_chain(standard_normal(3), cfg, Eigen::VectorXd::Zero(3), &other));
  std::filesystem::remove_all(dir);
}

TEST_CASE("predictive summary of a two-sample chain") {
  PosteriorSpec ps;
  ps.pde = PdeSpec::make(PdeId::fokker_planck_1d);
  ps.arch = {2, 1, 4, Activation::tanh};
  ps.decomp = DecompositionSpec::equal(ps.pde, 2);
  ps.data.n_subdomains = 2;
  for (PointSet* s : {&ps.data.u, &ps.data.phi, &ps.data.ic, &ps.data.bc, &ps.data.cdc}) s->points.resize(2, 0);
  const double cut[2] = {0.0, 0.5};
  ps.data.cdc.push(cut, 0.0, 0.01, 0);
  ps.data.cdc_sigma_flux = Eigen::VectorXd::Constant(1, 0.01);
  const Posterior post(ps);
  const Eigen::Index n = ps.params_per_model();

  // Constant networks: lower 1 and 3, upper -2 and -2.
  Chain chain;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(post.state_size()), s2 = s1;
  s1[n - 1] = 1.0;
  s2[n - 1] = 3.0;
  s1[2 * n - 1] = -2.0;
  s2[2 * n - 1] = -2.0;
  chain.samples = {s1, s2};
  Eigen::MatrixXd pts(2, 3);
  pts << -0.5, 0.0, 0.5, 0.2, 0.2, 0.2;
  const PredictiveSummary sum = predictive_summary(chain, post, pts);
  CHECK(sum.mean[0] == doctest::Approx(2.0));
  CHECK(sum.std[0] == doctest::Approx(1.0));
  CHECK(sum.mean[1] == doctest::Approx(2.0));  // the cut belongs to the lower subdomain
  CHECK(sum.mean[2] == doctest::Approx(-2.0));
  CHECK(sum.std[2] == doctest::Approx(0.0));
  CHECK(sum.lambda_samples.cols() == 0);

  Eigen::MatrixXd outside(2, 1);
  outside << 1.5, 0.2;
  CHECK_THROWS(predictive_summary(chain, post, outside));
  CHECK_THROWS(predictive_summary(Chain{}, post, pts));
}

TEST_CASE("predictive summary matches brute force") {
  PosteriorSpec ps;
  ps.pde = PdeSpec::make(PdeId::fokker_planck_1d);
  ps.arch = {2, 2, 5, Activation::tanh};
  ps.decomp = DecompositionSpec{{0.25}};
  ps.mode = LambdaMode::inverse_none;
  ps.data.n_subdomains = 2;
  for (PointSet* s : {&ps.data.u, &ps.data.phi, &ps.data.ic, &ps.data.bc, &ps.data.cdc}) s->points.resize(2, 0);
  const double cut[2] = {0.25, 0.5};
  ps.data.cdc.push(cut, 0.0, 0.01, 0);
  ps.data.cdc_sigma_flux = Eigen::VectorXd::Constant(1, 0.01);
  const Posterior post(ps);
  Chain chain;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 7; ++k) {
    Eigen::VectorXd s(post.state_size());
    for (auto& v : s) v = normal(rng);
    chain.samples.push_back(s);
  }
  Eigen::MatrixXd pts(2, 4);
  pts << -0.9, 0.1, 0.3, 0.99, 0.0, 0.4, 0.7, 1.0;
  const PredictiveSummary sum = predictive_summary(chain, post, pts);
  for (int i = 0; i < 4; ++i) {
    const int q = pts(0, i) <= 0.25 ? 0 : 1;
    std::vector<double> vals;
    for (const auto& s : chain.samples) {
      const Eigen::VectorXd th = post.theta(s, q);
      const Eigen::VectorXd p = pts.col(i);
      vals.push_back(forward<double>(ps.arch, th, p));
    }
    double m = 0.0, v = 0.0;
    for (double x : vals) m += x;
    m /= double(vals.size());
    for (double x : vals) v += (x - m) * (x - m);
    CHECK(sum.mean[i] == doctest::Approx(m).epsilon(1e-12));
    CHECK(sum.std[i] == doctest::Approx(std::sqrt(v / double(vals.size()))).epsilon(1e-10));
  }
  REQUIRE(sum.lambda_samples.rows() == 7);
  CHECK(sum.lambda_samples(2, 1) == doctest::Approx(std::exp(chain.samples[2][post.state_size() - 1])));
  CHECK(sum.lambda_mean[0] == doctest::Approx(sum.lambda_samples.col(0).mean()));
}
