#include "dpinn/network.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace dpinn;

namespace {

NetworkArch tiny_arch() {
  NetworkArch a;
  a.input_dim = 2;
  a.hidden_layers = 1;
  a.hidden_width = 1;
  return a;
}

// u(x, t) = tanh(x)
Eigen::VectorXd tanh_x_theta() {
  Eigen::VectorXd th(5);
  th << 1.0, 0.0, 0.0, 1.0, 0.0;
  return th;
}

// Central differences evaluated in long double on the templated network.
void fd_jet(const NetworkArch& arch, const Eigen::VectorXd& theta, const Eigen::VectorXd& p, double h,
            Eigen::VectorXd& du, Eigen::VectorXd& d2u) {
  const VectorX<long double> th = theta.cast<long double>();
  const VectorX<long double> x0 = p.cast<long double>();
  const long double u0 = forward<long double>(arch, th, x0);
  du.resize(p.size());
  d2u.resize(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    VectorX<long double> xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    const long double up = forward<long double>(arch, th, xp);
    const long double um = forward<long double>(arch, th, xm);
    du[i] = double((up - um) / (2 * (long double)h));
    d2u[i] = double((up - 2 * u0 + um) / ((long double)h * h));
  }
}

double rel_err(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max(std::abs(b), floor);
}

}  // namespace

TEST_CASE("parameter count follows the layer sizes") {
  CHECK(init_params(tiny_arch(), 7, InitRule::xavier).size() == 5);
  NetworkArch def;
  CHECK(def.parameter_count() == 16897);
  CHECK(init_params(def, 11).size() == 16897);
  NetworkArch three = def;
  three.input_dim = 3;
  CHECK(three.parameter_count() == 16897 + 64);
}

TEST_CASE("init_params is deterministic and finite") {
  NetworkArch a;
  for (InitRule r : {InitRule::xavier, InitRule::unit_normal}) {
    const auto a1 = init_params(a, 42, r);
    const auto a2 = init_params(a, 42, r);
    CHECK(a1 == a2);
    CHECK(a1.allFinite());
    CHECK(init_params(a, 43, r) != a1);
  }
}

TEST_CASE("invalid architectures and dimension mismatches are rejected") {
  NetworkArch a;
  a.hidden_layers = 0;
  CHECK_THROWS_AS(a.validate(), std::invalid_argument);
  a = NetworkArch{};
  a.input_dim = 4;
  CHECK_THROWS_AS(a.validate(), std::invalid_argument);
  const NetworkArch t = tiny_arch();
  const Eigen::VectorXd th = tanh_x_theta();
  CHECK_THROWS_AS(forward<double>(t, th, Eigen::Vector3d(0, 0, 0)), std::invalid_argument);
  CHECK_THROWS_AS(forward<double>(t, Eigen::VectorXd::Zero(4), Eigen::Vector2d(0, 0)), std::invalid_argument);
}

TEST_CASE("zero network is identically zero") {
  NetworkArch a;
  const Eigen::VectorXd th = Eigen::VectorXd::Zero(a.parameter_count());
  const Eigen::Vector2d p(0.3, 0.7);
  CHECK(forward<double>(a, th, p) == 0.0);
  const JetOutput<double> j = forward_jet<double>(a, th, p);
  CHECK(j.u == 0.0);
  CHECK(j.du.size() == 2);
  CHECK(j.d2u_diag.size() == 2);
  CHECK(j.du.isZero(0.0));
  CHECK(j.d2u_diag.isZero(0.0));
}

TEST_CASE("single tanh neuron") {
  const NetworkArch a = tiny_arch();
  const Eigen::VectorXd th = tanh_x_theta();
  CHECK(forward<double>(a, th, Eigen::Vector2d(0.0, 0.4)) == 0.0);
  CHECK(forward<double>(a, th, Eigen::Vector2d(1.0, 0.4)) == doctest::Approx(0.761594).epsilon(1e-6));
  const JetOutput<double> j = forward_jet<double>(a, th, Eigen::Vector2d(0.0, 0.4));
  CHECK(j.du[0] == 1.0);
  CHECK(j.d2u_diag[0] == 0.0);
  CHECK(j.du[1] == 0.0);
  const JetOutput<double> j1 = forward_jet<double>(a, th, Eigen::Vector2d(0.5, 0.0));
  const double s = std::tanh(0.5);
  CHECK(j1.du[0] == doctest::Approx(1 - s * s).epsilon(1e-15));
  CHECK(j1.d2u_diag[0] == doctest::Approx(-2 * s * (1 - s * s)).epsilon(1e-14));
}

TEST_CASE("input jets match finite differences on the default architecture") {
  NetworkArch a;
  const Eigen::VectorXd th = init_params(a, 3);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    const Eigen::Vector2d p(U(rng), 0.5 * (U(rng) + 1.0));
    const JetOutput<double> j = forward_jet<double>(a, th, p);
    Eigen::VectorXd du, d2u;
    fd_jet(a, th, p, 1e-4, du, d2u);
    for (int i = 0; i < 2; ++i) {
      CHECK(rel_err(j.du[i], du[i]) < 1e-5);
      CHECK(rel_err(j.d2u_diag[i], d2u[i]) < 1e-5);
    }
  }
}

TEST_CASE("jet value equals plain forward") {
  for (int dim : {2, 3}) {
    NetworkArch a;
    a.input_dim = dim;
    a.hidden_layers = 3;
    a.hidden_width = 16;
    const Eigen::VectorXd th = init_params(a, 9, InitRule::unit_normal);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int k = 0; k < 20; ++k) {
      Eigen::VectorXd p(dim);
      for (int i = 0; i < dim; ++i) p[i] = U(rng);
      CHECK(forward_jet<double>(a, th, p).u == doctest::Approx(forward<double>(a, th, p)).epsilon(1e-13));
    }
  }
}

TEST_CASE("batched evaluation matches single points") {
  NetworkArch a;
  a.hidden_layers = 2;
  a.hidden_width = 8;
  const Eigen::VectorXd th = init_params(a, 4);
  Eigen::MatrixXd pts(2, 5);
  pts << -1, -0.5, 0, 0.5, 1, 0, 0.25, 0.5, 0.75, 1;
  const JetBatch<double> b = forward_jet<double>(a, th, pts, 2);
  for (int i = 0; i < 5; ++i) {
    const JetOutput<double> j = forward_jet<double>(a, th, Eigen::VectorXd(pts.col(i)));
    CHECK(b.u[i] == doctest::Approx(j.u).epsilon(1e-14));
    CHECK(b.du(0, i) == doctest::Approx(j.du[0]).epsilon(1e-13));
    CHECK(b.d2u(0, i) == doctest::Approx(j.d2u_diag[0]).epsilon(1e-12));
  }
}

namespace {

// F = sum_i c0 u_i^2 + c1 u_x,i * u_t,i + c2 u_xx,i  over one order-2 batch.
FunctionalValue mixed_functional(const std::vector<JetBatch<double>>& out, double c0, double c1, double c2) {
  const JetBatch<double>& j = out[0];
  FunctionalValue fv;
  JetBatch<double> a = JetBatch<double>::zeros(int(j.du.rows()), j.size(), 2);
  const int it = int(j.du.rows()) - 1;
  for (Eigen::Index i = 0; i < j.size(); ++i) {
    fv.value += c0 * j.u[i] * j.u[i] + c1 * j.du(0, i) * j.du(it, i) + c2 * j.d2u(0, i);
    a.u[i] = 2 * c0 * j.u[i];
    a.du(0, i) += c1 * j.du(it, i);
    a.du(it, i) += c1 * j.du(0, i);
    a.d2u(0, i) = c2;
  }
  fv.adjoints.push_back(a);
  return fv;
}

double mixed_value_ld(const NetworkArch& arch, const VectorX<long double>& th, const Eigen::MatrixXd& pts,
                      double c0, double c1, double c2) {
  const JetBatch<long double> j = forward_jet<long double>(arch, th, pts.cast<long double>(), 2);
  const int it = int(j.du.rows()) - 1;
  long double v = 0;
  for (Eigen::Index i = 0; i < j.size(); ++i)
    v += c0 * j.u[i] * j.u[i] + c1 * j.du(0, i) * j.du(it, i) + c2 * j.d2u(0, i);
  return double(v);
}

}  // namespace

TEST_CASE("grad_params trivial functionals") {
  NetworkArch a;
  a.hidden_layers = 2;
  a.hidden_width = 8;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(a.parameter_count());
  Eigen::VectorXd g;
  std::vector<PointBatch> batches{{Eigen::MatrixXd(Eigen::Vector2d(0.2, 0.3)), 0}};
  grad_params(a, zero, batches,
              [](const std::vector<JetBatch<double>>& out, const Eigen::VectorXd&) {
                FunctionalValue fv;
                fv.value = out[0].u[0] * out[0].u[0];
                JetBatch<double> adj = JetBatch<double>::zeros(2, 1, 0);
                adj.u[0] = 2 * out[0].u[0];
                fv.adjoints.push_back(adj);
                return fv;
              },
              g);
  CHECK(g.isZero(0.0));

  const Eigen::VectorXd th = init_params(a, 2);
  const double v = grad_params(a, th, {},
                               [](const std::vector<JetBatch<double>>&, const Eigen::VectorXd& t) {
                                 FunctionalValue fv;
                                 fv.value = t.squaredNorm();
                                 fv.direct_gradient = 2 * t;
                                 return fv;
                               },
                               g);
  CHECK(v == doctest::Approx(th.squaredNorm()));
  CHECK((g - 2 * th).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("grad_params matches finite differences for a jet functional") {
  for (int dim : {2, 3}) {
    NetworkArch a;
    a.input_dim = dim;
    a.hidden_layers = 2;
    a.hidden_width = 8;
    const Eigen::VectorXd th = init_params(a, 21, InitRule::unit_normal) * 0.7;
    Eigen::MatrixXd pts = Eigen::MatrixXd::Random(dim, 10);
    Eigen::VectorXd g;
    grad_params(a, th, {{pts, 2}},
                [](const std::vector<JetBatch<double>>& out, const Eigen::VectorXd&) {
                  return mixed_functional(out, 0.7, -1.3, 0.4);
                },
                g);
    const VectorX<long double> thl = th.cast<long double>();
    const double h = 1e-5;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < th.size(); ++i) {
      VectorX<long double> tp = thl, tm = thl;
      tp[i] += h;
      tm[i] -= h;
      const double fd = (mixed_value_ld(a, tp, pts, 0.7, -1.3, 0.4) - mixed_value_ld(a, tm, pts, 0.7, -1.3, 0.4)) /
                        (2 * h);
      worst = std::max(worst, rel_err(g[i], fd, 1e-2));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("grad_params is linear in the functional") {
  NetworkArch a;
  a.hidden_layers = 2;
  a.hidden_width = 8;
  const Eigen::VectorXd th = init_params(a, 8);
  const Eigen::MatrixXd pts = Eigen::MatrixXd::Random(2, 6);
  auto grad_of = [&](double c0, double c1, double c2) {
    Eigen::VectorXd g;
    grad_params(a, th, {{pts, 2}},
                [&](const std::vector<JetBatch<double>>& out, const Eigen::VectorXd&) {
                  return mixed_functional(out, c0, c1, c2);
                },
                g);
    return g;
  };
  const Eigen::VectorXd gf = grad_of(1.0, 0.0, 0.0);
  const Eigen::VectorXd gg = grad_of(0.0, 1.0, 1.0);
  const Eigen::VectorXd gc = grad_of(2.0, -3.0, -3.0);
  CHECK((gc - (2.0 * gf - 3.0 * gg)).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + gc.cwiseAbs().maxCoeff()));
}

TEST_CASE("non-finite functional values are reported") {
  NetworkArch a;
  a.hidden_layers = 1;
  a.hidden_width = 2;
  const Eigen::VectorXd th = init_params(a, 1);
  Eigen::VectorXd g;
  CHECK_THROWS_AS(grad_params(a, th, {},
                              [](const std::vector<JetBatch<double>>&, const Eigen::VectorXd&) {
                                FunctionalValue fv;
                                fv.value = std::nan("");
                                return fv;
                              },
                              g),
                  EvaluationError);
}

TEST_CASE("repeated evaluation is bit-identical") {
  NetworkArch a;
  const Eigen::VectorXd th = init_params(a, 77);
  const Eigen::MatrixXd pts = Eigen::MatrixXd::Random(2, 33);
  const JetBatch<double> b1 = forward_jet<double>(a, th, pts, 2);
  const JetBatch<double> b2 = forward_jet<double>(a, th, pts, 2);
  CHECK(b1.u == b2.u);
  CHECK(b1.du == b2.du);
  CHECK(b1.d2u == b2.d2u);
}
