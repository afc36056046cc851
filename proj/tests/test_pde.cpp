#include "dpinn/pde.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace dpinn;

namespace {

JetOutput<double> jet(double u, std::initializer_list<double> du, std::initializer_list<double> d2u) {
  JetOutput<double> j;
  j.u = u;
  j.du = Eigen::Map<const Eigen::VectorXd>(du.begin(), Eigen::Index(du.size()));
  j.d2u_diag = Eigen::Map<const Eigen::VectorXd>(d2u.begin(), Eigen::Index(d2u.size()));
  return j;
}

double at(const PdeSpec& s, const JetOutput<double>& j, double x, double t) {
  const double p[2] = {x, t};
  return residual(s, j, p);
}

}  // namespace

TEST_CASE("default coefficients") {
  CHECK(default_lambda(PdeId::burgers)[0] == doctest::Approx(0.0031831).epsilon(1e-5));
  CHECK(default_lambda(PdeId::fisher_kpp) == Eigen::Vector2d(0.1, 2.0));
  CHECK(default_lambda(PdeId::allen_cahn)[0] == 0.01);
  CHECK(default_lambda(PdeId::fokker_planck_1d) == Eigen::Vector2d(0.1, 0.2));
  const PdeSpec s = PdeSpec::make(PdeId::fisher_kpp);
  CHECK(s.spatial_bounds[0].lo == -1.0);
  CHECK(s.spatial_bounds[0].hi == 1.0);
  CHECK(s.time_bounds.lo == 0.0);
  CHECK(s.time_bounds.hi == 1.0);
}

TEST_CASE("invalid coefficients are rejected") {
  PdeSpec s = PdeSpec::make(PdeId::burgers);
  s.lambda[0] = -1.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = PdeSpec::make(PdeId::fisher_kpp);
  s.lambda.resize(1);
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK_THROWS_AS(pde_id_from_string("heat"), std::invalid_argument);
}

TEST_CASE("residual examples") {
  const PdeSpec fp = PdeSpec::make(PdeId::fokker_planck_1d);
  CHECK(at(fp, jet(3.0, {0, 0}, {0, 0}), 0.1, 0.2) == 0.0);

  const PdeSpec b = PdeSpec::make(PdeId::burgers);
  CHECK(at(b, jet(0.5, {1, 0}, {0, 0}), 0.5, 0.3) == 0.5);

  const PdeSpec ac = PdeSpec::make(PdeId::allen_cahn);
  CHECK(at(ac, jet(0, {0, 0}, {0, 0}), 0.25, 0.6) == doctest::Approx(-0.46463).epsilon(1e-5));
  CHECK(at(ac, jet(0, {0, 0}, {0, 0}), 0.25, 0.6) == doctest::Approx(-std::pow(std::sin(0.75), 2)).epsilon(1e-15));
}

TEST_CASE("manufactured heat solution") {
  const PdeSpec fp = PdeSpec::make(PdeId::fokker_planck_1d);
  const double D = fp.diffusion(), pi = std::numbers::pi;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const double x = 2 * U(rng) - 1, t = U(rng);
    const double u = std::exp(-t) * std::sin(pi * x);
    const auto j = jet(u, {pi * std::exp(-t) * std::cos(pi * x), -u}, {-pi * pi * u, u});
    CHECK(std::abs(at(fp, j, x, t) - (-1 + D * pi * pi) * u) <= 1e-12);
  }
}

TEST_CASE("residual partials match finite differences") {
  for (PdeId id : {PdeId::burgers, PdeId::fisher_kpp, PdeId::fokker_planck_1d, PdeId::allen_cahn}) {
    const PdeSpec s = PdeSpec::make(id);
    const double u = 0.37, du[2] = {-0.8, 0.3}, d2u[2] = {1.7, -0.2}, p[2] = {0.41, 0.5};
    const double D = 0.07;
    const ResidualPartials r = residual_partials(s, D, u, du, d2u, p);
    const double h = 1e-6;
    auto phi = [&](double uu, double ux, double ut, double uxx, double dd) {
      const double a[2] = {ux, ut}, b[2] = {uxx, -0.2};
      return residual_partials(s, dd, uu, a, b, p).phi;
    };
    CHECK(r.d_u == doctest::Approx((phi(u + h, -0.8, 0.3, 1.7, D) - phi(u - h, -0.8, 0.3, 1.7, D)) / (2 * h)).epsilon(1e-7));
    CHECK(r.d_du[0] == doctest::Approx((phi(u, -0.8 + h, 0.3, 1.7, D) - phi(u, -0.8 - h, 0.3, 1.7, D)) / (2 * h)).epsilon(1e-7));
    CHECK(r.d_du[1] == doctest::Approx((phi(u, -0.8, 0.3 + h, 1.7, D) - phi(u, -0.8, 0.3 - h, 1.7, D)) / (2 * h)).epsilon(1e-7));
    CHECK(r.d_d2u[0] == doctest::Approx((phi(u, -0.8, 0.3, 1.7 + h, D) - phi(u, -0.8, 0.3, 1.7 - h, D)) / (2 * h)).epsilon(1e-7));
    CHECK(r.d_diffusion == doctest::Approx((phi(u, -0.8, 0.3, 1.7, D + h) - phi(u, -0.8, 0.3, 1.7, D - h)) / (2 * h)).epsilon(1e-7));
  }
}

TEST_CASE("fokker-planck residual is linear") {
  const PdeSpec fp = PdeSpec::make(PdeId::fokker_planck_1d);
  const auto a = jet(0.3, {1.2, -0.4}, {2.0, 0.1});
  const auto b = jet(-1.1, {0.2, 0.9}, {-0.5, 0.3});
  JetOutput<double> c;
  c.u = 2 * a.u - 3 * b.u;
  c.du = 2 * a.du - 3 * b.du;
  c.d2u_diag = 2 * a.d2u_diag - 3 * b.d2u_diag;
  CHECK(at(fp, c, 0.2, 0.4) == doctest::Approx(2 * at(fp, a, 0.2, 0.4) - 3 * at(fp, b, 0.2, 0.4)).epsilon(1e-14));
}

TEST_CASE("2D fokker-planck residual uses both second derivatives") {
  const PdeSpec s = PdeSpec::make(PdeId::fokker_planck_2d);
  JetOutput<double> j;
  j.u = 1.0;
  j.du = Eigen::Vector3d(0, 0, 0.5);
  j.d2u_diag = Eigen::Vector3d(1.0, 2.0, 0.0);
  const double p[3] = {0.1, 0.2, 0.3};
  CHECK(residual(s, j, p) == doctest::Approx(0.5 - 0.1 * 3.0));
}

TEST_CASE("normal flux projection") {
  const PdeSpec s1 = PdeSpec::make(PdeId::fokker_planck_1d);
  const auto j = jet(0.0, {2.0, 5.0}, {0, 0});
  const double px[1] = {1.0}, mx[1] = {-1.0};
  CHECK(normal_flux(s1, j, px) == 2.0);
  CHECK(normal_flux(s1, j, mx) == -2.0);
  const PdeSpec s2 = PdeSpec::make(PdeId::fokker_planck_2d);
  JetOutput<double> j2;
  j2.u = 0.0;
  j2.du = Eigen::Vector3d(1.0, 3.0, 7.0);
  j2.d2u_diag = Eigen::Vector3d::Zero();
  const double py[2] = {0.0, 1.0};
  CHECK(normal_flux(s2, j2, py) == 3.0);
  const double bad[1] = {0.5};
  CHECK_THROWS_AS(normal_flux(s1, j, bad), std::invalid_argument);
}

TEST_CASE("normal flux antisymmetry for every flux form") {
  for (FluxForm f : {FluxForm::normal_derivative, FluxForm::conservative})
    for (PdeId id : {PdeId::burgers, PdeId::fisher_kpp, PdeId::allen_cahn}) {
      PdeSpec s = PdeSpec::make(id);
      s.flux_form = f;
      const auto j = jet(0.7, {-1.3, 0.2}, {0, 0});
      const double px[1] = {1.0}, mx[1] = {-1.0};
      CHECK(normal_flux(s, j, mx) == -normal_flux(s, j, px));
    }
  PdeSpec b = PdeSpec::make(PdeId::burgers);
  b.flux_form = FluxForm::conservative;
  const double px[1] = {1.0};
  CHECK(normal_flux(b, jet(0.5, {2.0, 0}, {0, 0}), px) == doctest::Approx(0.125 - b.diffusion() * 2.0));
}

TEST_CASE("initial and boundary conditions") {
  const double x0[1] = {0.0}, xr[1] = {1.0}, xl[1] = {-1.0}, xin[1] = {0.3};
  CHECK(initial_condition(PdeSpec::make(PdeId::burgers), x0) == 0.0);
  CHECK(initial_condition(PdeSpec::make(PdeId::fisher_kpp), x0) == 1.0);
  CHECK(initial_condition(PdeSpec::make(PdeId::allen_cahn), x0) == 0.5);
  const PdeSpec ac = PdeSpec::make(PdeId::allen_cahn);
  CHECK(boundary_condition(ac, xr, 0.3) == 0.5);
  CHECK(boundary_condition(ac, xl, 0.9) == 0.5);
  CHECK(boundary_condition(PdeSpec::make(PdeId::burgers), xl, 0.5) == 0.0);
  CHECK_THROWS_AS(boundary_condition(ac, xin, 0.3), std::invalid_argument);
  const double out[1] = {1.5};
  CHECK_THROWS_AS(initial_condition(ac, out), std::invalid_argument);

  PdeSpec fp = PdeSpec::make(PdeId::fokker_planck_1d);
  const double sigma = 0.2, pi = std::numbers::pi;
  CHECK(initial_condition(fp, xin) ==
        doctest::Approx(std::exp(-0.5 * 0.09 * sigma * sigma) / std::sqrt(2 * pi * sigma * sigma)));
  fp.ic_form = IcForm::normalized;
  CHECK(initial_condition(fp, xin) ==
        doctest::Approx(std::exp(-0.5 * 0.09 / (sigma * sigma)) / std::sqrt(2 * pi * sigma * sigma)));
}

TEST_CASE("IC and BC agree at the corners") {
  CHECK(ic_bc_compatible(PdeSpec::make(PdeId::burgers), 1e-6));
  CHECK(ic_bc_compatible(PdeSpec::make(PdeId::allen_cahn), 1e-6));
  // Printed Fisher-KPP data: e^{-1} at the walls against a zero wall value.
  CHECK_FALSE(ic_bc_compatible(PdeSpec::make(PdeId::fisher_kpp), 1e-6));
  PdeSpec fp = PdeSpec::make(PdeId::fokker_planck_1d);
  CHECK_FALSE(ic_bc_compatible(fp, 1e-6));
  fp.ic_form = IcForm::normalized;
  CHECK(ic_bc_compatible(fp, 1e-5));
}
