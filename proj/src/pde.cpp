#include "dpinn/pde.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dpinn {

namespace {

constexpr double kBoundaryTol = 1e-12;

int time_index(const PdeSpec& spec) { return spec.spatial_dim(); }

void check_channels(const PdeSpec& spec, std::size_t du, std::size_t d2u) {
  const auto d = static_cast<std::size_t>(spec.input_dim());
  if (du != d || d2u != d) throw std::invalid_argument("jet size does not match PDE input dimension");
}

}  // namespace

std::string_view to_string(PdeId id) {
  switch (id) {
    case PdeId::burgers: return "burgers";
    case PdeId::fisher_kpp: return "fisher_kpp";
    case PdeId::fokker_planck_1d: return "fokker_planck_1d";
    case PdeId::fokker_planck_2d: return "fokker_planck_2d";
    case PdeId::allen_cahn: return "allen_cahn";
  }
  throw std::invalid_argument("unknown PDE id");
}

PdeId pde_id_from_string(std::string_view name) {
  for (PdeId id : {PdeId::burgers, PdeId::fisher_kpp, PdeId::fokker_planck_1d,
                   PdeId::fokker_planck_2d, PdeId::allen_cahn})
    if (to_string(id) == name) return id;
  if (name == "fokker_planck") return PdeId::fokker_planck_1d;
  throw std::invalid_argument("unknown PDE id '" + std::string(name) + "'");
}

Eigen::VectorXd default_lambda(PdeId id) {
  switch (id) {
    case PdeId::burgers: return Eigen::VectorXd::Constant(1, 0.01 / std::numbers::pi);
    case PdeId::fisher_kpp: return Eigen::Vector2d(0.1, 2.0);
    case PdeId::fokker_planck_1d:
    case PdeId::fokker_planck_2d: return Eigen::Vector2d(0.1, 0.2);
    case PdeId::allen_cahn: return Eigen::Vector2d(0.01, 0.4);
  }
  throw std::invalid_argument("unknown PDE id");
}

PdeSpec PdeSpec::make(PdeId id) {
  PdeSpec s;
  s.id = id;
  s.lambda = default_lambda(id);
  s.spatial_bounds = {Interval{-1.0, 1.0}};
  if (id == PdeId::fokker_planck_2d) s.spatial_bounds.push_back(Interval{-1.0, 1.0});
  s.time_bounds = Interval{0.0, 1.0};
  return s;
}

void PdeSpec::validate() const {
  const Eigen::Index expected = id == PdeId::burgers ? 1 : 2;
  if (lambda.size() != expected)
    throw std::invalid_argument(std::string(to_string(id)) + ": expected " +
                                std::to_string(expected) + " coefficients");
  if (!(lambda[0] > 0.0))
    throw std::invalid_argument(std::string(to_string(id)) + ": diffusion coefficient must be > 0");
  if ((id == PdeId::fokker_planck_1d || id == PdeId::fokker_planck_2d || id == PdeId::allen_cahn) &&
      !(lambda[1] > 0.0))
    throw std::invalid_argument(std::string(to_string(id)) + ": second coefficient must be > 0");
  const int want_dim = id == PdeId::fokker_planck_2d ? 2 : 1;
  if (spatial_dim() != want_dim)
    throw std::invalid_argument(std::string(to_string(id)) + ": wrong number of spatial bounds");
  for (const auto& b : spatial_bounds)
    if (!(b.hi > b.lo)) throw std::invalid_argument("empty spatial interval");
  if (!(time_bounds.hi > time_bounds.lo)) throw std::invalid_argument("empty time interval");
}

double allen_cahn_mobility(double x) {
  const double c = std::cos(2.0 * x);
  return 0.2 + std::exp(x) * c * c;
}

double allen_cahn_source(double x, double l) {
  const double s = std::sin(3.0 * x);
  return std::exp(-(x - 0.25) * (x - 0.25) / (2.0 * l * l)) * s * s;
}

ResidualPartials residual_partials(const PdeSpec& spec, double diffusion, double u,
                                   std::span<const double> du, std::span<const double> d2u,
                                   std::span<const double> point) {
  check_channels(spec, du.size(), d2u.size());
  const int d = spec.input_dim();
  const int it = time_index(spec);
  ResidualPartials r;
  r.d_du = Eigen::VectorXd::Zero(d);
  r.d_d2u = Eigen::VectorXd::Zero(d);
  r.d_du[it] = 1.0;
  const double u_t = du[it];
  const double u_x = du[0];
  const double u_xx = d2u[0];

  switch (spec.id) {
    case PdeId::burgers:
      r.phi = u_t + u * u_x - diffusion * u_xx;
      r.d_u = u_x;
      r.d_du[0] = u;
      r.d_d2u[0] = -diffusion;
      r.d_diffusion = -u_xx;
      break;
    case PdeId::fisher_kpp: {
      const double rate = spec.lambda[1];
      r.phi = u_t - diffusion * u_xx - rate * u * (1.0 - u);
      r.d_u = -rate * (1.0 - 2.0 * u);
      r.d_d2u[0] = -diffusion;
      r.d_diffusion = -u_xx;
      break;
    }
    case PdeId::fokker_planck_1d:
      r.phi = u_t - diffusion * u_xx;
      r.d_d2u[0] = -diffusion;
      r.d_diffusion = -u_xx;
      break;
    case PdeId::fokker_planck_2d:
      r.phi = u_t - diffusion * (u_xx + d2u[1]);
      r.d_d2u[0] = -diffusion;
      r.d_d2u[1] = -diffusion;
      r.d_diffusion = -(u_xx + d2u[1]);
      break;
    case PdeId::allen_cahn: {
      const double x = point[0];
      const double mob = allen_cahn_mobility(x);
      r.phi = u_t - diffusion * u_xx + mob * u * u * u - allen_cahn_source(x, spec.lambda[1]);
      r.d_u = 3.0 * mob * u * u;
      r.d_d2u[0] = -diffusion;
      r.d_diffusion = -u_xx;
      break;
    }
  }
  return r;
}

double residual(const PdeSpec& spec, const JetOutput<double>& jet, std::span<const double> point) {
  if (static_cast<int>(point.size()) != spec.input_dim())
    throw std::invalid_argument("point dimension does not match PDE");
  return residual_partials(spec, spec.diffusion(), jet.u, {jet.du.data(), std::size_t(jet.du.size())},
                           {jet.d2u_diag.data(), std::size_t(jet.d2u_diag.size())}, point)
      .phi;
}

double normal_flux_partials(const PdeSpec& spec, double diffusion, double u,
                            std::span<const double> du, std::span<const double> normal,
                            double& d_u, Eigen::VectorXd& d_du) {
  const int sd = spec.spatial_dim();
  if (static_cast<int>(normal.size()) != sd)
    throw std::invalid_argument("normal must have one entry per spatial dimension");
  if (static_cast<int>(du.size()) != spec.input_dim())
    throw std::invalid_argument("jet size does not match PDE input dimension");
  double norm2 = 0.0;
  for (double c : normal) norm2 += c * c;
  if (std::abs(norm2 - 1.0) > 1e-12) throw std::invalid_argument("interface normal is not a unit vector");

  d_du = Eigen::VectorXd::Zero(spec.input_dim());
  d_u = 0.0;
  double grad_n = 0.0;
  for (int i = 0; i < sd; ++i) grad_n += normal[i] * du[i];

  if (spec.flux_form == FluxForm::normal_derivative) {
    for (int i = 0; i < sd; ++i) d_du[i] = normal[i];
    return grad_n;
  }
  for (int i = 0; i < sd; ++i) d_du[i] = -diffusion * normal[i];
  double flux = -diffusion * grad_n;
  if (spec.id == PdeId::burgers) {
    flux += 0.5 * u * u * normal[0];
    d_u = u * normal[0];
  }
  return flux;
}

double normal_flux(const PdeSpec& spec, const JetOutput<double>& jet,
                   std::span<const double> normal) {
  double d_u;
  Eigen::VectorXd d_du;
  return normal_flux_partials(spec, spec.diffusion(), jet.u,
                              {jet.du.data(), std::size_t(jet.du.size())}, normal, d_u, d_du);
}

double initial_condition(const PdeSpec& spec, std::span<const double> space) {
  if (static_cast<int>(space.size()) != spec.spatial_dim())
    throw std::invalid_argument("initial_condition: wrong spatial dimension");
  for (int i = 0; i < spec.spatial_dim(); ++i)
    if (!spec.spatial_bounds[i].contains(space[i], kBoundaryTol))
      throw std::invalid_argument("initial_condition: point outside the spatial domain");
  if (spec.custom_ic) return spec.custom_ic(space);

  const double pi = std::numbers::pi;
  const double x = space[0];
  switch (spec.id) {
    case PdeId::burgers: return -std::sin(pi * x);
    case PdeId::fisher_kpp: return std::exp(-x * x);
    case PdeId::fokker_planck_1d:
    case PdeId::fokker_planck_2d: {
      const double sigma = spec.lambda[1];
      double r2 = x * x;
      if (spec.id == PdeId::fokker_planck_2d) r2 += space[1] * space[1];
      const double expo = spec.ic_form == IcForm::as_printed ? -0.5 * r2 * sigma * sigma
                                                             : -0.5 * r2 / (sigma * sigma);
      const double norm = spec.id == PdeId::fokker_planck_2d
                              ? 1.0 / (2.0 * pi * sigma * sigma)
                              : 1.0 / std::sqrt(2.0 * pi * sigma * sigma);
      return norm * std::exp(expo);
    }
    case PdeId::allen_cahn: {
      const double c = std::cos(pi * x);
      return 0.5 * c * c;
    }
  }
  throw std::invalid_argument("unknown PDE id");
}

double boundary_condition(const PdeSpec& spec, std::span<const double> space, double t) {
  if (static_cast<int>(space.size()) != spec.spatial_dim())
    throw std::invalid_argument("boundary_condition: wrong spatial dimension");
  bool on_face = false;
  for (int i = 0; i < spec.spatial_dim(); ++i) {
    const Interval& b = spec.spatial_bounds[i];
    if (!b.contains(space[i], kBoundaryTol))
      throw std::invalid_argument("boundary_condition: point outside the spatial domain");
    if (std::abs(space[i] - b.lo) <= kBoundaryTol || std::abs(space[i] - b.hi) <= kBoundaryTol)
      on_face = true;
  }
  if (!on_face) throw std::invalid_argument("boundary_condition: point is not on a boundary face");
  if (!spec.time_bounds.contains(t, kBoundaryTol))
    throw std::invalid_argument("boundary_condition: time outside the time interval");
  return spec.id == PdeId::allen_cahn ? 0.5 : 0.0;
}

bool ic_bc_compatible(const PdeSpec& spec, double tol) {
  const int sd = spec.spatial_dim();
  std::vector<double> p(sd, 0.0);
  const int samples = 11;
  for (int face = 0; face < sd; ++face)
    for (double side : {spec.spatial_bounds[face].lo, spec.spatial_bounds[face].hi})
      for (int k = 0; k < (sd == 1 ? 1 : samples); ++k) {
        for (int j = 0; j < sd; ++j) {
          const Interval& b = spec.spatial_bounds[j];
          p[j] = b.lo + b.length() * k / (samples - 1);
        }
        p[face] = side;
        const double ic = initial_condition(spec, p);
        const double bc = boundary_condition(spec, p, spec.time_bounds.lo);
        if (std::abs(ic - bc) > tol) return false;
      }
  return true;
}

}  // namespace dpinn
