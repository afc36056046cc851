#pragma once

// Benchmark PDEs: residual operators, interface fluxes and initial/boundary
// data. Points are ordered (x, t) in 1D and (x, y, t) in 2D; time is always
// the last coordinate, and jet channels follow the same ordering.

#include "dpinn/network.hpp"

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dpinn {

enum class PdeId { burgers, fisher_kpp, fokker_planck_1d, fokker_planck_2d, allen_cahn };

/// Fokker-Planck initial condition: `as_printed` uses exp(-0.5 x^2 sigma^2),
/// `normalized` the Gaussian density exp(-0.5 x^2 / sigma^2).
enum class IcForm { as_printed, normalized };

/// Interface flux: the plain normal derivative du/dn, or the conserved flux
/// of each equation (u^2/2 - nu u_x for Burgers, -D grad u otherwise).
enum class FluxForm { normal_derivative, conservative };

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double length() const { return hi - lo; }
  bool contains(double v, double tol = 0.0) const { return v >= lo - tol && v <= hi + tol; }
};

std::string_view to_string(PdeId id);
PdeId pde_id_from_string(std::string_view name);

/// Coefficients per equation:
///   burgers          [nu]
///   fisher_kpp       [D, r]
///   fokker_planck_*  [D, sigma]
///   allen_cahn       [D, l]
/// The first entry is always the diffusion coefficient, the only candidate
/// for inversion.
Eigen::VectorXd default_lambda(PdeId id);

struct PdeSpec {
  PdeId id = PdeId::fokker_planck_1d;
  Eigen::VectorXd lambda;
  std::vector<Interval> spatial_bounds;
  Interval time_bounds;
  IcForm ic_form = IcForm::as_printed;
  FluxForm flux_form = FluxForm::normal_derivative;
  /// Replaces the built-in initial condition when set (used for
  /// manufactured-solution checks of the reference solver).
  std::function<double(std::span<const double>)> custom_ic;

  static PdeSpec make(PdeId id);

  int spatial_dim() const { return static_cast<int>(spatial_bounds.size()); }
  int input_dim() const { return spatial_dim() + 1; }
  double diffusion() const { return lambda[0]; }

  /// Throws std::invalid_argument on inconsistent coefficients or bounds.
  void validate() const;

  bool is_linear() const { return id == PdeId::fokker_planck_1d || id == PdeId::fokker_planck_2d; }
};

/// Allen-Cahn mobility 0.2 + e^x cos^2(2x).
double allen_cahn_mobility(double x);
/// Allen-Cahn source exp(-(x - 0.25)^2 / (2 l^2)) sin^2(3x).
double allen_cahn_source(double x, double l);

/// Residual with its partial derivatives with respect to every jet channel
/// and to the diffusion coefficient.
struct ResidualPartials {
  double phi = 0.0;
  double d_u = 0.0;
  Eigen::VectorXd d_du;
  Eigen::VectorXd d_d2u;
  double d_diffusion = 0.0;
};

/// phi = u_t + N[u; lambda] at `point` for the jet of the subdomain network.
double residual(const PdeSpec& spec, const JetOutput<double>& jet, std::span<const double> point);

/// Same as residual() but with the diffusion coefficient overridden and all
/// partials returned. `u`, `du`, `d2u` are the jet channels at the point.
ResidualPartials residual_partials(const PdeSpec& spec, double diffusion, double u,
                                   std::span<const double> du, std::span<const double> d2u,
                                   std::span<const double> point);

/// Flux through the interface with unit normal `normal` (spatial_dim entries).
double normal_flux(const PdeSpec& spec, const JetOutput<double>& jet,
                   std::span<const double> normal);

/// normal_flux with an explicit diffusion coefficient; returns the flux and
/// writes d(flux)/d(u) and d(flux)/d(du_i) for the conservative form.
double normal_flux_partials(const PdeSpec& spec, double diffusion, double u,
                            std::span<const double> du, std::span<const double> normal,
                            double& d_u, Eigen::VectorXd& d_du);

double initial_condition(const PdeSpec& spec, std::span<const double> space);

/// Dirichlet value at a point on the spatial boundary. Throws when the point
/// is off every boundary face.
double boundary_condition(const PdeSpec& spec, std::span<const double> space, double t);

/// True when IC evaluated on the boundary agrees with the BC at t = 0.
bool ic_bc_compatible(const PdeSpec& spec, double tol);

}  // namespace dpinn
