#pragma once

// Finite-difference reference solutions on uniform space-time grids.

#include "dpinn/pde.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>

namespace dpinn {

class StabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scheme { crank_nicolson, explicit_rk4 };

std::string_view to_string(Scheme s);
Scheme scheme_from_string(std::string_view name);

struct GridResolution {
  int nx = 401;
  int ny = 0;  ///< 0 in 1D
  int nt = 401;
  /// Internal time steps per stored time level.
  int substeps = 1;
};

/// Resolution used for experiment references. Burgers gets a finer grid so
/// the viscous shock is resolved.
GridResolution default_resolution(PdeId id);

struct GridSolution {
  PdeId pde_id = PdeId::fokker_planck_1d;
  Eigen::VectorXd x_nodes;
  Eigen::VectorXd y_nodes;  ///< empty in 1D
  Eigen::VectorXd t_nodes;
  /// values(k, j * nx + i) = u(x_i, y_j, t_k).
  Eigen::MatrixXd values;

  int nx() const { return static_cast<int>(x_nodes.size()); }
  int ny() const { return y_nodes.size() == 0 ? 1 : static_cast<int>(y_nodes.size()); }
  int nt() const { return static_cast<int>(t_nodes.size()); }
  int spatial_dim() const { return y_nodes.size() == 0 ? 1 : 2; }

  double at(int k, int i, int j = 0) const { return values(k, Eigen::Index(j) * nx() + i); }

  /// Multilinear interpolation at (x[, y], t); points outside the grid are
  /// clamped to it.
  double interpolate(std::span<const double> point) const;

  /// Largest |u| over nodes with x in [x_lo, x_hi], all times.
  double max_abs(double x_lo, double x_hi) const;
};

/// Second-order time stepping: Crank-Nicolson diffusion with Adams-Bashforth-2
/// nonlinear terms (Rannacher start with two implicit half steps), or
/// classical RK4 method of lines. Dirichlet values are imposed at every step.
/// Throws StabilityError when the resolution violates the scheme's limit or
/// the field blows up.
GridSolution solve_reference(const PdeSpec& spec, const GridResolution& res, Scheme scheme);

/// Writes `<stem>.csv` (x[,y],t,u rows) and `<stem>.json` grid metadata.
void write_grid_solution(const GridSolution& sol, const PdeSpec& spec, Scheme scheme,
                         const std::filesystem::path& dir, const std::string& stem = "reference");

GridSolution read_grid_solution(const std::filesystem::path& dir,
                                const std::string& stem = "reference");

}  // namespace dpinn
