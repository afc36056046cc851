#include "dpinn/oracle.hpp"

#include "dpinn/io.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dpinn {

std::string_view to_string(Scheme s) {
  return s == Scheme::crank_nicolson ? "crank_nicolson" : "explicit_rk4";
}

Scheme scheme_from_string(std::string_view name) {
  if (name == "crank_nicolson") return Scheme::crank_nicolson;
  if (name == "explicit_rk4") return Scheme::explicit_rk4;
  throw std::invalid_argument("unknown scheme '" + std::string(name) + "'");
}

GridResolution default_resolution(PdeId id) {
  switch (id) {
    case PdeId::burgers: return {2001, 0, 1001, 4};
    case PdeId::fokker_planck_2d: return {81, 81, 201, 1};
    default: return {401, 0, 401, 1};
  }
}

namespace {

Eigen::VectorXd linspace(const Interval& b, int n) {
  return Eigen::VectorXd::LinSpaced(n, b.lo, b.hi);
}

// Uniform tensor grid with Dirichlet boundary nodes.
class Grid {
 public:
  Grid(const PdeSpec& spec, const GridResolution& res) : spec_(spec) {
    nx_ = res.nx;
    ny_ = spec.spatial_dim() == 2 ? res.ny : 1;
    if (nx_ < 3 || (spec.spatial_dim() == 2 && ny_ < 3))
      throw std::invalid_argument("solve_reference: need at least 3 nodes per spatial dimension");
    x_ = linspace(spec.spatial_bounds[0], nx_);
    dx_ = x_[1] - x_[0];
    if (spec.spatial_dim() == 2) {
      y_ = linspace(spec.spatial_bounds[1], ny_);
      dy_ = y_[1] - y_[0];
    }
    interior_.assign(size(), -1);
    for (int j = 0; j < ny_; ++j)
      for (int i = 0; i < nx_; ++i)
        if (!is_boundary(i, j)) {
          interior_[node(i, j)] = n_interior_;
          ++n_interior_;
        }
  }

  int size() const { return nx_ * ny_; }
  int node(int i, int j) const { return j * nx_ + i; }
  bool two_d() const { return spec_.spatial_dim() == 2; }
  bool is_boundary(int i, int j) const {
    return i == 0 || i == nx_ - 1 || (two_d() && (j == 0 || j == ny_ - 1));
  }
  double inv_h2_sum() const { return 1.0 / (dx_ * dx_) + (two_d() ? 1.0 / (dy_ * dy_) : 0.0); }

  void space(int i, int j, double* p) const {
    p[0] = x_[i];
    if (two_d()) p[1] = y_[j];
  }

  Eigen::VectorXd initial() const {
    Eigen::VectorXd u(size());
    double p[2];
    for (int j = 0; j < ny_; ++j)
      for (int i = 0; i < nx_; ++i) {
        space(i, j, p);
        u[node(i, j)] = initial_condition(spec_, {p, std::size_t(spec_.spatial_dim())});
      }
    return u;
  }

  void impose_boundary(Eigen::VectorXd& u, double t) const {
    double p[2];
    for (int j = 0; j < ny_; ++j)
      for (int i = 0; i < nx_; ++i)
        if (is_boundary(i, j)) {
          space(i, j, p);
          u[node(i, j)] = boundary_condition(spec_, {p, std::size_t(spec_.spatial_dim())}, t);
        }
  }

  // Discrete Laplacian on the full grid (zero on boundary nodes).
  Eigen::VectorXd laplacian(const Eigen::VectorXd& u) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
    const double ix2 = 1.0 / (dx_ * dx_);
    const double iy2 = two_d() ? 1.0 / (dy_ * dy_) : 0.0;
    for (int j = 0; j < ny_; ++j)
      for (int i = 0; i < nx_; ++i) {
        if (is_boundary(i, j)) continue;
        const int k = node(i, j);
        double v = (u[k + 1] - 2.0 * u[k] + u[k - 1]) * ix2;
        if (two_d()) v += (u[k + nx_] - 2.0 * u[k] + u[k - nx_]) * iy2;
        out[k] = v;
      }
    return out;
  }

  // Non-diffusive part of the right-hand side (zero on boundary nodes).
  Eigen::VectorXd nonlinear(const Eigen::VectorXd& u) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
    if (spec_.is_linear()) return out;
    for (int j = 0; j < ny_; ++j)
      for (int i = 0; i < nx_; ++i) {
        if (is_boundary(i, j)) continue;
        const int k = node(i, j);
        const double v = u[k];
        switch (spec_.id) {
          case PdeId::burgers: out[k] = -v * (u[k + 1] - u[k - 1]) / (2.0 * dx_); break;
          case PdeId::fisher_kpp: out[k] = spec_.lambda[1] * v * (1.0 - v); break;
          case PdeId::allen_cahn:
            out[k] = -allen_cahn_mobility(x_[i]) * v * v * v +
                     allen_cahn_source(x_[i], spec_.lambda[1]);
            break;
          default: break;
        }
      }
    return out;
  }

  // I - c * L restricted to interior nodes.
  Eigen::SparseMatrix<double> implicit_matrix(double c) const {
    std::vector<Eigen::Triplet<double>> trips;
    const double ix2 = 1.0 / (dx_ * dx_);
    const double iy2 = two_d() ? 1.0 / (dy_ * dy_) : 0.0;
    auto add = [&](int row, int i, int j, double v) {
      const int col = interior_[node(i, j)];
      if (col >= 0) trips.emplace_back(row, col, v);
    };
    for (int j = 0; j < ny_; ++j)
      for (int i = 0; i < nx_; ++i) {
        const int row = interior_[node(i, j)];
        if (row < 0) continue;
        trips.emplace_back(row, row, 1.0 + c * 2.0 * (ix2 + iy2));
        add(row, i - 1, j, -c * ix2);
        add(row, i + 1, j, -c * ix2);
        if (two_d()) {
          add(row, i, j - 1, -c * iy2);
          add(row, i, j + 1, -c * iy2);
        }
      }
    Eigen::SparseMatrix<double> m(n_interior_, n_interior_);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
  }

  Eigen::VectorXd gather(const Eigen::VectorXd& full) const {
    Eigen::VectorXd out(n_interior_);
    for (int k = 0; k < size(); ++k)
      if (interior_[k] >= 0) out[interior_[k]] = full[k];
    return out;
  }

  void scatter(const Eigen::VectorXd& in, Eigen::VectorXd& full) const {
    for (int k = 0; k < size(); ++k)
      if (interior_[k] >= 0) full[k] = in[interior_[k]];
  }

  // Contribution of boundary values to the Laplacian at interior nodes.
  Eigen::VectorXd boundary_laplacian(double t) const {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(size());
    impose_boundary(b, t);
    return gather(laplacian(b));
  }

  const Eigen::VectorXd& x() const { return x_; }
  const Eigen::VectorXd& y() const { return y_; }
  double dx() const { return dx_; }

 private:
  const PdeSpec& spec_;
  int nx_ = 0, ny_ = 1, n_interior_ = 0;
  double dx_ = 0.0, dy_ = 0.0;
  Eigen::VectorXd x_, y_;
  std::vector<int> interior_;
};

void check_finite(const Eigen::VectorXd& u, double t) {
  if (!u.allFinite() || u.cwiseAbs().maxCoeff() > 1e8) {
    std::ostringstream os;
    os << "solve_reference: non-finite or exploding field at t=" << t;
    throw StabilityError(os.str());
  }
}

}  // namespace

GridSolution solve_reference(const PdeSpec& spec, const GridResolution& res, Scheme scheme) {
  spec.validate();
  if (res.nt < 2) throw std::invalid_argument("solve_reference: need at least 2 time levels");
  if (res.substeps < 1) throw std::invalid_argument("solve_reference: substeps must be >= 1");
  const Grid grid(spec, res);
  const double dt_store = spec.time_bounds.length() / (res.nt - 1);
  const double dt = dt_store / res.substeps;
  const double diff = spec.diffusion();

  if (scheme == Scheme::explicit_rk4) {
    const double number = diff * dt * grid.inv_h2_sum();
    if (number > 0.25) {
      std::ostringstream os;
      os << "explicit_rk4: diffusion number D*dt/dx^2 = " << number << " exceeds 0.25";
      throw StabilityError(os.str());
    }
  }
  Eigen::VectorXd u = grid.initial();
  if (spec.id == PdeId::burgers) {
    const double cfl = u.cwiseAbs().maxCoeff() * dt / grid.dx();
    if (cfl > 1.0) {
      std::ostringstream os;
      os << "solve_reference: advective CFL number " << cfl << " exceeds 1";
      throw StabilityError(os.str());
    }
  }

  GridSolution sol;
  sol.pde_id = spec.id;
  sol.x_nodes = grid.x();
  sol.y_nodes = grid.y();
  sol.t_nodes = Eigen::VectorXd::LinSpaced(res.nt, spec.time_bounds.lo, spec.time_bounds.hi);
  sol.values.resize(res.nt, grid.size());
  sol.values.row(0) = u.transpose();

  double t = spec.time_bounds.lo;
  const int total_steps = (res.nt - 1) * res.substeps;

  if (scheme == Scheme::crank_nicolson) {
    // Backward-Euler half steps share the CN matrix I - (dt/2) D L.
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> cn(grid.implicit_matrix(0.5 * dt * diff));
    if (cn.info() != Eigen::Success) throw std::runtime_error("solve_reference: factorization failed");
    Eigen::VectorXd n_prev = grid.nonlinear(u);
    for (int step = 1; step <= total_steps; ++step) {
      Eigen::VectorXd next = u;
      if (step == 1) {
        const double h = 0.5 * dt;
        for (int half = 1; half <= 2; ++half) {
          const double th = t + half * h;
          const Eigen::VectorXd rhs = grid.gather(next) + h * diff * grid.boundary_laplacian(th) +
                                      h * grid.gather(grid.nonlinear(next));
          const Eigen::VectorXd inner = cn.solve(rhs);
          grid.scatter(inner, next);
          grid.impose_boundary(next, th);
        }
      } else {
        const Eigen::VectorXd n_now = grid.nonlinear(u);
        const Eigen::VectorXd rhs = grid.gather(u + 0.5 * dt * diff * grid.laplacian(u)) +
                                    0.5 * dt * diff * grid.boundary_laplacian(t + dt) +
                                    dt * grid.gather(1.5 * n_now - 0.5 * n_prev);
        grid.scatter(cn.solve(rhs), next);
        grid.impose_boundary(next, t + dt);
        n_prev = n_now;
      }
      if (step == 1) n_prev = grid.nonlinear(u);
      u = std::move(next);
      t = spec.time_bounds.lo + step * dt;
      if (step % res.substeps == 0) {
        check_finite(u, t);
        sol.values.row(step / res.substeps) = u.transpose();
      }
    }
  } else {
    auto rhs = [&](Eigen::VectorXd v, double time) {
      grid.impose_boundary(v, time);
      return Eigen::VectorXd(diff * grid.laplacian(v) + grid.nonlinear(v));
    };
    grid.impose_boundary(u, t);
    for (int step = 1; step <= total_steps; ++step) {
      const Eigen::VectorXd k1 = rhs(u, t);
      const Eigen::VectorXd k2 = rhs(u + 0.5 * dt * k1, t + 0.5 * dt);
      const Eigen::VectorXd k3 = rhs(u + 0.5 * dt * k2, t + 0.5 * dt);
      const Eigen::VectorXd k4 = rhs(u + dt * k3, t + dt);
      u += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      t = spec.time_bounds.lo + step * dt;
      grid.impose_boundary(u, t);
      if (step % res.substeps == 0) {
        check_finite(u, t);
        sol.values.row(step / res.substeps) = u.transpose();
      }
    }
  }
  return sol;
}

namespace {

// Index of the cell containing v on a uniform grid, and the local fraction.
std::pair<int, double> locate(const Eigen::VectorXd& nodes, double v) {
  const int n = static_cast<int>(nodes.size());
  if (n == 1) return {0, 0.0};
  const double h = (nodes[n - 1] - nodes[0]) / (n - 1);
  double s = (v - nodes[0]) / h;
  s = std::clamp(s, 0.0, double(n - 1));
  int i = static_cast<int>(std::floor(s));
  if (i >= n - 1) i = n - 2;
  return {i, s - i};
}

}  // namespace

double GridSolution::interpolate(std::span<const double> point) const {
  const int sd = spatial_dim();
  if (static_cast<int>(point.size()) != sd + 1)
    throw std::invalid_argument("GridSolution::interpolate: wrong point dimension");
  const auto [i, fx] = locate(x_nodes, point[0]);
  const auto [k, ft] = locate(t_nodes, point[sd]);
  if (sd == 1) {
    const double a = (1 - fx) * at(k, i) + fx * at(k, i + 1);
    const double b = (1 - fx) * at(k + 1, i) + fx * at(k + 1, i + 1);
    return (1 - ft) * a + ft * b;
  }
  const auto [j, fy] = locate(y_nodes, point[1]);
  auto plane = [&](int kk) {
    const double a = (1 - fx) * at(kk, i, j) + fx * at(kk, i + 1, j);
    const double b = (1 - fx) * at(kk, i, j + 1) + fx * at(kk, i + 1, j + 1);
    return (1 - fy) * a + fy * b;
  };
  return (1 - ft) * plane(k) + ft * plane(k + 1);
}

double GridSolution::max_abs(double x_lo, double x_hi) const {
  double m = 0.0;
  for (int j = 0; j < ny(); ++j)
    for (int i = 0; i < nx(); ++i) {
      if (x_nodes[i] < x_lo - 1e-12 || x_nodes[i] > x_hi + 1e-12) continue;
      m = std::max(m, values.col(Eigen::Index(j) * nx() + i).cwiseAbs().maxCoeff());
    }
  return m;
}

void write_grid_solution(const GridSolution& sol, const PdeSpec& spec, Scheme scheme,
                         const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / (stem + ".csv"), std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + (dir / (stem + ".csv")).string());
  const bool two_d = sol.spatial_dim() == 2;
  csv << (two_d ? "x,y,t,u\n" : "x,t,u\n");
  for (int k = 0; k < sol.nt(); ++k)
    for (int j = 0; j < sol.ny(); ++j)
      for (int i = 0; i < sol.nx(); ++i) {
        csv << io::format_double(sol.x_nodes[i]) << ',';
        if (two_d) csv << io::format_double(sol.y_nodes[j]) << ',';
        csv << io::format_double(sol.t_nodes[k]) << ',' << io::format_double(sol.at(k, i, j))
            << '\n';
      }

  nlohmann::json meta;
  meta["schema"] = 1;
  meta["pde"] = std::string(to_string(sol.pde_id));
  meta["scheme"] = std::string(to_string(scheme));
  meta["lambda"] = std::vector<double>(spec.lambda.data(), spec.lambda.data() + spec.lambda.size());
  meta["ic_form"] = spec.ic_form == IcForm::as_printed ? "as_printed" : "normalized";
  meta["nx"] = sol.nx();
  meta["ny"] = two_d ? sol.ny() : 0;
  meta["nt"] = sol.nt();
  meta["x_bounds"] = {sol.x_nodes[0], sol.x_nodes[sol.nx() - 1]};
  if (two_d) meta["y_bounds"] = {sol.y_nodes[0], sol.y_nodes[sol.ny() - 1]};
  meta["t_bounds"] = {sol.t_nodes[0], sol.t_nodes[sol.nt() - 1]};
  std::ofstream js(dir / (stem + ".json"), std::ios::binary);
  js << meta.dump(2) << '\n';
}

GridSolution read_grid_solution(const std::filesystem::path& dir, const std::string& stem) {
  std::ifstream js(dir / (stem + ".json"));
  if (!js) throw std::runtime_error("cannot read " + (dir / (stem + ".json")).string());
  const nlohmann::json meta = nlohmann::json::parse(js);
  if (meta.value("schema", 0) != 1) throw std::runtime_error("grid solution: unsupported schema");
  GridSolution sol;
  sol.pde_id = pde_id_from_string(meta.at("pde").get<std::string>());
  const int nx = meta.at("nx"), ny = meta.at("ny"), nt = meta.at("nt");
  const bool two_d = ny > 0;
  sol.x_nodes.resize(nx);
  if (two_d) sol.y_nodes.resize(ny);
  sol.t_nodes.resize(nt);
  sol.values.resize(nt, Eigen::Index(nx) * (two_d ? ny : 1));

  std::ifstream csv(dir / (stem + ".csv"));
  if (!csv) throw std::runtime_error("cannot read " + (dir / (stem + ".csv")).string());
  std::string line;
  std::getline(csv, line);
  const std::size_t cols = two_d ? 4 : 3;
  for (int k = 0; k < nt; ++k)
    for (int j = 0; j < (two_d ? ny : 1); ++j)
      for (int i = 0; i < nx; ++i) {
        if (!std::getline(csv, line)) throw std::runtime_error("grid solution: truncated CSV");
        const auto f = io::split(line);
        if (f.size() != cols) throw std::runtime_error("grid solution: malformed row");
        sol.x_nodes[i] = io::parse_double(f[0]);
        if (two_d) sol.y_nodes[j] = io::parse_double(f[1]);
        sol.t_nodes[k] = io::parse_double(f[cols - 2]);
        sol.values(k, Eigen::Index(j) * nx + i) = io::parse_double(f[cols - 1]);
      }
  return sol;
}

}  // namespace dpinn
