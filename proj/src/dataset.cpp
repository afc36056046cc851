#include "dpinn/dataset.hpp"

#include "dpinn/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dpinn {

// ---------------------------------------------------------------- decomposition

void DecompositionSpec::validate(const PdeSpec& spec) const {
  const Interval& xb = spec.spatial_bounds.at(0);
  double prev = xb.lo;
  for (double c : cuts) {
    if (!(c > prev) || !(c < xb.hi))
      throw std::invalid_argument(
          "decomposition: cuts must be strictly increasing and inside the open domain");
    prev = c;
  }
}

Interval DecompositionSpec::x_range(int q, const PdeSpec& spec) const {
  if (q < 0 || q >= n_subdomains()) throw std::out_of_range("subdomain index out of range");
  const Interval& xb = spec.spatial_bounds.at(0);
  return {q == 0 ? xb.lo : cuts[q - 1], q == n_subdomains() - 1 ? xb.hi : cuts[q]};
}

int DecompositionSpec::locate(double x) const {
  int q = 0;
  while (q < static_cast<int>(cuts.size()) && x > cuts[q]) ++q;
  return q;
}

bool DecompositionSpec::equal_sized(const PdeSpec& spec, double tol) const {
  const double w = spec.spatial_bounds[0].length() / n_subdomains();
  for (int q = 0; q < n_subdomains(); ++q)
    if (std::abs(x_range(q, spec).length() - w) > tol) return false;
  return true;
}

DecompositionSpec DecompositionSpec::equal(const PdeSpec& spec, int n_subdomains) {
  if (n_subdomains < 1) throw std::invalid_argument("need at least one subdomain");
  DecompositionSpec d;
  const Interval& xb = spec.spatial_bounds[0];
  for (int q = 1; q < n_subdomains; ++q) d.cuts.push_back(xb.lo + xb.length() * q / n_subdomains);
  return d;
}

// ---------------------------------------------------------------- noise

double NoiseSpec::max_level() const {
  if (per_subdomain_levels.empty()) return level;
  return *std::max_element(per_subdomain_levels.begin(), per_subdomain_levels.end());
}

void NoiseSpec::validate(int n_subdomains) const {
  auto check = [](double l) {
    if (!(l >= 0.0 && l < 1.0)) throw std::invalid_argument("noise level must lie in [0, 1)");
  };
  check(level);
  if (!per_subdomain_levels.empty()) {
    if (static_cast<int>(per_subdomain_levels.size()) != n_subdomains)
      throw std::invalid_argument("per_subdomain_levels length must equal n_subdomains");
    for (double l : per_subdomain_levels) check(l);
  }
  if (!(sigma_floor > 0.0) || !(sigma_residual > 0.0))
    throw std::invalid_argument("likelihood stds must be > 0");
}

// ---------------------------------------------------------------- scenarios and budgets

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::BI: return "BI";
    case Scenario::BIC: return "BIC";
    case Scenario::RD: return "RD";
  }
  return "?";
}

Scenario scenario_from_string(std::string_view name) {
  if (name == "BI") return Scenario::BI;
  if (name == "BIC") return Scenario::BIC;
  if (name == "RD") return Scenario::RD;
  throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");
}

void Budget::validate(int n_subdomains, Scenario scenario) const {
  auto per_sub = [&](const std::vector<int>& v, const char* name) {
    if (static_cast<int>(v.size()) != n_subdomains)
      throw std::invalid_argument(std::string("budget.") + name + " needs one entry per subdomain");
    for (int c : v)
      if (c < 0) throw std::invalid_argument(std::string("budget.") + name + " must be >= 0");
  };
  auto per_cut = [&](const std::vector<int>& v, const char* name) {
    if (static_cast<int>(v.size()) != n_subdomains - 1)
      throw std::invalid_argument(std::string("budget.") + name + " needs one entry per interface");
    for (int c : v)
      if (c < 0) throw std::invalid_argument(std::string("budget.") + name + " must be >= 0");
  };
  per_sub(bc, "bc");
  per_sub(ic, "ic");
  per_sub(phi, "phi");
  per_sub(data, "data");
  per_cut(cdc, "cdc");
  per_cut(interface_data, "interface_data");

  auto any = [](const std::vector<int>& v) {
    return std::any_of(v.begin(), v.end(), [](int c) { return c > 0; });
  };
  if (scenario != Scenario::BIC && any(interface_data))
    throw std::invalid_argument("interface data requested in a non-BIC scenario");
  if (scenario != Scenario::RD && any(data))
    throw std::invalid_argument(std::string(to_string(scenario)) +
                                " scenario takes no interior data points");
  if (scenario == Scenario::RD && (any(bc) || any(ic)))
    throw std::invalid_argument("RD scenario takes no initial or boundary points");
  if (scenario == Scenario::BIC && n_subdomains < 2)
    throw std::invalid_argument("BIC scenario needs at least two subdomains");
}

Budget default_budget(const PdeSpec& spec, Scenario scenario, ProblemKind problem,
                      const DecompositionSpec& decomp) {
  const int n = decomp.n_subdomains();
  Budget b;
  b.bc.assign(n, 0);
  b.ic.assign(n, 0);
  b.phi.assign(n, 0);
  b.data.assign(n, 0);
  b.cdc.assign(n - 1, 0);
  b.interface_data.assign(n - 1, 0);
  const bool bi = scenario != Scenario::RD;

  if (problem == ProblemKind::inverse) {
    for (int q = 0; q < n; ++q) {
      b.phi[q] = n == 1 ? 300 : 150;
      b.data[q] = n == 1 ? 300 : 150;
    }
    for (int c = 0; c < n - 1; ++c) b.cdc[c] = 40;
    if (scenario != Scenario::RD) throw std::invalid_argument("inverse problems use the RD scenario");
    return b;
  }

  if (spec.id == PdeId::fokker_planck_2d) {
    // 300 residual and 60 initial points in total, split across subdomains.
    for (int q = 0; q < n; ++q) {
      b.phi[q] = 300 / n;
      if (bi) {
        b.ic[q] = 60 / n;
        b.bc[q] = 60 / n;
      } else {
        b.data[q] = 60 / n;
      }
    }
    for (int c = 0; c < n - 1; ++c) {
      b.cdc[c] = 20;
      if (scenario == Scenario::BIC) b.interface_data[c] = 20;
    }
    return b;
  }

  const bool burgers = spec.id == PdeId::burgers;
  if (n == 1) {
    if (bi) {
      b.bc[0] = 40;
      b.ic[0] = burgers ? 150 : 80;
    } else {
      b.data[0] = burgers ? 250 : 60;
    }
    b.phi[0] = burgers ? 300 : 60;
    return b;
  }

  const bool uneven = n == 2 && !decomp.equal_sized(spec);
  const int larger = uneven && decomp.x_range(1, spec).length() > decomp.x_range(0, spec).length();
  for (int q = 0; q < n; ++q) {
    const bool big = !uneven || q == larger;
    if (bi) {
      b.bc[q] = (q == 0 || q == n - 1) ? 20 : 0;
      b.ic[q] = uneven ? (big ? 60 : 20) : 40;
    } else {
      b.data[q] = uneven ? (big ? 40 : 20) : 30;
    }
    b.phi[q] = uneven ? (big ? 40 : 20) : (burgers ? 100 : 30);
  }
  for (int c = 0; c < n - 1; ++c) {
    b.cdc[c] = 20;
    if (scenario == Scenario::BIC) b.interface_data[c] = 20;
  }
  return b;
}

// ---------------------------------------------------------------- point sets

void PointSet::reserve(int input_dim, Eigen::Index n) {
  points.resize(input_dim, 0);
  values.resize(0);
  sigmas.resize(0);
  subdomain.clear();
  subdomain.reserve(n);
}

void PointSet::push(std::span<const double> point, double value, double sigma, int q) {
  const Eigen::Index n = size();
  const Eigen::Index d = static_cast<Eigen::Index>(point.size());
  if (points.rows() != d) {
    if (n != 0) throw std::invalid_argument("point dimension mismatch");
    points.resize(d, 0);
  }
  points.conservativeResize(d, n + 1);
  for (Eigen::Index i = 0; i < d; ++i) points(i, n) = point[i];
  values.conservativeResize(n + 1);
  values[n] = value;
  sigmas.conservativeResize(n + 1);
  sigmas[n] = sigma;
  subdomain.push_back(q);
}

std::vector<Eigen::Index> PointSet::indices_of(int q) const {
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < size(); ++i)
    if (subdomain[i] == q) out.push_back(i);
  return out;
}

void TrainingSet::validate(const PdeSpec& spec, const DecompositionSpec& decomp) const {
  if (input_dim != spec.input_dim()) throw std::invalid_argument("dataset input_dim mismatch");
  if (n_subdomains != decomp.n_subdomains())
    throw std::invalid_argument("dataset subdomain count mismatch");
  const double tol = 1e-12;
  auto check = [&](const PointSet& s, const char* name, bool on_cut) {
    if (s.size() > 0 && s.points.rows() != input_dim)
      throw std::invalid_argument(std::string(name) + ": wrong point dimension");
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (!(s.sigmas[i] > 0.0) || !std::isfinite(s.sigmas[i]))
        throw std::invalid_argument(std::string(name) + ": sigma must be > 0");
      const int q = s.subdomain[i];
      if (q < 0 || q >= n_subdomains || (on_cut && q >= n_subdomains - 1))
        throw std::invalid_argument(std::string(name) + ": bad subdomain index");
      const double x = s.points(0, i);
      if (on_cut) {
        if (std::abs(x - decomp.cuts[q]) > tol)
          throw std::invalid_argument(std::string(name) + ": interface point off its cut");
      } else if (!decomp.x_range(q, spec).contains(x, tol)) {
        throw std::invalid_argument(std::string(name) + ": point outside its subdomain");
      }
    }
  };
  check(u, "u", false);
  check(phi, "phi", false);
  check(ic, "ic", false);
  check(bc, "bc", false);
  check(cdc, "cdc", true);
  if (cdc_sigma_flux.size() != cdc.size()) throw std::invalid_argument("cdc flux std count mismatch");
  for (Eigen::Index i = 0; i < cdc_sigma_flux.size(); ++i)
    if (!(cdc_sigma_flux[i] > 0.0)) throw std::invalid_argument("cdc: flux sigma must be > 0");
}

// ---------------------------------------------------------------- sampling

namespace {

class Sampler {
 public:
  Sampler(const GridSolution& sol, const PdeSpec& spec, const DecompositionSpec& decomp,
          const NoiseSpec& noise)
      : sol_(sol),
        spec_(spec),
        decomp_(decomp),
        noise_(noise),
        points_rng_(io::derive_seed(noise.seed, "points")),
        noise_rng_(io::derive_seed(noise.seed, "noise")) {
    for (int q = 0; q < decomp.n_subdomains(); ++q) {
      const Interval r = decomp.x_range(q, spec);
      sigma_noise_.push_back(noise.level_for(q) * sol.max_abs(r.lo, r.hi));
    }
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(points_rng_);
  }

  // Noisy observation of the reference at p for subdomain q.
  std::pair<double, double> observe(std::span<const double> p, int q) {
    const double clean = sol_.interpolate(p);
    const double z = normal_(noise_rng_);
    const double value = clean + sigma_noise_[q] * z;
    return {value, std::max(sigma_noise_[q], noise_.sigma_floor)};
  }

  std::vector<double> interior(int q) {
    const Interval r = decomp_.x_range(q, spec_);
    std::vector<double> p(spec_.input_dim());
    p[0] = uniform(r.lo, r.hi);
    if (spec_.spatial_dim() == 2) p[1] = uniform(spec_.spatial_bounds[1].lo, spec_.spatial_bounds[1].hi);
    p.back() = uniform(spec_.time_bounds.lo, spec_.time_bounds.hi);
    return p;
  }

  std::vector<double> initial(int q) {
    std::vector<double> p = interior(q);
    p.back() = spec_.time_bounds.lo;
    return p;
  }

  // Point on the part of the domain boundary owned by subdomain q.
  std::vector<double> boundary(int q, int index) {
    const Interval r = decomp_.x_range(q, spec_);
    const Interval& xb = spec_.spatial_bounds[0];
    const bool left = q == 0, right = q == decomp_.n_subdomains() - 1;
    std::vector<double> p(spec_.input_dim());
    if (spec_.spatial_dim() == 1) {
      if (!left && !right) throw std::invalid_argument("subdomain has no boundary face");
      const bool use_left = left && (!right || index % 2 == 0);
      p[0] = use_left ? xb.lo : xb.hi;
    } else {
      const Interval& yb = spec_.spatial_bounds[1];
      // Perimeter parameterization: left face, right face, bottom and top segments.
      const double lx = left ? yb.length() : 0.0, rx = right ? yb.length() : 0.0;
      const double w = r.length();
      double s = uniform(0.0, lx + rx + 2.0 * w);
      if (s < lx) {
        p = {xb.lo, yb.lo + s, 0.0};
      } else if ((s -= lx) < rx) {
        p = {xb.hi, yb.lo + s, 0.0};
      } else if ((s -= rx) < w) {
        p = {r.lo + s, yb.lo, 0.0};
      } else {
        p = {r.lo + (s - w), yb.hi, 0.0};
      }
    }
    p.back() = uniform(spec_.time_bounds.lo, spec_.time_bounds.hi);
    return p;
  }

  std::vector<double> on_cut(int c) {
    std::vector<double> p(spec_.input_dim());
    p[0] = decomp_.cuts[c];
    if (spec_.spatial_dim() == 2) p[1] = uniform(spec_.spatial_bounds[1].lo, spec_.spatial_bounds[1].hi);
    p.back() = uniform(spec_.time_bounds.lo, spec_.time_bounds.hi);
    return p;
  }

 private:
  const GridSolution& sol_;
  const PdeSpec& spec_;
  const DecompositionSpec& decomp_;
  const NoiseSpec& noise_;
  std::mt19937_64 points_rng_;
  std::mt19937_64 noise_rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::vector<double> sigma_noise_;
};

}  // namespace

TrainingSet sample_training_set(const GridSolution& solution, const PdeSpec& spec,
                                const DecompositionSpec& decomp, Scenario scenario,
                                const Budget& budget, const NoiseSpec& noise) {
  spec.validate();
  decomp.validate(spec);
  noise.validate(decomp.n_subdomains());
  budget.validate(decomp.n_subdomains(), scenario);
  if (solution.spatial_dim() != spec.spatial_dim())
    throw std::invalid_argument("reference solution dimension does not match the PDE");
  const int n = decomp.n_subdomains();
  const int grid_support = solution.nx() * solution.ny() * solution.nt();
  auto total = [](const std::vector<int>& v) {
    long s = 0;
    for (int c : v) s += c;
    return s;
  };
  if (total(budget.bc) + total(budget.ic) + total(budget.phi) + total(budget.data) +
          total(budget.cdc) + total(budget.interface_data) >
      grid_support)
    throw std::invalid_argument("budget exceeds grid support");

  TrainingSet ts;
  ts.input_dim = spec.input_dim();
  ts.n_subdomains = n;
  for (PointSet* s : {&ts.u, &ts.phi, &ts.ic, &ts.bc, &ts.cdc}) s->reserve(ts.input_dim, 0);

  Sampler sampler(solution, spec, decomp, noise);
  for (int q = 0; q < n; ++q) {
    for (int i = 0; i < budget.bc[q]; ++i) {
      const auto p = sampler.boundary(q, i);
      const auto [v, s] = sampler.observe(p, q);
      ts.bc.push(p, v, s, q);
    }
    for (int i = 0; i < budget.ic[q]; ++i) {
      const auto p = sampler.initial(q);
      const auto [v, s] = sampler.observe(p, q);
      ts.ic.push(p, v, s, q);
    }
    for (int i = 0; i < budget.phi[q]; ++i)
      ts.phi.push(sampler.interior(q), 0.0, noise.sigma_residual, q);
    for (int i = 0; i < budget.data[q]; ++i) {
      const auto p = sampler.interior(q);
      const auto [v, s] = sampler.observe(p, q);
      ts.u.push(p, v, s, q);
    }
  }
  std::vector<double> flux;
  for (int c = 0; c < n - 1; ++c) {
    for (int i = 0; i < budget.cdc[c]; ++i) {
      ts.cdc.push(sampler.on_cut(c), 0.0, noise.sigma_residual, c);
      flux.push_back(noise.sigma_residual);
    }
    for (int i = 0; i < budget.interface_data[c]; ++i) {
      const auto p = sampler.on_cut(c);
      for (int q : {c, c + 1}) {
        const auto [v, s] = sampler.observe(p, q);
        ts.u.push(p, v, s, q);
      }
    }
  }
  ts.cdc_sigma_flux = Eigen::Map<Eigen::VectorXd>(flux.data(), Eigen::Index(flux.size()));
  return ts;
}

// ---------------------------------------------------------------- CSV

namespace {

constexpr std::string_view kSchemaLine = "# dpinn-dataset schema=1";

struct CategoryRef {
  std::string_view name;
  PointSet TrainingSet::*set;
};
constexpr CategoryRef kCategories[] = {{"u", &TrainingSet::u},
                                       {"phi", &TrainingSet::phi},
                                       {"ic", &TrainingSet::ic},
                                       {"bc", &TrainingSet::bc},
                                       {"cdc", &TrainingSet::cdc}};

}  // namespace

void export_dataset(const TrainingSet& ts, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  out << kSchemaLine << '\n';
  out << (ts.input_dim == 3 ? "category,subdomain,x,y,t,value,sigma\n"
                            : "category,subdomain,x,t,value,sigma\n");
  for (const auto& cat : kCategories) {
    const PointSet& s = ts.*cat.set;
    const bool cdc = cat.name == "cdc";
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      out << cat.name << ',' << s.subdomain[i];
      for (int k = 0; k < ts.input_dim; ++k) out << ',' << io::format_double(s.points(k, i));
      out << ',' << io::format_double(cdc ? ts.cdc_sigma_flux[i] : s.values[i]) << ','
          << io::format_double(s.sigmas[i]) << '\n';
    }
  }
}

TrainingSet import_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset: empty file");
  if (line.rfind("# dpinn-dataset", 0) != 0) throw std::runtime_error("dataset: missing schema line");
  if (line != kSchemaLine) throw std::runtime_error("dataset: schema version mismatch: " + line);
  if (!std::getline(in, line)) throw std::runtime_error("dataset: missing header");

  TrainingSet ts;
  if (line == "category,subdomain,x,t,value,sigma") {
    ts.input_dim = 2;
  } else if (line == "category,subdomain,x,y,t,value,sigma") {
    ts.input_dim = 3;
  } else {
    throw std::runtime_error("dataset: unexpected header '" + line + "'");
  }
  for (const auto& cat : kCategories) (ts.*cat.set).reserve(ts.input_dim, 0);
  std::vector<double> flux;
  int max_sub = 0;
  const std::size_t cols = 4 + ts.input_dim;
  std::vector<double> p(ts.input_dim);
  long row = 2;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    try {
      const auto f = io::split(line);
      if (f.size() != cols) throw std::runtime_error("wrong column count");
      const CategoryRef* cat = nullptr;
      for (const auto& c : kCategories)
        if (c.name == f[0]) cat = &c;
      if (!cat) throw std::runtime_error("unknown category '" + std::string(f[0]) + "'");
      const int q = static_cast<int>(io::parse_int(f[1]));
      if (q < 0) throw std::runtime_error("negative subdomain index");
      for (int k = 0; k < ts.input_dim; ++k) p[k] = io::parse_double(f[2 + k]);
      const double value = io::parse_double(f[2 + ts.input_dim]);
      const double sigma = io::parse_double(f[3 + ts.input_dim]);
      if (!(sigma > 0.0)) throw std::runtime_error("sigma must be > 0");
      const bool cdc = cat->name == "cdc";
      if (cdc && !(value > 0.0)) throw std::runtime_error("cdc flux sigma must be > 0");
      (ts.*cat->set).push(p, cdc ? 0.0 : value, sigma, q);
      if (cdc) flux.push_back(value);
      max_sub = std::max(max_sub, cdc ? q + 1 : q);
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "dataset " << path.string() << " line " << row << ": " << e.what();
      throw std::runtime_error(os.str());
    }
  }
  ts.n_subdomains = max_sub + 1;
  ts.cdc_sigma_flux = Eigen::Map<Eigen::VectorXd>(flux.data(), Eigen::Index(flux.size()));
  return ts;
}

}  // namespace dpinn
