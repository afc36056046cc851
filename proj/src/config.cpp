#include "dpinn/config.hpp"

#include "dpinn/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dpinn {

using nlohmann::json;

namespace {

const double kNoiseLevels[] = {0.0, 0.05, 0.10, 0.15};

bool is_table_level(double level) {
  return std::any_of(std::begin(kNoiseLevels), std::end(kNoiseLevels),
                     [&](double l) { return std::abs(l - level) < 1e-12; });
}

std::string pde_label(PdeId id) {
  switch (id) {
    case PdeId::burgers: return "Burgers";
    case PdeId::fisher_kpp: return "Fisher-KPP";
    case PdeId::allen_cahn: return "Allen-Cahn";
    default: return "Fokker-Planck";
  }
}

// Rejects keys outside `allowed` so typos do not silently fall back to defaults.
void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw std::invalid_argument("unknown key '" + k + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::vector<int> read_counts(const json& j) {
  if (j.is_number_integer()) return {j.get<int>()};
  return j.get<std::vector<int>>();
}

}  // namespace

Preset preset_values(const std::string& name) {
  if (name == "desk") return {300, 500, 32, 3};
  if (name == "paper") return {1000, 1500, 64, 5};
  throw std::invalid_argument("unknown preset '" + name + "' (expected desk or paper)");
}

PdeSpec ExperimentConfig::pde_spec() const {
  PdeSpec spec = PdeSpec::make(pde);
  spec.ic_form = ic_form;
  spec.flux_form = flux_form;
  return spec;
}

Budget ExperimentConfig::effective_budget() const {
  if (budget) return *budget;
  return default_budget(pde_spec(), scenario, problem, decomp);
}

std::string ExperimentConfig::axis() const {
  if (dims == 2) return "2D";
  const bool uneven_noise =
      !noise.per_subdomain_levels.empty() &&
      std::adjacent_find(noise.per_subdomain_levels.begin(), noise.per_subdomain_levels.end(),
                         std::not_equal_to<>()) != noise.per_subdomain_levels.end();
  const bool uneven_size = !decomp.equal_sized(pde_spec());
  if (uneven_noise && uneven_size) return "DNS";
  if (uneven_noise) return "DN";
  if (uneven_size) return "DS";
  return "base";
}

std::string ExperimentConfig::cell() const {
  std::ostringstream os;
  const int pct = static_cast<int>(std::lround(noise.max_level() * 100.0));
  os << (problem == ProblemKind::inverse ? "IP" : "FP") << ' ' << dims << "D / " << axis() << " / "
     << to_string(scenario) << " / " << pde_label(pde) << " / " << pct << '%';
  return os.str();
}

void ExperimentConfig::validate() const {
  const PdeSpec spec = pde_spec();
  spec.validate();
  if (dims != spec.spatial_dim())
    throw std::invalid_argument("dims does not match the PDE (2d is only defined for fokker_planck)");
  NetworkArch a = arch;
  a.input_dim = spec.input_dim();
  a.validate();
  decomp.validate(spec);
  noise.validate(decomp.n_subdomains());
  hmc.validate();
  effective_budget().validate(decomp.n_subdomains(), scenario);
  if (snapshot_times.empty()) throw std::invalid_argument("snapshot_times must not be empty");
  for (double t : snapshot_times)
    if (!spec.time_bounds.contains(t)) throw std::invalid_argument("snapshot time outside the time domain");
  if (eval_nx == 1 || eval_ny == 1 || eval_nx < 0 || eval_ny < 0) throw std::invalid_argument("evaluation grid too small");
  if (problem == ProblemKind::forward && constraint_mode != LambdaMode::forward)
    throw std::invalid_argument("constraint_mode applies to inverse problems only");
  if (problem == ProblemKind::inverse) {
    if (constraint_mode == LambdaMode::forward)
      throw std::invalid_argument("inverse problems need constraint_mode none, soft or hard");
    if (scenario != Scenario::RD) throw std::invalid_argument("inverse problems use the RD scenario");
    if (constraint_mode == LambdaMode::inverse_soft && decomp.n_subdomains() < 2)
      throw std::invalid_argument("soft constraint needs at least two subdomains");
  }
  if (checkpoint_every < 1) throw std::invalid_argument("checkpoint_every must be >= 1");
  if (extended) return;

  // Membership in the supported test matrix.
  const std::string where = "test matrix cell '" + cell() + "'";
  const double level = noise.max_level();
  if (!is_table_level(level) ||
      std::any_of(noise.per_subdomain_levels.begin(), noise.per_subdomain_levels.end(),
                  [](double l) { return !is_table_level(l); }))
    throw std::invalid_argument(where + " is not in the table: noise levels are 0, 5, 10 and 15%");
  const int n = decomp.n_subdomains();
  const std::string ax = axis();
  if (n > 4) throw std::invalid_argument(where + " is not in the table: at most four subdomains");
  if (n > 2 && !(pde == PdeId::allen_cahn && scenario == Scenario::RD && ax == "base" &&
                 problem == ProblemKind::forward))
    throw std::invalid_argument(where +
                                " is not in the table: three or four subdomains were run for Allen-Cahn RD only");
  if (dims == 2) {
    if (problem != ProblemKind::forward || level != 0.0)
      throw std::invalid_argument(where + " is not in the table: FP 2D is run noise-free only");
    return;
  }
  if (problem == ProblemKind::inverse) {
    if (ax != "base") throw std::invalid_argument(where + " is not in the table: IP 1D uses even noise and sizes");
    return;
  }
  const bool fp = pde == PdeId::fokker_planck_1d;
  if (ax == "DN" && (pde == PdeId::allen_cahn || level == 0.0))
    throw std::invalid_argument(where + " is not in the table");
  if (ax == "DS" && !fp) throw std::invalid_argument(where + " is not in the table: DS is Fokker-Planck only");
  if (ax == "DNS" && (!fp || level == 0.0))
    throw std::invalid_argument(where + " is not in the table: DNS is Fokker-Planck only, 5-15%");
}

ExperimentConfig config_from_json(const std::string& text,
                                  const std::optional<std::string>& preset_override) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, {"schema", "name", "pde", "problem", "dims", "scenario", "noise", "decomposition",
                 "budgets", "constraint_mode", "lambda_transform", "hmc", "network", "preset",
                 "snapshot_times", "output_dir", "seed", "extended", "ic_form", "flux_form",
                 "mirrored_interface", "parallel", "posterior", "reference", "eval",
                 "checkpoint_every", "resume"},
             "config");
  if (!j.contains("schema") || j.at("schema") != 1)
    throw std::invalid_argument("config must declare \"schema\": 1");

  ExperimentConfig c;
  try {
    read(j, "name", c.name);
    int dims = 1;
    if (j.contains("dims")) {
      const json& d = j.at("dims");
      if (d.is_string()) {
        const std::string s = d.get<std::string>();
        if (s == "1d" || s == "1D") dims = 1;
        else if (s == "2d" || s == "2D") dims = 2;
        else throw std::invalid_argument("dims must be 1d or 2d");
      } else {
        dims = d.get<int>();
      }
    }
    c.dims = dims;
    if (j.contains("pde")) {
      const std::string name = j.at("pde").get<std::string>();
      c.pde = pde_id_from_string(name);
      if (c.pde == PdeId::fokker_planck_1d && dims == 2) c.pde = PdeId::fokker_planck_2d;
      if (j.contains("dims") && c.pde == PdeId::fokker_planck_2d && dims == 1)
        throw std::invalid_argument("fokker_planck_2d needs dims 2d");
    }
    c.dims = PdeSpec::make(c.pde).spatial_dim();
    if (dims != c.dims) throw std::invalid_argument("dims does not match the PDE");

    if (j.contains("problem")) {
      const std::string p = j.at("problem").get<std::string>();
      if (p == "FP") c.problem = ProblemKind::forward;
      else if (p == "IP") c.problem = ProblemKind::inverse;
      else throw std::invalid_argument("problem must be FP or IP");
    }
    if (j.contains("scenario")) c.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    else if (c.problem == ProblemKind::inverse) c.scenario = Scenario::RD;
    read(j, "seed", c.seed);
    read(j, "extended", c.extended);
    read(j, "mirrored_interface", c.mirrored_interface);
    read(j, "parallel", c.parallel);
    read(j, "checkpoint_every", c.checkpoint_every);
    read(j, "resume", c.resume);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    read(j, "snapshot_times", c.snapshot_times);
    if (j.contains("ic_form")) {
      const std::string s = j.at("ic_form").get<std::string>();
      if (s == "as_printed") c.ic_form = IcForm::as_printed;
      else if (s == "normalized") c.ic_form = IcForm::normalized;
      else throw std::invalid_argument("ic_form must be as_printed or normalized");
    }
    if (j.contains("flux_form")) {
      const std::string s = j.at("flux_form").get<std::string>();
      if (s == "normal_derivative") c.flux_form = FluxForm::normal_derivative;
      else if (s == "conservative") c.flux_form = FluxForm::conservative;
      else throw std::invalid_argument("flux_form must be normal_derivative or conservative");
    }
    if (j.contains("lambda_transform"))
      c.lambda_transform = lambda_transform_from_string(j.at("lambda_transform").get<std::string>());
    if (c.problem == ProblemKind::inverse) c.constraint_mode = LambdaMode::inverse_hard;
    if (j.contains("constraint_mode"))
      c.constraint_mode = lambda_mode_from_string(j.at("constraint_mode").get<std::string>());

    if (j.contains("noise")) {
      const json& n = j.at("noise");
      check_keys(n, {"level", "per_subdomain_levels", "seed", "sigma_floor", "sigma_residual"}, "noise");
      read(n, "level", c.noise.level);
      read(n, "per_subdomain_levels", c.noise.per_subdomain_levels);
      if (n.contains("seed")) {
        c.noise.seed = n.at("seed").get<std::uint64_t>();
        c.noise_seed_set = true;
      }
      read(n, "sigma_floor", c.noise.sigma_floor);
      read(n, "sigma_residual", c.noise.sigma_residual);
      if (!c.noise.per_subdomain_levels.empty() && !n.contains("level"))
        c.noise.level = c.noise.max_level();
    }

    const PdeSpec spec = c.pde_spec();
    c.decomp = DecompositionSpec::equal(spec, 2);
    if (j.contains("decomposition")) {
      const json& d = j.at("decomposition");
      check_keys(d, {"cuts", "n_subdomains"}, "decomposition");
      if (d.contains("cuts") && d.contains("n_subdomains"))
        throw std::invalid_argument("decomposition takes either cuts or n_subdomains");
      if (d.contains("cuts")) c.decomp.cuts = d.at("cuts").get<std::vector<double>>();
      if (d.contains("n_subdomains"))
        c.decomp = DecompositionSpec::equal(spec, d.at("n_subdomains").get<int>());
    }
    c.decomp.validate(spec);

    const std::string preset =
        preset_override ? *preset_override : j.value("preset", std::string("desk"));
    const Preset pv = preset_values(preset);
    c.preset = preset;
    c.hmc.burn_in = pv.burn_in;
    c.hmc.n_samples = pv.n_samples;
    c.arch.hidden_width = pv.hidden_width;
    c.arch.hidden_layers = pv.hidden_layers;
    c.arch.input_dim = spec.input_dim();

    if (j.contains("hmc")) {
      const json& h = j.at("hmc");
      check_keys(h, {"step_size", "n_leapfrog", "burn_in", "n_samples", "seed", "adapt",
                     "target_accept", "divergence_threshold", "max_consecutive_divergences"},
                 "hmc");
      read(h, "step_size", c.hmc.step_size);
      read(h, "n_leapfrog", c.hmc.n_leapfrog);
      read(h, "burn_in", c.hmc.burn_in);
      read(h, "n_samples", c.hmc.n_samples);
      read(h, "adapt", c.hmc.adapt);
      read(h, "target_accept", c.hmc.target_accept);
      read(h, "divergence_threshold", c.hmc.divergence_threshold);
      read(h, "max_consecutive_divergences", c.hmc.max_consecutive_divergences);
      if (h.contains("seed")) {
        c.hmc.seed = h.at("seed").get<std::uint64_t>();
        c.hmc_seed_set = true;
      }
    }
    if (j.contains("network")) {
      const json& n = j.at("network");
      check_keys(n, {"hidden_layers", "hidden_width", "activation", "init"}, "network");
      read(n, "hidden_layers", c.arch.hidden_layers);
      read(n, "hidden_width", c.arch.hidden_width);
      if (n.contains("activation") && n.at("activation") != "tanh")
        throw std::invalid_argument("only the tanh activation is supported");
      if (n.contains("init")) {
        const std::string s = n.at("init").get<std::string>();
        if (s == "xavier") c.init = InitRule::xavier;
        else if (s == "unit_normal") c.init = InitRule::unit_normal;
        else throw std::invalid_argument("network.init must be xavier or unit_normal");
      }
    }
    if (j.contains("posterior")) {
      const json& p = j.at("posterior");
      check_keys(p, {"prior_std_theta", "lambda_prior_mean", "lambda_prior_std",
                     "soft_constraint_sigma", "sigma_avg", "sigma_flux"},
                 "posterior");
      read(p, "prior_std_theta", c.posterior.prior_std_theta);
      read(p, "lambda_prior_mean", c.posterior.lambda_prior_mean);
      read(p, "lambda_prior_std", c.posterior.lambda_prior_std);
      read(p, "soft_constraint_sigma", c.posterior.soft_constraint_sigma);
      read(p, "sigma_avg", c.posterior.sigma_avg);
      read(p, "sigma_flux", c.posterior.sigma_flux);
    }
    if (j.contains("reference")) {
      const json& r = j.at("reference");
      check_keys(r, {"nx", "ny", "nt", "substeps", "scheme"}, "reference");
      GridResolution res = default_resolution(c.pde);
      read(r, "nx", res.nx);
      read(r, "ny", res.ny);
      read(r, "nt", res.nt);
      read(r, "substeps", res.substeps);
      if (r.contains("scheme")) c.scheme = scheme_from_string(r.at("scheme").get<std::string>());
      c.resolution = res;
    }
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      check_keys(e, {"nx", "ny"}, "eval");
      read(e, "nx", c.eval_nx);
      read(e, "ny", c.eval_ny);
    }
    if (j.contains("budgets")) {
      const json& b = j.at("budgets");
      check_keys(b, {"bc", "ic", "phi", "data", "cdc", "interface_data"}, "budgets");
      Budget bud = default_budget(spec, c.scenario, c.problem, c.decomp);
      if (b.contains("bc")) bud.bc = read_counts(b.at("bc"));
      if (b.contains("ic")) bud.ic = read_counts(b.at("ic"));
      if (b.contains("phi")) bud.phi = read_counts(b.at("phi"));
      if (b.contains("data")) bud.data = read_counts(b.at("data"));
      if (b.contains("cdc")) bud.cdc = read_counts(b.at("cdc"));
      if (b.contains("interface_data")) bud.interface_data = read_counts(b.at("interface_data"));
      c.budget = bud;
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!c.noise_seed_set) c.noise.seed = io::derive_seed(c.seed, "data");
  if (!c.hmc_seed_set) c.hmc.seed = io::derive_seed(c.seed, "hmc");
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::optional<std::string>& preset_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), preset_override);
}

std::string config_to_json(const ExperimentConfig& c) {
  const Budget b = c.effective_budget();
  json j;
  j["schema"] = 1;
  j["name"] = c.name;
  j["pde"] = std::string(to_string(c.pde));
  j["problem"] = c.problem == ProblemKind::inverse ? "IP" : "FP";
  j["dims"] = c.dims == 2 ? "2d" : "1d";
  j["scenario"] = std::string(to_string(c.scenario));
  j["noise"] = {{"level", c.noise.level},
                {"per_subdomain_levels", c.noise.per_subdomain_levels},
                {"seed", c.noise.seed},
                {"sigma_floor", c.noise.sigma_floor},
                {"sigma_residual", c.noise.sigma_residual}};
  j["decomposition"] = {{"cuts", c.decomp.cuts}};
  j["budgets"] = {{"bc", b.bc}, {"ic", b.ic}, {"phi", b.phi}, {"data", b.data},
                  {"cdc", b.cdc}, {"interface_data", b.interface_data}};
  j["constraint_mode"] = std::string(to_string(c.constraint_mode));
  j["lambda_transform"] = std::string(to_string(c.lambda_transform));
  j["hmc"] = {{"step_size", c.hmc.step_size},
              {"n_leapfrog", c.hmc.n_leapfrog},
              {"burn_in", c.hmc.burn_in},
              {"n_samples", c.hmc.n_samples},
              {"seed", c.hmc.seed},
              {"adapt", c.hmc.adapt},
              {"target_accept", c.hmc.target_accept},
              {"divergence_threshold", c.hmc.divergence_threshold},
              {"max_consecutive_divergences", c.hmc.max_consecutive_divergences}};
  j["network"] = {{"hidden_layers", c.arch.hidden_layers},
                  {"hidden_width", c.arch.hidden_width},
                  {"activation", "tanh"},
                  {"init", c.init == InitRule::xavier ? "xavier" : "unit_normal"}};
  j["preset"] = c.preset;
  j["snapshot_times"] = c.snapshot_times;
  j["output_dir"] = c.output_dir.generic_string();
  j["seed"] = c.seed;
  j["extended"] = c.extended;
  j["ic_form"] = c.ic_form == IcForm::as_printed ? "as_printed" : "normalized";
  j["flux_form"] = c.flux_form == FluxForm::normal_derivative ? "normal_derivative" : "conservative";
  j["mirrored_interface"] = c.mirrored_interface;
  j["parallel"] = c.parallel;
  j["posterior"] = {{"prior_std_theta", c.posterior.prior_std_theta},
                    {"lambda_prior_mean", c.posterior.lambda_prior_mean},
                    {"lambda_prior_std", c.posterior.lambda_prior_std},
                    {"soft_constraint_sigma", c.posterior.soft_constraint_sigma},
                    {"sigma_avg", c.posterior.sigma_avg},
                    {"sigma_flux", c.posterior.sigma_flux}};
  const GridResolution res = c.resolution.value_or(default_resolution(c.pde));
  j["reference"] = {{"nx", res.nx},
                    {"ny", res.ny},
                    {"nt", res.nt},
                    {"substeps", res.substeps},
                    {"scheme", std::string(to_string(c.scheme))}};
  j["eval"] = {{"nx", c.eval_nx}, {"ny", c.eval_ny}};
  j["checkpoint_every"] = c.checkpoint_every;
  return j.dump(2);
}

namespace {

void set_dotted(json& j, const std::string& path, const json& value) {
  json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) {
      (*cur)[key] = value;
      return;
    }
    if (!cur->contains(key)) (*cur)[key] = json::object();
    cur = &(*cur)[key];
    start = dot + 1;
  }
}

std::string value_label(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace

std::vector<MatrixEntry> expand_matrix(const std::string& text, const std::filesystem::path& out) {
  json m;
  try {
    m = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("matrix file is not valid JSON: ") + e.what());
  }
  check_keys(m, {"schema", "base", "experiments", "sweep"}, "matrix");
  if (!m.contains("schema") || m.at("schema") != 1)
    throw std::invalid_argument("matrix must declare \"schema\": 1");
  json base = m.value("base", json::object());
  base["schema"] = 1;
  json experiments = m.contains("experiments") ? m.at("experiments") : json::array({json::object()});
  if (!experiments.is_array()) throw std::invalid_argument("matrix experiments must be a list");

  std::vector<std::pair<std::string, json>> sweep;
  if (m.contains("sweep")) {
    for (const auto& [k, v] : m.at("sweep").items()) {
      if (!v.is_array() || v.empty()) throw std::invalid_argument("sweep '" + k + "' needs a non-empty list");
      sweep.emplace_back(k, v);
    }
  }

  std::vector<MatrixEntry> entries;
  for (std::size_t e = 0; e < experiments.size(); ++e) {
    json merged = base;
    merged.merge_patch(experiments[e]);
    const std::string stem = merged.value("name", "exp" + std::to_string(e));
    std::vector<std::size_t> idx(sweep.size(), 0);
    while (true) {
      json cfg = merged;
      std::string name = stem;
      for (std::size_t k = 0; k < sweep.size(); ++k) {
        set_dotted(cfg, sweep[k].first, sweep[k].second[idx[k]]);
        name += "_" + sweep[k].first + "=" + value_label(sweep[k].second[idx[k]]);
      }
      std::replace_if(name.begin(), name.end(), [](char ch) { return ch == '/' || ch == ' '; }, '-');
      cfg["name"] = name;
      cfg["output_dir"] = (out / name).generic_string();
      entries.push_back({name, cfg.dump()});
      std::size_t k = 0;
      for (; k < sweep.size(); ++k) {
        if (++idx[k] < sweep[k].second.size()) break;
        idx[k] = 0;
      }
      if (k == sweep.size()) break;
    }
  }
  return entries;
}

}  // namespace dpinn
