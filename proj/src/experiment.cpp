#include "dpinn/experiment.hpp"

#include "dpinn/io.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dpinn {

using nlohmann::json;

namespace {

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("stage '") + name + "' failed: " + e.what());
  }
}

Eigen::MatrixXd snapshot_points(const PdeSpec& spec, const ExperimentConfig& cfg, double t) {
  const Interval& xb = spec.spatial_bounds[0];
  if (spec.spatial_dim() == 1) {
    const int nx = cfg.eval_nx > 0 ? cfg.eval_nx : 201;
    Eigen::MatrixXd p(2, nx);
    for (int i = 0; i < nx; ++i) {
      p(0, i) = xb.lo + xb.length() * i / (nx - 1);
      p(1, i) = t;
    }
    return p;
  }
  const Interval& yb = spec.spatial_bounds[1];
  const int nx = cfg.eval_nx > 0 ? cfg.eval_nx : 41;
  const int ny = cfg.eval_ny > 0 ? cfg.eval_ny : 41;
  Eigen::MatrixXd p(3, Eigen::Index(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const Eigen::Index k = Eigen::Index(j) * nx + i;
      p(0, k) = xb.lo + xb.length() * i / (nx - 1);
      p(1, k) = yb.lo + yb.length() * j / (ny - 1);
      p(2, k) = t;
    }
  return p;
}

// Predictive mean of subdomain q's network at `points`, over all samples.
Eigen::VectorXd subdomain_mean(const Chain& chain, const Posterior& post, int q,
                               const Eigen::MatrixXd& points) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(points.cols());
  for (const Eigen::VectorXd& s : chain.samples)
    sum += forward_jet<double>(post.spec().arch, post.theta(s, q), points, 0).u.transpose();
  return sum / double(chain.samples.size());
}

std::string time_label(double t) { return io::format_double(t); }

}  // namespace

ResultBundle run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  stage("config", [&] { cfg.validate(); });
  const PdeSpec spec = cfg.pde_spec();
  ResultBundle r;
  r.name = cfg.name;
  r.cell = cfg.cell();

  const GridResolution res = cfg.resolution.value_or(default_resolution(cfg.pde));
  const GridSolution sol = stage("reference", [&] { return solve_reference(spec, res, cfg.scheme); });

  TrainingSet ts = stage("sampling", [&] {
    TrainingSet t = sample_training_set(sol, spec, cfg.decomp, cfg.scenario, cfg.effective_budget(), cfg.noise);
    if (cfg.posterior.sigma_avg > 0.0) t.cdc.sigmas.setConstant(cfg.posterior.sigma_avg);
    if (cfg.posterior.sigma_flux > 0.0) t.cdc_sigma_flux.setConstant(cfg.posterior.sigma_flux);
    return t;
  });
  r.dataset_counts = {{"u", ts.u.size()},   {"phi", ts.phi.size()}, {"ic", ts.ic.size()},
                      {"bc", ts.bc.size()}, {"cdc", ts.cdc.size()}};
  stage("output", [&] {
    std::filesystem::create_directories(cfg.output_dir);
    export_dataset(ts, cfg.output_dir / "dataset.csv");
  });

  const Posterior post = stage("posterior", [&] {
    PosteriorSpec ps;
    ps.pde = spec;
    ps.arch = cfg.arch;
    ps.arch.input_dim = spec.input_dim();
    ps.decomp = cfg.decomp;
    ps.data = std::move(ts);
    ps.mode = cfg.constraint_mode;
    ps.transform = cfg.lambda_transform;
    ps.prior_std_theta = cfg.posterior.prior_std_theta;
    ps.lambda_prior_mean = cfg.posterior.lambda_prior_mean;
    ps.lambda_prior_std = cfg.posterior.lambda_prior_std;
    ps.soft_constraint_sigma = cfg.posterior.soft_constraint_sigma;
    ps.mirrored_interface = cfg.mirrored_interface;
    ps.parallel = cfg.parallel;
    return Posterior(std::move(ps));
  });
  r.state_size = post.state_size();

  const Chain chain = stage("hmc", [&] {
    const Eigen::VectorXd init = post.initial_state(io::derive_seed(cfg.seed, "init"), cfg.init);
    const std::string canon = config_to_json(cfg);
    CheckpointOptions ck;
    ck.path = cfg.output_dir / "chain.csv";
    ck.every = cfg.checkpoint_every;
    ck.resume = cfg.resume;
    std::ostringstream hash;
    hash << std::hex << io::fnv1a(canon);
    ck.header = json{{"name", cfg.name}, {"seed", cfg.seed}, {"spec_hash", hash.str()},
                     {"config", json::parse(canon)}}
                    .dump();
    return run_chain(post, cfg.hmc, init, &ck);
  });
  r.accept_rate = chain.accept_rate;
  r.burn_in_accept_rate = chain.burn_in_accept_rate;
  r.divergences = chain.divergence_count;
  r.burn_in_divergences = chain.burn_in_divergence_count;
  r.step_size = chain.step_size;

  stage("metrics", [&] {
    r.reference_max_abs = sol.values.cwiseAbs().maxCoeff();
    for (double t : cfg.snapshot_times) {
      Snapshot s;
      s.t = t;
      s.points = snapshot_points(spec, cfg, t);
      const PredictiveSummary ps = predictive_summary(chain, post, s.points);
      s.mean = ps.mean;
      s.std = ps.std;
      s.reference.resize(s.points.cols());
      for (Eigen::Index i = 0; i < s.points.cols(); ++i)
        s.reference[i] = sol.interpolate({s.points.col(i).data(), std::size_t(s.points.rows())});
      s.rel_l2_error = (s.mean - s.reference).norm() / s.reference.norm();
      for (int c = 0; c < cfg.decomp.n_subdomains() - 1; ++c) {
        Eigen::MatrixXd cut_pts;
        if (spec.spatial_dim() == 1) {
          cut_pts.resize(2, 1);
          cut_pts << cfg.decomp.cuts[c], t;
        } else {
          const int ny = cfg.eval_ny > 0 ? cfg.eval_ny : 41;
          const Interval& yb = spec.spatial_bounds[1];
          cut_pts.resize(3, ny);
          for (int j = 0; j < ny; ++j) cut_pts.col(j) << cfg.decomp.cuts[c], yb.lo + yb.length() * j / (ny - 1), t;
        }
        const Eigen::VectorXd lo = subdomain_mean(chain, post, c, cut_pts);
        const Eigen::VectorXd hi = subdomain_mean(chain, post, c + 1, cut_pts);
        s.interface_jump = std::max(s.interface_jump, (lo - hi).cwiseAbs().maxCoeff());
      }
      r.interface_jump = std::max(r.interface_jump, s.interface_jump);
      if (r.snapshots.empty()) {
        r.rel_l2_error = s.rel_l2_error;
      }
      r.snapshots.push_back(std::move(s));
      if (r.lambda.has_value() || ps.lambda_samples.size() == 0) continue;
      LambdaEstimate le;
      le.mean = ps.lambda_mean;
      le.std = ps.lambda_std;
      le.samples = ps.lambda_samples;
      le.truth = spec.diffusion();
      le.abs_error_pct = ((le.mean.array() - le.truth).abs() / le.truth * 100.0).matrix();
      r.lambda = std::move(le);
    }
    r.near_interface_std = near_interface_std(r, cfg, 0.1);
  });
  r.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

double near_interface_std(const ResultBundle& bundle, const ExperimentConfig& cfg, double radius) {
  if (cfg.decomp.cuts.empty() || bundle.snapshots.empty()) return std::numeric_limits<double>::quiet_NaN();
  const Snapshot& s = bundle.snapshots.front();
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < s.points.cols(); ++i) {
    bool near = false;
    for (double c : cfg.decomp.cuts) near = near || std::abs(s.points(0, i) - c) <= radius + 1e-12;
    if (near) {
      sum += s.std[i];
      ++count;
    }
  }
  return count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
}

std::string summary_json(const ResultBundle& b, const ExperimentConfig& cfg) {
  json snaps = json::array();
  for (const Snapshot& s : b.snapshots)
    snaps.push_back({{"t", s.t}, {"rel_l2_error", s.rel_l2_error}, {"interface_jump", s.interface_jump},
                     {"mean_std", s.std.mean()}});
  json counts = json::object();
  for (const auto& [k, v] : b.dataset_counts) counts[k] = v;
  json j = {{"schema", 1},
            {"name", b.name},
            {"cell", b.cell},
            {"config", json::parse(config_to_json(cfg))},
            {"dataset", counts},
            {"state_size", b.state_size},
            {"rel_l2_error", b.rel_l2_error},
            {"interface_jump", b.interface_jump},
            {"reference_max_abs", b.reference_max_abs},
            {"snapshots", snaps},
            {"accept_rate", b.accept_rate},
            {"burn_in_accept_rate", b.burn_in_accept_rate},
            {"divergences", b.divergences},
            {"burn_in_divergences", b.burn_in_divergences},
            {"step_size", b.step_size}};
  j["near_interface_std"] = std::isfinite(b.near_interface_std) ? json(b.near_interface_std) : json(nullptr);
  if (b.lambda) {
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    j["lambda_estimate"] = {{"mean", vec(b.lambda->mean)},
                            {"std", vec(b.lambda->std)},
                            {"abs_error_pct", vec(b.lambda->abs_error_pct)},
                            {"truth", b.lambda->truth}};
  }
  return j.dump(2) + "\n";
}

void emit_outputs(const ResultBundle& b, const ExperimentConfig& cfg) {
  const auto& dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& file) {
    std::ofstream out(dir / file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / file).string());
    return out;
  };
  open("summary.json") << summary_json(b, cfg);
  open("timing.json") << json{{"runtime_seconds", b.runtime_seconds}}.dump(2) << "\n";

  const bool two_d = cfg.dims == 2;
  std::vector<std::string> files;
  for (const Snapshot& s : b.snapshots) {
    const std::string file = "snapshot_t" + time_label(s.t) + ".csv";
    files.push_back(file);
    auto out = open(file);
    out << (two_d ? "x,y,mean,std,reference\n" : "x,mean,std,reference\n");
    for (Eigen::Index i = 0; i < s.points.cols(); ++i) {
      out << io::format_double(s.points(0, i));
      if (two_d) out << ',' << io::format_double(s.points(1, i));
      out << ',' << io::format_double(s.mean[i]) << ',' << io::format_double(s.std[i]) << ','
          << io::format_double(s.reference[i]) << '\n';
    }
  }

  auto gp = open("plot.gp");
  gp << "# gnuplot -p plot.gp\nset datafile separator ','\nset key autotitle columnhead\n";
  if (!two_d) {
    gp << "set xlabel 'x'\nset ylabel 'u'\n";
    for (std::size_t k = 0; k < files.size(); ++k) {
      gp << "set title 't = " << time_label(b.snapshots[k].t) << "'\n";
      gp << "plot '" << files[k] << "' using 1:($2-2*$3):($2+2*$3) with filledcurves fs transparent solid 0.3 "
            "title 'mean +/- 2 std', \\\n     '' using 1:2 with lines lw 2 title 'mean', \\\n"
            "     '' using 1:4 with lines dt 2 lw 2 title 'reference'\n";
      if (k + 1 < files.size()) gp << "pause -1\n";
    }
  } else {
    gp << "set view map\nset dgrid3d " << (cfg.eval_ny > 0 ? cfg.eval_ny : 41) << ","
       << (cfg.eval_nx > 0 ? cfg.eval_nx : 41) << "\nset pm3d at b\nset multiplot layout 1,3\n";
    for (std::size_t k = 0; k < files.size(); ++k) {
      gp << "set title 'mean, t = " << time_label(b.snapshots[k].t) << "'\nsplot '" << files[k]
         << "' using 1:2:3 with pm3d notitle\n";
      gp << "set title 'std'\nsplot '" << files[k] << "' using 1:2:4 with pm3d notitle\n";
      gp << "set title 'reference'\nsplot '" << files[k] << "' using 1:2:5 with pm3d notitle\n";
    }
    gp << "unset multiplot\n";
  }

  if (b.lambda) {
    auto out = open("lambda.csv");
    out << "sample";
    const Eigen::MatrixXd& s = b.lambda->samples;
    for (Eigen::Index k = 0; k < s.cols(); ++k)
      out << (s.cols() == 1 ? std::string(",lambda") : ",lambda_" + std::to_string(k + 1));
    out << '\n';
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      out << i;
      for (Eigen::Index k = 0; k < s.cols(); ++k) out << ',' << io::format_double(s(i, k));
      out << '\n';
    }
  }
}

std::vector<MatrixRow> run_matrix(const std::filesystem::path& matrix_file, const std::filesystem::path& out,
                                  const std::optional<std::string>& preset_override,
                                  const std::optional<std::uint64_t>& seed_override) {
  std::ifstream in(matrix_file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read matrix file " + matrix_file.string());
  std::stringstream text;
  text << in.rdbuf();
  const std::vector<MatrixEntry> entries = expand_matrix(text.str(), out);

  std::vector<MatrixRow> rows;
  for (const MatrixEntry& e : entries) {
    MatrixRow row{e.name, "ok", "", std::nullopt};
    try {
      json j = json::parse(e.config_json);
      if (seed_override) j["seed"] = *seed_override;
      const ExperimentConfig cfg = config_from_json(j.dump(), preset_override);
      ResultBundle b = run_experiment(cfg);
      emit_outputs(b, cfg);
      row.bundle = std::move(b);
    } catch (const std::exception& ex) {
      row.status = "error";
      row.message = ex.what();
    }
    rows.push_back(std::move(row));
  }

  std::filesystem::create_directories(out);
  std::ofstream csv(out / "summary.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + (out / "summary.csv").string());
  csv << "name,status,cell,rel_l2_error,interface_jump,lambda_mean,lambda_std,lambda_abs_error_pct,"
         "accept_rate,divergences,message\n";
  auto join = [](const Eigen::VectorXd& v) {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ";" : "") + io::format_double(v[i]);
    return s;
  };
  auto quote = [](std::string s) {
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  for (const MatrixRow& r : rows) {
    csv << r.name << ',' << r.status << ',';
    if (r.bundle) {
      const ResultBundle& b = *r.bundle;
      csv << quote(b.cell) << ',' << io::format_double(b.rel_l2_error) << ','
          << io::format_double(b.interface_jump) << ',';
      if (b.lambda)
        csv << join(b.lambda->mean) << ',' << join(b.lambda->std) << ',' << join(b.lambda->abs_error_pct);
      else
        csv << ",,";
      csv << ',' << io::format_double(b.accept_rate) << ',' << b.divergences << ",\n";
    } else {
      csv << ",,,,,,,," << quote(r.message) << '\n';
    }
  }
  return rows;
}

}  // namespace dpinn
