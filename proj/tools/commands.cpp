#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>
#include <vector>

#include "json.hpp"

#include "uln/bounds.hpp"
#include "uln/datagen.hpp"
#include "uln/distill.hpp"
#include "uln/dsm.hpp"
#include "uln/error.hpp"
#include "uln/models.hpp"
#include "uln/ou.hpp"
#include "uln/parallel.hpp"
#include "uln/sgd.hpp"
#include "uln/simd/kernels.hpp"

namespace uln::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

json seed_json(RngSeed s) { return json{{"seed", s.seed}, {"stream", s.stream}}; }

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

class Manifest {
 public:
  Manifest(const ExperimentConfig& cfg, const RunOptions& opts)
      : path_(opts.out_dir / "manifest.json"), start_(std::chrono::steady_clock::now()) {
    doc_["tool"] = "uln-dynamics";
    doc_["version"] = kVersion;
    doc_["subcommand"] = kind_name(cfg.kind);
    doc_["config_path"] = opts.config_path;
    doc_["config"] = cfg.resolved;
    doc_["workers"] = opts.workers;
    doc_["simd_backend"] = std::string(simd::backend_name(simd::kernels().backend));
    doc_["started_utc"] = utc_now();
    doc_["status"] = "running";
    doc_["seeds"] = json{{"base_seed", cfg.seeds.base_seed}, {"replicas", cfg.seeds.replicas}, {"ledger", json::array()}};
    doc_["outputs"] = json::array();
  }

  void seed(const std::string& role, RngSeed s) {
    std::lock_guard lock(mu_);
    json e = seed_json(s);
    e["role"] = role;
    doc_["seeds"]["ledger"].push_back(std::move(e));
  }

  void output(const std::string& name) {
    std::lock_guard lock(mu_);
    doc_["outputs"].push_back(name);
  }

  void write(const std::string& status) {
    std::lock_guard lock(mu_);
    doc_["status"] = status;
    doc_["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const fs::path tmp = path_.string() + ".tmp";
    {
      std::ofstream os(tmp);
      if (!os) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
      os << doc_.dump(2) << '\n';
      if (!os) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    }
    fs::rename(tmp, path_);
  }

 private:
  fs::path path_;
  std::chrono::steady_clock::time_point start_;
  json doc_;
  std::mutex mu_;
};

struct Context {
  const ExperimentConfig& cfg;
  const RunOptions& opts;
  Manifest& manifest;
  ParallelFor pfor;
  RngSeed root;

  template <class Fn>
  void emit(const std::string& name, Fn&& fill) {
    const fs::path p = opts.out_dir / name;
    std::ofstream os(p);
    if (!os) throw Error(ErrorCode::IoError, "cannot open " + p.string());
    fill(os);
    os.flush();
    if (!os) throw Error(ErrorCode::IoError, "failed writing " + p.string());
    manifest.output(name);
  }
};

void flat_rows(std::ostream& os, const std::string& name, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << name << ',' << i << ',' << j << ',' << m(i, j) << '\n';
}

void flat_rows(std::ostream& os, const std::string& name, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) os << name << ',' << i << ",0," << v(i) << '\n';
}

void put_vector(std::ostream& os, const std::string& key, const Vector& v) {
  os << key << ':';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << v(i);
  os << '\n';
}

void put_matrix(std::ostream& os, const std::string& key, const Matrix& m) {
  os << key << ':';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    os << (i ? " ;" : "");
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << ' ' << m(i, j);
  }
  os << '\n';
}

SgdConfig sgd_config(const ExperimentConfig& cfg, RngSeed seed, bool diagnostics) {
  SgdConfig c;
  c.learning_rate = cfg.sgd.eta;
  c.batch_size = cfg.sgd.batch;
  c.iterations = cfg.sgd.iterations;
  c.sampling = cfg.sgd.sampling;
  c.record_every = cfg.sgd.record_every;
  c.record_diagnostics = diagnostics;
  c.seed = seed;
  return c;
}

RowMatrix features_for(Context& ctx) {
  const RngSeed s = ctx.root.substream(0);
  ctx.manifest.seed("features", s);
  return sample_gaussian_features(ctx.cfg.dataset.n, ctx.cfg.dataset.cov, s);
}

void guard_stability(const ExperimentConfig& cfg, const RowMatrix& x) {
  const Dataset probe = make_ols_dataset(x, cfg.dataset.beta_star, GaussianAdditive{0.0}, RngSeed{});
  const double margin = step_stability_margin(probe, cfg.sgd.eta);
  if (margin >= 2.0) {
    std::ostringstream os;
    os << "eta * lambda_max = " << margin << " >= 2, the SGD recursion does not converge";
    throw Error(ErrorCode::Unstable, os.str());
  }
}

double rel_diff(double a, double b) {
  const double d = std::abs(b - a);
  return a == 0.0 ? d : d / std::abs(a);
}

void write_ensemble(std::ostream& os, const EnsembleSummary& e) {
  os << std::setprecision(10);
  os << "replicas: " << e.replicas << '\n';
  put_vector(os, "grand_mean", e.grand_mean);
  put_vector(os, "grand_mean_stderr", e.grand_mean_stderr);
  put_matrix(os, "pooled_cov", e.pooled_cov);
  put_matrix(os, "lyapunov_cov", e.lyapunov_cov);
  put_matrix(os, "closed_form_cov", e.closed_form_cov);
  os << "pooled_trace: " << e.pooled_cov.trace() << '\n';
  os << "lyapunov_trace: " << e.lyapunov_cov.trace() << '\n';
  os << "closed_form_trace: " << e.closed_form_cov.trace() << '\n';
  os << "formula_to_lyapunov_ratio: " << e.formula_to_lyapunov_ratio << '\n';
  os << "rel_error_vs_lyapunov: " << e.lyapunov_rel_error << '\n';
}

EnsembleSummary ensemble_of(const std::vector<StationarySummary>& parts) {
  if (parts.size() > 1) return pool_summaries(parts);
  const StationarySummary& s = parts.front();
  EnsembleSummary e;
  e.replicas = 1;
  e.grand_mean = s.empirical_mean;
  e.grand_mean_stderr = s.mean_stderr;
  e.pooled_cov = s.empirical_cov;
  e.closed_form_cov = s.closed_form_cov;
  e.lyapunov_cov = s.lyapunov_cov;
  e.formula_to_lyapunov_ratio = s.formula_to_lyapunov_ratio;
  e.lyapunov_rel_error = s.lyapunov_rel_error;
  return e;
}

/// Replica-level runs share one feature matrix; each replica draws its own
/// label noise (substream 0) and sampler stream (substream 1).
struct ReplicaSeeds {
  RngSeed noise;
  RngSeed sgd;
};

ReplicaSeeds replica_seeds(RngSeed point_root, std::size_t r) {
  const RngSeed rr = point_root.substream(100 + r);
  return {rr.substream(0), rr.substream(1)};
}

void write_stationary(Context& ctx, const std::string& suffix, const std::vector<StationarySummary>& parts,
                      const std::vector<double>& lnl_dist) {
  ctx.emit("stationary" + suffix + ".txt", [&](std::ostream& os) {
    if (parts.size() > 1) {
      write_ensemble(os, pool_summaries(parts));
      os << '\n';
    }
    for (std::size_t r = 0; r < parts.size(); ++r) {
      if (parts.size() > 1) os << "# replica " << r << '\n';
      write_summary_report(os, parts[r]);
      if (!lnl_dist.empty()) os << "noiseless_final_distance: " << lnl_dist[r] << '\n';
      if (r + 1 < parts.size()) os << '\n';
    }
  });
  ctx.emit("stationary" + suffix + "_flat.csv", [&](std::ostream& os) {
    write_summary_flat(os, parts.front());
    if (parts.size() > 1) {
      const EnsembleSummary e = pool_summaries(parts);
      flat_rows(os, "grand_mean", e.grand_mean);
      flat_rows(os, "grand_mean_stderr", e.grand_mean_stderr);
      flat_rows(os, "pooled_cov", e.pooled_cov);
    }
  });
}

void cmd_simulate(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const RowMatrix x = features_for(ctx);
  guard_stability(cfg, x);
  const bool grid = !cfg.sigma2_grid.empty();
  const std::vector<double> levels = grid ? cfg.sigma2_grid : std::vector<double>{cfg.dataset.sigma2};
  const std::size_t reps = cfg.seeds.replicas;
  const std::size_t d = cfg.dataset.d;

  std::vector<RngSeed> point_roots(levels.size());
  std::vector<std::string> suffixes(levels.size());
  for (std::size_t g = 0; g < levels.size(); ++g) {
    point_roots[g] = grid ? ctx.root.substream(10 + g) : ctx.root;
    suffixes[g] = grid ? "_g" + std::to_string(g) : "";
    for (std::size_t r = 0; r < reps; ++r) {
      const ReplicaSeeds rs = replica_seeds(point_roots[g], r);
      ctx.manifest.seed("noise" + suffixes[g] + "_r" + std::to_string(r), rs.noise);
      ctx.manifest.seed("sampler" + suffixes[g] + "_r" + std::to_string(r), rs.sgd);
    }
  }

  std::vector<std::vector<StationarySummary>> summaries(levels.size(), std::vector<StationarySummary>(reps));
  std::vector<std::vector<double>> lnl_dist(levels.size(), std::vector<double>(reps));
  std::vector<std::string> written;
  std::mutex mu;
  ctx.pfor(levels.size() * reps, [&](std::size_t job) {
    const std::size_t g = job / reps, r = job % reps;
    const ReplicaSeeds rs = replica_seeds(point_roots[g], r);
    const Dataset ds = make_ols_dataset(x, cfg.dataset.beta_star, GaussianAdditive{levels[g]}, rs.noise);
    const SgdConfig sc = sgd_config(cfg, rs.sgd, true);
    const LinearModel init(d);
    const Trajectory uln = run_sgd(init, ds, sc, LabelSource::Noisy);
    const Trajectory lnl = run_sgd(init, ds, sc, LabelSource::Clean);
    const std::string tail = suffixes[g] + "_r" + std::to_string(r) + ".csv";
    write_trajectory_csv((ctx.opts.out_dir / ("traj_uln" + tail)).string(), uln);
    write_trajectory_csv((ctx.opts.out_dir / ("traj_lnl" + tail)).string(), lnl);
    if (cfg.write_dataset && r == 0)
      write_dataset_csv((ctx.opts.out_dir / ("dataset" + suffixes[g] + ".csv")).string(), ds);
    summaries[g][r] = stationary_summary(uln, ds, sc, cfg.burn_in);
    lnl_dist[g][r] = (lnl.checkpoints.back().theta - cfg.dataset.beta_star).norm();
    std::lock_guard lock(mu);
    written.push_back("traj_uln" + tail);
    written.push_back("traj_lnl" + tail);
    if (cfg.write_dataset && r == 0) written.push_back("dataset" + suffixes[g] + ".csv");
  });
  std::sort(written.begin(), written.end());
  for (const auto& w : written) ctx.manifest.output(w);

  for (std::size_t g = 0; g < levels.size(); ++g) write_stationary(ctx, suffixes[g], summaries[g], lnl_dist[g]);

  if (grid) {
    ctx.emit("stationary_grid.csv", [&](std::ostream& os) {
      os << "sigma2,trace_empirical,trace_lyapunov,trace_closed_form,rel_error_vs_lyapunov,max_noiseless_distance\n"
         << std::setprecision(12);
      for (std::size_t g = 0; g < levels.size(); ++g) {
        const EnsembleSummary e = ensemble_of(summaries[g]);
        double worst = 0.0;
        for (double v : lnl_dist[g]) worst = std::max(worst, v);
        os << levels[g] << ',' << e.pooled_cov.trace() << ',' << e.lyapunov_cov.trace() << ','
           << e.closed_form_cov.trace() << ',' << e.lyapunov_rel_error << ',' << worst << '\n';
      }
    });
  }
}

void cmd_stationary(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const RowMatrix x = features_for(ctx);
  guard_stability(cfg, x);
  const std::size_t reps = cfg.seeds.replicas;
  for (std::size_t r = 0; r < reps; ++r) {
    const ReplicaSeeds rs = replica_seeds(ctx.root, r);
    ctx.manifest.seed("noise_r" + std::to_string(r), rs.noise);
    ctx.manifest.seed("sampler_r" + std::to_string(r), rs.sgd);
  }
  std::vector<StationarySummary> parts(reps);
  ctx.pfor(reps, [&](std::size_t r) {
    const ReplicaSeeds rs = replica_seeds(ctx.root, r);
    const Dataset ds = make_ols_dataset(x, cfg.dataset.beta_star, GaussianAdditive{cfg.dataset.sigma2}, rs.noise);
    const SgdConfig sc = sgd_config(cfg, rs.sgd, false);
    parts[r] = stationary_summary(run_sgd(LinearModel(cfg.dataset.d), ds, sc), ds, sc, cfg.burn_in, cfg.n_batches);
  });
  write_stationary(ctx, "", parts, {});

  const Matrix& sigma_bar = parts.front().sigma_bar;
  ctx.emit("ou_covariance.csv", [&](std::ostream& os) {
    os << "t,row,col,value\n" << std::setprecision(17);
    for (double t : cfg.ou_times) {
      const OuCovariance oc = ou_covariance_at(t, sigma_bar, cfg.sgd.eta, cfg.dataset.sigma2, cfg.sgd.batch);
      for (Eigen::Index i = 0; i < oc.cov.rows(); ++i)
        for (Eigen::Index j = 0; j < oc.cov.cols(); ++j) os << t << ',' << i << ',' << j << ',' << oc.cov(i, j) << '\n';
    }
  });

  StationarySummary pooled = parts.front();
  pooled.empirical_cov = ensemble_of(parts).pooled_cov;
  const AnisotropyReport a = anisotropy_report(pooled);
  ctx.emit("anisotropy.txt", [&](std::ostream& os) {
    os << std::setprecision(10);
    put_vector(os, "empirical_eigenvalues", a.eigenvalues);
    put_matrix(os, "empirical_eigenvectors", a.eigenvectors);
    put_vector(os, "sigma_bar_top_axis", a.sigma_bar_top);
    os << "angle_deg: " << a.angle_deg << '\n';
    os << "aligned: " << (a.aligned ? "true" : "false") << '\n';
    os << "eigen_ratio: " << a.eigen_ratio << '\n';
  });
}

void cmd_dsm_compare(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const RowMatrix x = features_for(ctx);
  guard_stability(cfg, x);
  const std::size_t reps = cfg.seeds.replicas;
  for (std::size_t r = 0; r < reps; ++r) {
    const ReplicaSeeds rs = replica_seeds(ctx.root, r);
    const DsmConfig dc = DsmConfig::from_sgd(sgd_config(cfg, rs.sgd, false));
    ctx.manifest.seed("noise_r" + std::to_string(r), rs.noise);
    ctx.manifest.seed("sampler_r" + std::to_string(r), rs.sgd);
    ctx.manifest.seed("dsm_z_r" + std::to_string(r), dc.z_seed);
    ctx.manifest.seed("dsm_z_prime_r" + std::to_string(r), dc.z_prime_seed);
  }
  std::vector<StationarySummary> sgd_parts(reps), dsm_parts(reps);
  ctx.pfor(reps, [&](std::size_t r) {
    const ReplicaSeeds rs = replica_seeds(ctx.root, r);
    const Dataset ds = make_ols_dataset(x, cfg.dataset.beta_star, GaussianAdditive{cfg.dataset.sigma2}, rs.noise);
    const SgdConfig sc = sgd_config(cfg, rs.sgd, true);
    const LinearModel init(cfg.dataset.d);
    const Trajectory sgd = run_sgd(init, ds, sc);
    const Trajectory dsm = run_dsm(init, ds, DsmConfig::from_sgd(sc));
    const std::string tail = "_r" + std::to_string(r) + ".csv";
    write_trajectory_csv((ctx.opts.out_dir / ("traj_uln" + tail)).string(), sgd);
    write_trajectory_csv((ctx.opts.out_dir / ("traj_dsm" + tail)).string(), dsm);
    sgd_parts[r] = stationary_summary(sgd, ds, sc, cfg.burn_in);
    dsm_parts[r] = stationary_summary(dsm, ds, sc, cfg.burn_in);
  });
  for (std::size_t r = 0; r < reps; ++r) {
    ctx.manifest.output("traj_uln_r" + std::to_string(r) + ".csv");
    ctx.manifest.output("traj_dsm_r" + std::to_string(r) + ".csv");
  }
  write_stationary(ctx, "_sgd", sgd_parts, {});
  write_stationary(ctx, "_dsm", dsm_parts, {});

  const EnsembleSummary a = ensemble_of(sgd_parts);
  const EnsembleSummary b = ensemble_of(dsm_parts);
  ctx.emit("dsm_compare.csv", [&](std::ostream& os) {
    os << "quantity,sgd,dsm,rel_diff\n" << std::setprecision(12);
    for (Eigen::Index i = 0; i < a.grand_mean.size(); ++i)
      os << "mean_" << i << ',' << a.grand_mean(i) << ',' << b.grand_mean(i) << ','
         << rel_diff(a.grand_mean(i), b.grand_mean(i)) << '\n';
    for (Eigen::Index i = 0; i < a.pooled_cov.rows(); ++i)
      for (Eigen::Index j = i; j < a.pooled_cov.cols(); ++j)
        os << "cov_" << i << '_' << j << ',' << a.pooled_cov(i, j) << ',' << b.pooled_cov(i, j) << ','
           << rel_diff(a.pooled_cov(i, j), b.pooled_cov(i, j)) << '\n';
    os << "cov_trace," << a.pooled_cov.trace() << ',' << b.pooled_cov.trace() << ','
       << rel_diff(a.pooled_cov.trace(), b.pooled_cov.trace()) << '\n';
    os << "rel_error_vs_lyapunov," << a.lyapunov_rel_error << ',' << b.lyapunov_rel_error << ','
       << rel_diff(a.lyapunov_rel_error, b.lyapunov_rel_error) << '\n';
  });
}

void cmd_approx_order(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const RowMatrix x = features_for(ctx);
  const RngSeed noise = ctx.root.substream(1);
  ctx.manifest.seed("noise", noise);
  const Dataset ds = make_ols_dataset(x, cfg.dataset.beta_star, GaussianAdditive{cfg.dataset.sigma2}, noise);
  StrongOrderOptions o;
  o.horizon = cfg.horizon;
  o.n_replicas = cfg.order_replicas;
  o.batch_size = cfg.sgd.batch;
  o.sde_eta = cfg.sde_eta;
  o.tied = cfg.tied;
  o.ref_divisor = cfg.ref_divisor;
  o.seed = ctx.root.substream(2);
  ctx.manifest.seed("brownian", o.seed);
  const StrongOrderResult res = strong_approx_order(ds, cfg.dataset.beta_star, cfg.eta_list, o, ctx.pfor);
  ctx.emit("order.csv", [&](std::ostream& os) { write_order_csv(os, res); });
  ctx.emit("order_summary.txt", [&](std::ostream& os) {
    os << std::setprecision(10) << "slope: " << res.slope << '\n';
    os << "eta_ref: " << res.eta_ref << '\n';
    os << "halving_ratios:";
    for (double h : res.halving_ratios) os << ' ' << h;
    os << '\n';
  });
  std::cout << "slope: " << res.slope << '\n';
}

void cmd_bounds(Context& ctx) {
  const auto& cfg = ctx.cfg;
  CoverageSetup s;
  s.n = cfg.train_n;
  s.d = cfg.dataset.d;
  s.hidden = cfg.hidden;
  s.noise_std = cfg.noise_std;
  s.m2 = cfg.m2;
  s.teacher_gain = cfg.teacher_gain;
  s.tol = cfg.tol;
  s.train_lr = cfg.train_lr;
  s.train_budget = cfg.train_budget;
  s.restarts = cfg.restarts;
  s.holdout_factor = cfg.holdout_factor;
  validate(BoundsInput{s.tol, s.noise_std, s.m2, s.n, cfg.delta_conf});
  const RngSeed seed = ctx.root.substream(0);
  ctx.manifest.seed("coverage", seed);
  const CoverageReport r = coverage_experiment(s, cfg.trials, cfg.delta_conf, seed, ctx.pfor);
  ctx.emit("coverage.csv", [&](std::ostream& os) { write_coverage_csv(os, r); });
  ctx.emit("coverage_summary.txt", [&](std::ostream& os) {
    os << std::setprecision(10);
    os << "trials: " << r.trials.size() << '\n';
    os << "target: " << r.target << '\n';
    os << "threshold: " << r.threshold << '\n';
    os << "bernstein_coverage: " << r.bernstein_coverage << '\n';
    os << "bernstein_interval: " << r.bernstein_ci.lo << ' ' << r.bernstein_ci.hi << '\n';
    os << "bernstein_ok: " << (r.bernstein_ok ? "true" : "false") << '\n';
    os << "hoeffding_coverage: " << r.hoeffding_coverage << '\n';
    os << "hoeffding_interval: " << r.hoeffding_ci.lo << ' ' << r.hoeffding_ci.hi << '\n';
    os << "hoeffding_ok: " << (r.hoeffding_ok ? "true" : "false") << '\n';
  });
}

void cmd_distill(Context& ctx) {
  const auto& cfg = ctx.cfg;
  TeacherSetup ts;
  ts.layer_dims = cfg.teacher_dims;
  ts.output_scale = 1.0;
  ts.n_inputs = cfg.teacher_inputs;
  ts.lr = cfg.teacher_lr;
  ts.batch = cfg.teacher_batch;
  ts.target_loss = cfg.teacher_loss;
  ts.max_epochs = cfg.teacher_max_epochs;
  ts.seed = ctx.root.substream(0);
  ctx.manifest.seed("teacher", ts.seed);
  const TeacherResult teacher = train_teacher(ts);
  ctx.emit("teacher.ckpt", [&](std::ostream& os) { teacher.teacher.save(os); });

  DistillGridSetup gs;
  gs.sigma2_grid = cfg.sigma2_grid;
  gs.swap_grid = cfg.swap_grid;
  gs.seeds = cfg.distill_seeds;
  gs.epochs = cfg.epochs;
  gs.lr = cfg.student_lr;
  gs.batch = cfg.student_batch;
  gs.resample = cfg.resample;
  gs.seed = ctx.root.substream(1);
  ctx.manifest.seed("students", gs.seed);
  const DistillGridResult res = run_distill_grid(teacher, gs, ctx.pfor);

  auto emit_family = [&](const std::string& family, const std::vector<std::vector<DistillReport>>& reports) {
    for (std::size_t s = 0; s < reports.size(); ++s)
      for (std::size_t g = 0; g < reports[s].size(); ++g) {
        const std::string stem = family + "_g" + std::to_string(g) + "_s" + std::to_string(s);
        ctx.emit("distill_" + stem + ".csv", [&](std::ostream& os) { write_distill_csv(os, reports[s][g]); });
        ToyNet student = teacher.teacher;
        student.set_params(reports[s][g].final_params);
        ctx.emit("student_" + stem + ".ckpt", [&](std::ostream& os) { student.save(os); });
      }
  };
  emit_family("gauss", res.gaussian_reports);
  emit_family("swap", res.swap_reports);

  ctx.emit("distill_summary.csv", [&](std::ostream& os) {
    os << "family,grid_index,level,seed,final_grad_norm\n" << std::setprecision(12);
    for (std::size_t s = 0; s < res.gaussian_final.size(); ++s)
      for (std::size_t g = 0; g < res.gaussian_final[s].size(); ++g)
        os << "gauss," << g << ',' << cfg.sigma2_grid[g] << ',' << s << ',' << res.gaussian_final[s][g] << '\n';
    for (std::size_t s = 0; s < res.swap_final.size(); ++s)
      for (std::size_t g = 0; g < res.swap_final[s].size(); ++g)
        os << "swap," << g << ',' << cfg.swap_grid[g] << ',' << s << ',' << res.swap_final[s][g] << '\n';
  });
  ctx.emit("distill_summary.txt", [&](std::ostream& os) {
    os << std::setprecision(10);
    os << "teacher_loss: " << teacher.final_loss << '\n';
    os << "teacher_epochs: " << teacher.epochs << '\n';
    os << "teacher_grad_norm: " << res.teacher_grad_norm << '\n';
    os << "gaussian_ordered_links: " << res.gaussian_ordered << '/' << res.gaussian_links << '\n';
    os << "swap_ordered_links: " << res.swap_ordered << '/' << res.swap_links << '\n';
    os << "all_noisy_below_teacher: " << (res.all_noisy_below_teacher ? "true" : "false") << '\n';
  });
}

}  // namespace

void execute(const ExperimentConfig& cfg, const RunOptions& opts) {
  fs::create_directories(opts.out_dir);
  Manifest manifest(cfg, opts);
  manifest.write("running");

  std::unique_ptr<ThreadPool> pool;
  ParallelFor pfor = sequential_for;
  if (opts.workers > 1) {
    pool = std::make_unique<ThreadPool>(opts.workers);
    pfor = pool->as_parallel_for();
  }
  Context ctx{cfg, opts, manifest, pfor, RngSeed{cfg.seeds.base_seed, 0}};
  try {
    switch (cfg.kind) {
      case Kind::Simulate:
        cmd_simulate(ctx);
        break;
      case Kind::Stationary:
        cmd_stationary(ctx);
        break;
      case Kind::DsmCompare:
        cmd_dsm_compare(ctx);
        break;
      case Kind::ApproxOrder:
        cmd_approx_order(ctx);
        break;
      case Kind::Bounds:
        cmd_bounds(ctx);
        break;
      case Kind::Distill:
        cmd_distill(ctx);
        break;
    }
  } catch (...) {
    try {
      manifest.write("failed");
    } catch (...) {
    }
    throw;
  }
  manifest.write("complete");
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    if (err->code() == ErrorCode::IoError) return 1;
    return err->is_numerical() ? 3 : 2;
  }
  return 1;
}

int run_command(Kind kind, const RunOptions& opts) {
  try {
    ExperimentConfig cfg = parse_config_file(opts.config_path, kind);
    if (opts.seed) {
      cfg.seeds.base_seed = *opts.seed;
      cfg.resolved["seeds"]["base_seed"] = std::to_string(*opts.seed);
    }
    execute(cfg, opts);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "uln-dynamics: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace uln::cli
