// Acceptance run: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "uln/bounds.hpp"
#include "uln/distill.hpp"
#include "uln/dsm.hpp"
#include "uln/error.hpp"
#include "uln/numerics.hpp"
#include "uln/ou.hpp"
#include "uln/parallel.hpp"
#include "uln/sgd.hpp"

using namespace uln;

namespace {

constexpr std::uint64_t kSeed = 20240611;
constexpr std::size_t kN = 100;
constexpr double kEta = 0.01;
constexpr std::size_t kBatch = 5;
constexpr std::size_t kIters = 1'000'000;
constexpr std::size_t kReplicas = 32;

int g_failures = 0;

void report(int id, bool pass, const std::string& detail, double seconds) {
  std::printf("criterion %d: %s  %s  [%.1fs]\n", id, pass ? "PASS" : "FAIL", detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vector beta_star() { return Vector::Ones(2); }

Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

struct PanelRun {
  std::vector<StationarySummary> uln;
  std::vector<double> lnl_final_error;
};

// R replicas on fixed features: each replica draws its own noise realization
// and sampler stream; the noiseless run shares the sampler stream.
PanelRun run_panel(const Matrix& cov, double sigma2, RngSeed feature_seed, RngSeed panel_seed,
                   std::size_t replicas, ThreadPool& pool) {
  const RowMatrix x = sample_gaussian_features(kN, cov, feature_seed);
  PanelRun out;
  out.uln.resize(replicas);
  out.lnl_final_error.resize(replicas);
  pool.parallel_for(replicas, [&](std::size_t r) {
    const RngSeed rs = panel_seed.substream(r);
    const Dataset ds = make_ols_dataset(x, beta_star(), GaussianAdditive{sigma2}, rs.substream(0));
    SgdConfig cfg;
    cfg.learning_rate = kEta;
    cfg.batch_size = kBatch;
    cfg.iterations = kIters;
    cfg.seed = rs.substream(1);
    cfg.record_every = 10;
    cfg.record_diagnostics = false;
    const LinearModel init(2);
    const Trajectory t = run_sgd(init, ds, cfg, LabelSource::Noisy);
    out.uln[r] = stationary_summary(t, ds, cfg, 0.5);
    cfg.record_every = kIters;
    const Trajectory c = run_sgd(init, ds, cfg, LabelSource::Clean);
    out.lnl_final_error[r] = (c.checkpoints.back().theta - beta_star()).norm();
  });
  return out;
}

void criteria_1_2(ThreadPool& pool) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> grid{0.25, 0.5, 1.0, 2.0};
  const RngSeed base{kSeed, 1};
  bool a_ok = true, b_ok = true, c_ok = true, cov_ok = true;
  double worst_lnl = 0.0, worst_z = 0.0, worst_cov = 0.0;
  double prev_trace = -1.0;
  std::string traces, covs, ratio;
  double panel_time = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto tp = std::chrono::steady_clock::now();
    const PanelRun run = run_panel(diag2(20, 20), grid[i], base.substream(0), base.substream(100), kReplicas, pool);
    panel_time = std::max(panel_time, seconds_since(tp));
    for (double e : run.lnl_final_error) {
      worst_lnl = std::max(worst_lnl, e);
      if (!(e <= 1e-6)) a_ok = false;
    }
    const EnsembleSummary ens = pool_summaries(run.uln);
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double z = std::abs(ens.grand_mean(j) - 1.0) / ens.grand_mean_stderr(j);
      worst_z = std::max(worst_z, z);
      if (!(z <= 3.0)) b_ok = false;
    }
    const double tr = ens.pooled_cov.trace();
    if (!(tr > prev_trace)) c_ok = false;
    prev_trace = tr;
    traces += fmt("%.4g ", tr);
    worst_cov = std::max(worst_cov, ens.lyapunov_rel_error);
    if (!(ens.lyapunov_rel_error <= 0.15)) cov_ok = false;
    covs += fmt("%.3f ", ens.lyapunov_rel_error);
    if (i == 1)
      ratio = fmt("closed_form_trace=%.4g ", ens.closed_form_cov.trace()) +
              fmt("lyapunov_trace=%.4g ", ens.lyapunov_cov.trace()) +
              fmt("ratio=%.2f", ens.formula_to_lyapunov_ratio);
  }
  const double elapsed = seconds_since(t0);
  const double per_panel_single = panel_time * static_cast<double>(pool.size());
  report(1, a_ok && b_ok && c_ok,
         "(a) max|b-b*|=" + fmt("%.2e", worst_lnl) + " (b) max|mean-b*|/se=" + fmt("%.2f", worst_z) +
             " (c) traces=" + traces + "panel~" + fmt("%.0fs", per_panel_single) + " single-thread",
         elapsed);
  report(2, cov_ok, "rel Frobenius error vs Lyapunov per panel: " + covs + "(max " + fmt("%.3f", worst_cov) + "); " + ratio,
         0.0);
}

void criterion_3(ThreadPool& pool) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t seeds = 5;
  int ver_ok = 0, hor_ok = 0;
  for (int layout = 0; layout < 2; ++layout) {
    const Matrix cov = layout == 0 ? diag2(10, 100) : diag2(100, 10);
    std::vector<StationarySummary> s(seeds);
    pool.parallel_for(seeds, [&](std::size_t k) {
      const RngSeed rs = RngSeed{kSeed, 3}.substream(layout * 100 + k);
      const RowMatrix x = sample_gaussian_features(kN, cov, rs.substream(0));
      const Dataset ds = make_ols_dataset(x, beta_star(), GaussianAdditive{0.5}, rs.substream(1));
      SgdConfig cfg;
      cfg.learning_rate = kEta;
      cfg.batch_size = kBatch;
      cfg.iterations = kIters;
      cfg.seed = rs.substream(2);
      cfg.record_every = 10;
      cfg.record_diagnostics = false;
      s[k] = stationary_summary(run_sgd(LinearModel(2), ds, cfg), ds, cfg, 0.5);
    });
    for (const auto& x : s) {
      const bool axis2 = x.empirical_cov(1, 1) > x.empirical_cov(0, 0);
      if (layout == 0 && axis2) ++ver_ok;
      if (layout == 1 && !axis2) ++hor_ok;
    }
  }
  report(3, ver_ok == static_cast<int>(seeds) && hor_ok == static_cast<int>(seeds),
         "vertical layout axis2>axis1 in " + std::to_string(ver_ok) + "/5 seeds, horizontal mirrored in " +
             std::to_string(hor_ok) + "/5",
         seconds_since(t0));
}

void criterion_4(ThreadPool& pool) {
  const auto t0 = std::chrono::steady_clock::now();
  const RngSeed rs{kSeed, 4};
  const RowMatrix x = sample_gaussian_features(kN, diag2(20, 20), rs.substream(0));
  const Dataset ds = make_ols_dataset(x, beta_star(), GaussianAdditive{0.5}, rs.substream(1));
  std::vector<Vector> probes(3, Vector(2));
  probes[0] << 1.0, 1.0;
  probes[1] << 0.0, 0.0;
  probes[2] << 2.0, -1.0;
  struct Out {
    double z_star = 0, z_uln = 0, e_star = 0, e_uln = 0;
  };
  std::vector<Out> outs(3);
  pool.parallel_for(3, [&](std::size_t i) {
    SgdConfig cfg;
    cfg.learning_rate = kEta;
    cfg.batch_size = kBatch;
    cfg.sampling = Sampling::WithReplacement;
    cfg.seed = rs.substream(10 + i);
    const LinearModel m(2);
    const NoiseMoments nm = noise_moment_estimates(m, ds, probes[i], cfg, 100000, true);
    const CovariancePair cp = covariance_pair(m, ds, probes[i]);
    const double scale = kEta / static_cast<double>(kBatch);
    Out o;
    for (Eigen::Index j = 0; j < 2; ++j) {
      if (nm.se_xi_star(j) > 0) o.z_star = std::max(o.z_star, std::abs(nm.mean_xi_star(j)) / nm.se_xi_star(j));
      else if (nm.mean_xi_star(j) != 0.0) o.z_star = INFINITY;
      o.z_uln = std::max(o.z_uln, std::abs(nm.mean_xi_uln(j)) / nm.se_xi_uln(j));
    }
    o.e_star = relative_frobenius_error(nm.cov_xi_star, scale * cp.sigma_sgd);
    o.e_uln = relative_frobenius_error(nm.cov_xi_uln, scale * cp.sigma_uln);
    outs[i] = o;
  });
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& o = outs[i];
    ok = ok && o.z_star <= 4.0 && o.z_uln <= 4.0 && o.e_star <= 0.05 && o.e_uln <= 0.05;
    detail += "probe" + std::to_string(i) + "{z*=" + fmt("%.2f", o.z_star) + " zU=" + fmt("%.2f", o.z_uln) +
              " err*=" + fmt("%.3f", o.e_star) + " errU=" + fmt("%.3f", o.e_uln) + "} ";
  }
  report(4, ok, detail, seconds_since(t0));
}

void criterion_5(ThreadPool& pool) {
  const auto t0 = std::chrono::steady_clock::now();
  const RngSeed rs{kSeed, 5};
  const RowMatrix x = sample_gaussian_features(kN, diag2(20, 20), rs.substream(0));
  const Dataset ds = make_ols_dataset(x, beta_star(), GaussianAdditive{0.5}, rs.substream(1));
  StrongOrderOptions opts;
  opts.horizon = 1.0;
  opts.n_replicas = 200;
  opts.batch_size = kBatch;
  opts.seed = rs.substream(2);
  const StrongOrderResult r =
      strong_approx_order(ds, beta_star(), {0.04, 0.02, 0.01, 0.005}, opts, pool.as_parallel_for());
  const double t = seconds_since(t0);
  std::string ratios;
  for (double h : r.halving_ratios) ratios += fmt("%.2f ", h);
  report(5, r.slope >= 1.7 && r.slope <= 2.3 && t <= 300.0,
         "slope=" + fmt("%.3f", r.slope) + " halving ratios " + ratios, t);
}

void criterion_6(ThreadPool& pool) {
  const auto t0 = std::chrono::steady_clock::now();
  const RngSeed rs{kSeed, 6};
  const double sigma2 = 0.5;
  const RowMatrix x = sample_gaussian_features(kN, diag2(20, 20), rs.substream(0));
  const Dataset lin_ds = make_ols_dataset(x, beta_star(), GaussianAdditive{sigma2}, rs.substream(1));

  ToyNet gen({2, 8, 1}, 10.0), net({2, 8, 1}, 10.0);
  gen.init_random(rs.substream(2));
  net.init_random(rs.substream(3));
  const RowMatrix xt = sample_gaussian_features(kN, Matrix::Identity(2, 2), rs.substream(4));
  RowMatrix yt(kN, 1);
  for (Eigen::Index i = 0; i < xt.rows(); ++i) gen.forward(xt.row(i).data(), &yt(i, 0));
  const Dataset net_ds = make_noisy_dataset(xt, yt, GaussianAdditive{sigma2}, rs.substream(5));

  struct Case {
    const Model* model;
    const Dataset* ds;
    const char* name;
  };
  const LinearModel lin(Vector::Zero(2));
  const std::vector<Case> cases{{&lin, &lin_ds, "linear"}, {&net, &net_ds, "toynet"}};
  std::vector<double> exact_err(2), mc_err(2);
  pool.parallel_for(2, [&](std::size_t i) {
    const auto& c = cases[i];
    const double reg = regularizer_strength(*c.model, c.ds->features, kEta, sigma2, kBatch);
    const CovariancePair cp = covariance_pair(*c.model, *c.ds, c.model->params());
    const double via_trace = kEta / kBatch * cp.sigma_uln.trace();
    exact_err[i] = std::abs(reg - via_trace) / std::max(1.0, std::abs(reg));
    SgdConfig cfg;
    cfg.learning_rate = kEta;
    cfg.batch_size = kBatch;
    cfg.seed = rs.substream(20 + i);
    const NoiseMoments nm = noise_moment_estimates(*c.model, *c.ds, c.model->params(), cfg, 100000, true);
    mc_err[i] = std::abs(nm.mean_sq_norm_xi_uln - reg) / reg;
  });
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < 2; ++i) {
    ok = ok && exact_err[i] <= 1e-12 && mc_err[i] <= 0.03;
    detail += std::string(cases[i].name) + "{identity err=" + fmt("%.1e", exact_err[i]) +
              " MC rel err=" + fmt("%.4f", mc_err[i]) + "} ";
  }
  report(6, ok, detail, seconds_since(t0));
}

void criterion_7() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(RngSeed{kSeed, 7});
  double worst_dec = 0.0, worst_loss = 0.0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = 5 + rng.index(40);
    const std::size_t d = 1 + rng.index(4);
    const bool use_net = c % 2 == 1;
    std::unique_ptr<Model> model;
    std::size_t m = 1;
    if (use_net) {
      m = 1 + rng.index(3);
      auto net = std::make_unique<ToyNet>(std::vector<std::size_t>{d, 1 + rng.index(6), m}, 0.5 + 5.0 * rng.uniform());
      net->init_random(RngSeed{kSeed, 700000 + static_cast<std::uint64_t>(c)});
      model = std::move(net);
    } else {
      model = std::make_unique<LinearModel>(d);
    }
    Matrix cov = Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) * (0.1 + 10 * rng.uniform());
    const RowMatrix x = sample_gaussian_features(n, cov, RngSeed{kSeed, 800000 + static_cast<std::uint64_t>(c)});
    RowMatrix y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      for (Eigen::Index l = 0; l < y.cols(); ++l) y(i, l) = 2.0 * rng.normal();
    const double sigma2 = rng.uniform() * 2.0;
    const Dataset ds = make_noisy_dataset(x, y, GaussianAdditive{sigma2}, RngSeed{kSeed, 900000 + static_cast<std::uint64_t>(c)});
    Vector theta(static_cast<Eigen::Index>(model->param_count()));
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta(j) = rng.normal();
    const std::size_t b = 1 + rng.index(n);
    std::vector<std::size_t> batch(b);
    for (auto& j : batch) j = rng.index(n);
    const double eta = 1e-3 + rng.uniform();
    const GradientDecomposition g = decompose_gradient(*model, ds, theta, batch, eta);
    const Vector lhs = eta * g.batch_grad;
    const Vector rhs = eta * g.full_clean_grad + std::sqrt(eta) * (g.xi_star + g.xi_uln);
    const double scale = std::max({lhs.norm(), (eta * g.full_clean_grad).norm(),
                                   (std::sqrt(eta) * g.xi_star).norm(), (std::sqrt(eta) * g.xi_uln).norm(), 1e-300});
    worst_dec = std::max(worst_dec, (lhs - rhs).norm() / scale);

    const LossTriple lt = loss_triple(*model, ds, theta);
    const double recon = lt.noisy_loss + lt.cross_term - lt.noise_energy;
    const double lscale = std::max({std::abs(lt.clean_loss), std::abs(lt.noisy_loss), std::abs(lt.noise_energy), 1e-300});
    worst_loss = std::max(worst_loss, std::abs(recon - lt.clean_loss) / lscale);
  }
  report(7, worst_dec <= 1e-10 && worst_loss <= 1e-10,
         "1000 cases each: decomposition max rel err=" + fmt("%.2e", worst_dec) +
             " loss identity max rel err=" + fmt("%.2e", worst_loss),
         seconds_since(t0));
}

void criterion_8(ThreadPool& pool) {
  const auto t0 = std::chrono::steady_clock::now();
  CoverageSetup setup;
  const CoverageReport r = coverage_experiment(setup, 500, 0.05, RngSeed{kSeed, 8}, pool.as_parallel_for());
  double steps = 0.0, clean = 0.0;
  for (const auto& t : r.trials) {
    steps += static_cast<double>(t.train_steps) / 500.0;
    clean += t.losses.clean_loss / 500.0;
  }
  report(8, r.bernstein_ok && r.hoeffding_ok,
         "bernstein=" + fmt("%.3f", r.bernstein_coverage) + " [" + fmt("%.3f", r.bernstein_ci.lo) + "," +
             fmt("%.3f", r.bernstein_ci.hi) + "] hoeffding=" + fmt("%.3f", r.hoeffding_coverage) + " [" +
             fmt("%.3f", r.hoeffding_ci.lo) + "," + fmt("%.3f", r.hoeffding_ci.hi) + "] threshold=" +
             fmt("%.4f", r.threshold) + " mean GD steps=" + fmt("%.0f", steps) + " mean clean loss=" + fmt("%.3f", clean) +
             fmt(" bernstein bound=%.3f", r.trials.front().bernstein) + fmt(" hoeffding bound=%.3f", r.trials.front().hoeffding),
         seconds_since(t0));
}

void criterion_9(ThreadPool& pool) {
  const auto t0 = std::chrono::steady_clock::now();
  TeacherSetup ts;
  ts.seed = RngSeed{kSeed, 9};
  const TeacherResult teacher = train_teacher(ts);
  DistillGridSetup gs;
  gs.seed = RngSeed{kSeed, 90};
  const DistillGridResult r = run_distill_grid(teacher, gs, pool.as_parallel_for());
  const double t = seconds_since(t0);
  std::string g;
  for (const auto& row : r.gaussian_final) {
    g += "[";
    for (double v : row) g += fmt("%.3f ", v);
    g += "]";
  }
  std::string s;
  for (const auto& row : r.swap_final) {
    s += "[";
    for (double v : row) s += fmt("%.3f ", v);
    s += "]";
  }
  const bool ok = r.gaussian_ordered >= 10 && r.swap_ordered + 1 >= r.swap_links && r.all_noisy_below_teacher && t <= 300.0;
  report(9, ok,
         "teacher gn=" + fmt("%.3f", r.teacher_grad_norm) + " (loss " + fmt("%.1e", teacher.final_loss) +
             ") gaussian ordered " + std::to_string(r.gaussian_ordered) + "/" + std::to_string(r.gaussian_links) +
             " " + g + " swap ordered " + std::to_string(r.swap_ordered) + "/" + std::to_string(r.swap_links) +
             " " + s,
         t);
}

void criterion_10() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(RngSeed{kSeed, 10});
  double chol = 0.0, lyap = 0.0, semi = 0.0, fd = 0.0;
  for (int c = 0; c < 200; ++c) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.index(6));
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(d) + 2));
    Matrix g(d, k);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < k; ++j) g(i, j) = rng.normal();
    const Matrix m = symmetrize(g * g.transpose());
    const CholeskyFactor f = cholesky_psd(m);
    chol = std::max(chol, relative_frobenius_error(f.l * f.l.transpose(), m));

    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    Vector lam(d);
    for (Eigen::Index i = 0; i < d; ++i) lam(i) = 0.98 * (2.0 * rng.uniform() - 1.0);
    const Matrix a = symmetrize(es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose());
    Matrix h(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) h(i, j) = rng.normal();
    const Matrix q = symmetrize(h * h.transpose());
    const Matrix p = discrete_lyapunov(a, q);
    lyap = std::max(lyap, (p - a * p * a.transpose() - q).norm() / q.norm());

    const Matrix s = symmetrize(h + h.transpose());
    const double t1 = rng.uniform(), t2 = rng.uniform();
    semi = std::max(semi, (sym_matrix_exp(s, t1 + t2) - sym_matrix_exp(s, t1) * sym_matrix_exp(s, t2)).norm());
  }
  for (int c = 0; c < 100; ++c) {
    const std::size_t d = 1 + rng.index(3);
    ToyNet net({d, 2 + rng.index(6), 1 + rng.index(2)}, 0.5 + 5 * rng.uniform());
    Vector theta(static_cast<Eigen::Index>(net.param_count()));
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta(j) = rng.normal();
    net.set_params(theta);
    Vector x(static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = 2.0 * rng.normal();
    for (std::size_t l = 0; l < net.output_dim(); ++l) {
      Vector e = Vector::Zero(static_cast<Eigen::Index>(net.output_dim()));
      e(static_cast<Eigen::Index>(l)) = 1.0;
      Vector analytic = Vector::Zero(theta.size());
      net.accumulate_vjp(x.data(), e.data(), 1.0, analytic.data());
      const Vector numeric = oracle::finite_difference(
          [&](const Vector& th) { return oracle::toynet_forward(net.layer_dims(), th, net.output_scale(), x)(static_cast<Eigen::Index>(l)); },
          theta);
      for (Eigen::Index j = 0; j < theta.size(); ++j) {
        const double denom = std::max({std::abs(analytic(j)), std::abs(numeric(j)), 1e-3});
        fd = std::max(fd, std::abs(analytic(j) - numeric(j)) / denom);
      }
    }
  }
  report(10, chol <= 1e-8 && lyap <= 1e-10 && semi <= 1e-9 && fd <= 1e-5,
         "cholesky=" + fmt("%.1e", chol) + " lyapunov=" + fmt("%.1e", lyap) + " semigroup=" + fmt("%.1e", semi) +
             " finite-diff=" + fmt("%.1e", fd),
         seconds_since(t0));
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t workers = default_worker_count();
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--workers" && i + 1 < argc) workers = std::stoul(argv[++i]);
    else only.push_back(std::stoi(a));
  }
  auto want = [&](int id) {
    if (only.empty()) return true;
    for (int o : only)
      if (o == id) return true;
    return false;
  };
  ThreadPool pool(workers);
  std::printf("acceptance: %zu worker(s)\n", pool.size());
  const std::vector<std::pair<int, std::function<void()>>> steps{
      {1, [&] { criteria_1_2(pool); }}, {3, [&] { criterion_3(pool); }},
      {4, [&] { criterion_4(pool); }},  {5, [&] { criterion_5(pool); }},
      {6, [&] { criterion_6(pool); }},  {7, [&] { criterion_7(); }},
      {8, [&] { criterion_8(pool); }},  {9, [&] { criterion_9(pool); }},
      {10, [&] { criterion_10(); }}};
  for (const auto& [id, fn] : steps) {
    if (!want(id) && !(id == 1 && want(2))) continue;
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, false, std::string("exception: ") + e.what(), 0.0);
      if (id == 1) report(2, false, "not evaluated", 0.0);
    }
  }
  std::printf("acceptance: %d failure(s)\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
