#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <sstream>

#include "oracles.hpp"
#include "uln/datagen.hpp"
#include "uln/error.hpp"
#include "uln/models.hpp"
#include "uln/numerics.hpp"
#include "uln/ou.hpp"
#include "uln/sgd.hpp"

using namespace uln;

namespace {

Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

struct Run {
  Dataset ds;
  SgdConfig cfg;
  Trajectory traj;
};

Run noisy_run(const Matrix& cov, double sigma2, std::size_t iterations, RngSeed seed) {
  const RowMatrix x = sample_gaussian_features(100, cov, seed.substream(0));
  Run r{make_ols_dataset(x, Vector::Ones(2), GaussianAdditive{sigma2}, seed.substream(1)), {}, {}};
  r.cfg.iterations = iterations;
  r.cfg.record_diagnostics = false;
  r.cfg.seed = seed.substream(2);
  r.traj = run_sgd(LinearModel(2), r.ds, r.cfg);
  return r;
}

}  // namespace

TEST_CASE("closed-form covariance for the reference constants") {
  const Matrix f = closed_form_cov(diag2(20, 20), 0.01, 0.5, 5);
  CHECK((f - 0.02 * Matrix::Identity(2, 2)).norm() <= 1e-15);
}

TEST_CASE("lyapunov stationary covariance for the reference constants") {
  const Matrix p = lyapunov_stationary_cov(diag2(20, 20), 0.01, 0.5, 5);
  CHECK(p(0, 0) == doctest::Approx(5.5555555555555556e-4).epsilon(1e-10));
  CHECK(p(1, 1) == doctest::Approx(5.5555555555555556e-4).epsilon(1e-10));
  CHECK(std::abs(p(0, 1)) <= 1e-18);
  Matrix sb(2, 2);
  sb << 12, 3, 3, 25;
  const Matrix a = Matrix::Identity(2, 2) - 0.01 * sb;
  const Matrix q = (0.01 * 0.01 * 0.7 / 5.0) * sb;
  CHECK(relative_frobenius_error(lyapunov_stationary_cov(sb, 0.01, 0.7, 5), oracle::lyapunov_fixed_point(a, q)) <= 1e-10);
}

TEST_CASE("OU covariance at time zero is zero") {
  const OuCovariance oc = ou_covariance_at(0.0, diag2(20, 20), 0.01, 0.5, 5);
  CHECK(oc.cov.cwiseAbs().maxCoeff() == 0.0);
  CHECK(oc.at_time == 0.0);
}

TEST_CASE("OU covariance tends to its closed-form limit") {
  const OuCovariance oc = ou_covariance_at(1e6, diag2(20, 20), 0.01, 0.5, 5);
  CHECK((oc.cov - 5.0e-4 * Matrix::Identity(2, 2)).norm() <= 1e-15);
}

TEST_CASE("OU covariance matches quadrature per eigendirection") {
  const double eta = 0.01, sigma2 = 0.5;
  const std::size_t b = 5;
  for (double lambda : {0.3, 2.0, 20.0, 100.0})
    for (double t : {0.01, 0.1, 1.0, 3.0}) {
      const double ref =
          oracle::simpson([&](double tau) { return std::exp(-2.0 * (t - tau) * lambda) * lambda; }, 0.0, t, 20000) *
          eta * sigma2 / b;
      const OuCovariance oc = ou_covariance_at(t, diag2(lambda, lambda), eta, sigma2, b);
      CHECK(std::abs(oc.cov(0, 0) - ref) <= 1e-8);
    }
}

TEST_CASE("OU covariance rotates with the eigenbasis") {
  Matrix sb(2, 2);
  sb << 30, 10, 10, 15;
  const OuCovariance oc = ou_covariance_at(0.05, sb, 0.01, 0.5, 5);
  Eigen::SelfAdjointEigenSolver<Matrix> es(sb);
  Matrix d = Matrix::Zero(2, 2);
  for (int i = 0; i < 2; ++i) d(i, i) = -(0.01 * 0.5 / 10.0) * std::expm1(-2.0 * es.eigenvalues()(i) * 0.05);
  CHECK((oc.cov - es.eigenvectors() * d * es.eigenvectors().transpose()).norm() <= 1e-15);
  CHECK_THROWS_AS(ou_covariance_at(-1.0, sb, 0.01, 0.5, 5), Error);
}

TEST_CASE("noise-free trajectory has vanishing stationary covariance") {
  const Run r = noisy_run(diag2(20, 20), 0.0, 20000, RngSeed{1, 0});
  const StationarySummary s = stationary_summary(r.traj, r.ds, r.cfg);
  CHECK(s.empirical_cov.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("summary statistics match a two-pass computation") {
  const Run r = noisy_run(diag2(20, 20), 0.5, 10000, RngSeed{2, 0});
  const StationarySummary s = stationary_summary(r.traj, r.ds, r.cfg, 0.25);
  const std::size_t first = r.traj.checkpoints.size() - s.n_samples;
  Matrix samples(s.n_samples, 2);
  for (std::size_t i = 0; i < s.n_samples; ++i) samples.row(i) = r.traj.checkpoints[first + i].theta.transpose();
  CHECK((s.empirical_mean - samples.colwise().mean().transpose()).norm() <= 1e-12);
  const Matrix two_pass = oracle::two_pass_covariance(samples);
  const double n = static_cast<double>(s.n_samples);
  CHECK(((s.empirical_cov - two_pass).norm() <= 1e-12 || (s.empirical_cov - two_pass * n / (n - 1)).norm() <= 1e-12));
  CHECK(s.formula_to_lyapunov_ratio == doctest::Approx(s.closed_form_cov.trace() / s.lyapunov_cov.trace()));
  CHECK(s.burn_in_fraction == 0.25);
}

TEST_CASE("stationary summary argument checks") {
  const Run r = noisy_run(diag2(20, 20), 0.5, 1500, RngSeed{3, 0});
  try {
    stationary_summary(r.traj, r.ds, r.cfg, 0.5);
    FAIL("expected TooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooShort);
  }
  CHECK_THROWS_AS(stationary_summary(r.traj, r.ds, r.cfg, 1.0), Error);
}

TEST_CASE("isotropic data gives no preferred axis") {
  // A single noise draw of 100 labels is itself anisotropic, so pool
  // replicas with fresh label noise on the same features.
  const RowMatrix x = sample_gaussian_features(100, diag2(20, 20), RngSeed{4, 0});
  std::vector<StationarySummary> parts;
  for (std::uint64_t r = 0; r < 8; ++r) {
    const Dataset ds = make_ols_dataset(x, Vector::Ones(2), GaussianAdditive{0.5}, RngSeed{4, 1}.substream(r));
    SgdConfig cfg;
    cfg.iterations = 100000;
    cfg.record_diagnostics = false;
    cfg.seed = RngSeed{4, 2}.substream(r);
    parts.push_back(stationary_summary(run_sgd(LinearModel(2), ds, cfg), ds, cfg));
  }
  StationarySummary s = parts.front();
  s.empirical_cov = pool_summaries(parts).pooled_cov;
  const AnisotropyReport a = anisotropy_report(s);
  CHECK(a.eigen_ratio >= 0.7);
  CHECK(a.eigen_ratio <= 1.4);
}

TEST_CASE("anisotropic data shapes the stationary cloud") {
  const Run ver = noisy_run(diag2(10, 100), 0.5, 400000, RngSeed{5, 0});
  const StationarySummary sv = stationary_summary(ver.traj, ver.ds, ver.cfg);
  CHECK(sv.empirical_cov(1, 1) > sv.empirical_cov(0, 0));
  CHECK(anisotropy_report(sv).aligned);
  const Run hor = noisy_run(diag2(100, 10), 0.5, 400000, RngSeed{6, 0});
  const StationarySummary sh = stationary_summary(hor.traj, hor.ds, hor.cfg);
  CHECK(sh.empirical_cov(0, 0) > sh.empirical_cov(1, 1));
  CHECK(anisotropy_report(sh).aligned);
}

TEST_CASE("pooling replicas") {
  StationarySummary a, b, c;
  for (auto* s : {&a, &b, &c}) {
    s->closed_form_cov = 0.02 * Matrix::Identity(2, 2);
    s->lyapunov_cov = 1e-3 * Matrix::Identity(2, 2);
    s->formula_to_lyapunov_ratio = 20.0;
  }
  a.empirical_mean = Vector::Constant(2, 1.0);
  b.empirical_mean = Vector::Constant(2, 2.0);
  c.empirical_mean = Vector::Constant(2, 3.0);
  a.empirical_cov = 1e-3 * Matrix::Identity(2, 2);
  b.empirical_cov = 2e-3 * Matrix::Identity(2, 2);
  c.empirical_cov = 3e-3 * Matrix::Identity(2, 2);
  const EnsembleSummary e = pool_summaries({a, b, c});
  CHECK(e.replicas == 3);
  CHECK(e.grand_mean(0) == doctest::Approx(2.0));
  CHECK(e.grand_mean_stderr(0) == doctest::Approx(1.0 / std::sqrt(3.0)));
  CHECK(e.pooled_cov(1, 1) == doctest::Approx(2e-3));
  CHECK(e.lyapunov_rel_error == doctest::Approx(1.0));
  CHECK_THROWS_AS(pool_summaries({a}), Error);
}

TEST_CASE("flat summary csv round-trips") {
  const Run r = noisy_run(diag2(20, 20), 0.5, 4000, RngSeed{7, 0});
  const StationarySummary s = stationary_summary(r.traj, r.ds, r.cfg);
  std::ostringstream os;
  write_summary_flat(os, s);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "quantity,row,col,value");
  std::map<std::string, Matrix> got;
  while (std::getline(is, line)) {
    std::stringstream ls(line);
    std::string q, rs, cs, vs;
    std::getline(ls, q, ',');
    std::getline(ls, rs, ',');
    std::getline(ls, cs, ',');
    std::getline(ls, vs, ',');
    auto& m = got[q];
    const int i = std::stoi(rs), j = std::stoi(cs);
    if (m.rows() <= i || m.cols() <= j) m.conservativeResize(std::max<Eigen::Index>(m.rows(), i + 1), std::max<Eigen::Index>(m.cols(), j + 1));
    m(i, j) = std::stod(vs);
  }
  CHECK(got.at("empirical_cov") == s.empirical_cov);
  CHECK(got.at("lyapunov_cov") == s.lyapunov_cov);
  CHECK(got.at("closed_form_cov") == s.closed_form_cov);
  CHECK(got.at("sigma_bar") == s.sigma_bar);
  CHECK(Vector(got.at("empirical_mean").col(0)) == s.empirical_mean);

  std::ostringstream rep;
  write_summary_report(rep, s);
  CHECK(rep.str().find("formula_to_lyapunov_ratio: ") != std::string::npos);
  CHECK(rep.str().find("rel_error_vs_lyapunov: ") != std::string::npos);
}
