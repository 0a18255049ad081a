#include "uln/ou.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>

#include <Eigen/Eigenvalues>

#include "uln/error.hpp"
#include "uln/numerics.hpp"

namespace uln {

Matrix closed_form_cov(const Matrix& sigma_bar, double eta, double sigma2, std::size_t b) {
  return (eta * sigma2 / static_cast<double>(b)) * sigma_bar;
}

Matrix lyapunov_stationary_cov(const Matrix& sigma_bar, double eta, double sigma2, std::size_t b) {
  const auto d = sigma_bar.rows();
  const Matrix a = Matrix::Identity(d, d) - eta * sigma_bar;
  const Matrix q = (eta * eta * sigma2 / static_cast<double>(b)) * sigma_bar;
  return discrete_lyapunov(a, q);
}

StationarySummary stationary_summary(const Trajectory& traj, const Dataset& ds, const SgdConfig& cfg,
                                     double burn_in_fraction, std::size_t n_batches) {
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0))
    throw Error(ErrorCode::InvalidArgument, "burn-in fraction must lie in [0, 1)");
  const auto& cps = traj.checkpoints;
  const auto start = static_cast<std::size_t>(std::ceil(burn_in_fraction * static_cast<double>(cps.size())));
  const std::size_t count = cps.size() - std::min(start, cps.size());
  if (count < 1000) throw Error(ErrorCode::TooShort, "fewer than 1000 post-burn-in checkpoints");
  const auto d = cps.front().theta.size();

  // Welford streaming moments.
  StationarySummary s;
  s.burn_in_fraction = burn_in_fraction;
  s.n_samples = count;
  Vector mean = Vector::Zero(d);
  Matrix m2 = Matrix::Zero(d, d);
  std::size_t seen = 0;
  for (std::size_t i = start; i < cps.size(); ++i) {
    ++seen;
    const Vector delta = cps[i].theta - mean;
    mean += delta / static_cast<double>(seen);
    m2 += delta * (cps[i].theta - mean).transpose();
  }
  s.empirical_mean = mean;
  s.empirical_cov = symmetrize(m2 / static_cast<double>(count - 1));

  // Batch means for the standard error of the mean.
  const std::size_t nb = std::max<std::size_t>(2, std::min(n_batches, count));
  const std::size_t per = count / nb;
  Vector bm_sum = Vector::Zero(d), bm_sq = Vector::Zero(d);
  for (std::size_t bi = 0; bi < nb; ++bi) {
    Vector bmean = Vector::Zero(d);
    for (std::size_t j = 0; j < per; ++j) bmean += cps[start + bi * per + j].theta;
    bmean /= static_cast<double>(per);
    bm_sum += bmean;
    bm_sq += bmean.cwiseProduct(bmean);
  }
  const double nbd = static_cast<double>(nb);
  const Vector bm_mean = bm_sum / nbd;
  const Vector var = ((bm_sq - nbd * bm_mean.cwiseProduct(bm_mean)) / (nbd - 1.0)).cwiseMax(0.0);
  s.mean_stderr = (var / nbd).cwiseSqrt();

  s.sigma_bar = sample_second_moment(ds.features);
  s.closed_form_cov = closed_form_cov(s.sigma_bar, cfg.learning_rate, ds.sigma2, cfg.batch_size);
  s.lyapunov_cov = lyapunov_stationary_cov(s.sigma_bar, cfg.learning_rate, ds.sigma2, cfg.batch_size);
  const double lt = s.lyapunov_cov.trace();
  s.formula_to_lyapunov_ratio = lt > 0.0 ? s.closed_form_cov.trace() / lt : 0.0;
  s.lyapunov_rel_error = relative_frobenius_error(s.empirical_cov, s.lyapunov_cov);
  s.formula_rel_error = relative_frobenius_error(s.empirical_cov, s.closed_form_cov);
  return s;
}

EnsembleSummary pool_summaries(const std::vector<StationarySummary>& parts) {
  if (parts.size() < 2) throw Error(ErrorCode::TooShort, "need at least two replicas to pool");
  EnsembleSummary e;
  e.replicas = parts.size();
  const auto d = parts.front().empirical_mean.size();
  const double r = static_cast<double>(parts.size());
  e.grand_mean = Vector::Zero(d);
  e.pooled_cov = Matrix::Zero(d, d);
  for (const auto& p : parts) {
    e.grand_mean += p.empirical_mean / r;
    e.pooled_cov += p.empirical_cov / r;
  }
  Vector var = Vector::Zero(d);
  for (const auto& p : parts) var += (p.empirical_mean - e.grand_mean).cwiseAbs2() / (r - 1.0);
  e.grand_mean_stderr = (var / r).cwiseSqrt();
  e.pooled_cov = symmetrize(e.pooled_cov);
  e.closed_form_cov = parts.front().closed_form_cov;
  e.lyapunov_cov = parts.front().lyapunov_cov;
  e.formula_to_lyapunov_ratio = parts.front().formula_to_lyapunov_ratio;
  e.lyapunov_rel_error = relative_frobenius_error(e.pooled_cov, e.lyapunov_cov);
  return e;
}

OuCovariance ou_covariance_at(double t, const Matrix& sigma_bar, double eta, double sigma2,
                              std::size_t b) {
  if (!(t >= 0.0)) throw Error(ErrorCode::InvalidArgument, "time must be >= 0");
  if (!is_symmetric(sigma_bar)) throw Error(ErrorCode::NotSymmetric, "sigma_bar");
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma_bar);
  const double c = eta * sigma2 / static_cast<double>(b);
  Vector v(sigma_bar.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double lam = std::max(es.eigenvalues()(i), 0.0);
    // c * integral_0^t lam exp(-2 lam (t - s)) ds, continuous as lam -> 0.
    v(i) = -0.5 * c * std::expm1(-2.0 * lam * t);
  }
  OuCovariance out;
  out.at_time = t;
  out.cov = symmetrize(es.eigenvectors() * v.asDiagonal() * es.eigenvectors().transpose());
  return out;
}

AnisotropyReport anisotropy_report(const StationarySummary& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> emp(s.empirical_cov);
  Eigen::SelfAdjointEigenSolver<Matrix> bar(s.sigma_bar);
  const auto d = s.empirical_cov.rows();
  AnisotropyReport r;
  r.eigenvalues = emp.eigenvalues().reverse();
  r.eigenvectors = emp.eigenvectors().rowwise().reverse();
  r.sigma_bar_top = bar.eigenvectors().col(d - 1);
  const double c = std::min(1.0, std::abs(r.eigenvectors.col(0).dot(r.sigma_bar_top)));
  r.angle_deg = std::acos(c) * 180.0 / std::numbers::pi;
  r.aligned = r.angle_deg <= 25.0;
  const double lo = r.eigenvalues(d - 1);
  r.eigen_ratio = lo > 0.0 ? r.eigenvalues(0) / lo : std::numeric_limits<double>::infinity();
  return r;
}

namespace {

void put_vec(std::ostream& os, const char* key, const Vector& v) {
  os << key << ':';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << v(i);
  os << '\n';
}

void put_mat(std::ostream& os, const char* key, const Matrix& m) {
  os << key << ':';
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << ' ' << m(i, j);
  os << '\n';
}

void flat(std::ostream& os, const char* q, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << q << ',' << i << ',' << j << ',' << m(i, j) << '\n';
}

}  // namespace

void write_summary_report(std::ostream& os, const StationarySummary& s) {
  os << std::setprecision(10);
  os << "n_samples: " << s.n_samples << '\n';
  os << "burn_in_fraction: " << s.burn_in_fraction << '\n';
  put_vec(os, "empirical_mean", s.empirical_mean);
  put_vec(os, "mean_stderr", s.mean_stderr);
  put_mat(os, "empirical_cov", s.empirical_cov);
  put_mat(os, "lyapunov_cov", s.lyapunov_cov);
  put_mat(os, "closed_form_cov", s.closed_form_cov);
  os << "empirical_trace: " << s.empirical_cov.trace() << '\n';
  os << "lyapunov_trace: " << s.lyapunov_cov.trace() << '\n';
  os << "closed_form_trace: " << s.closed_form_cov.trace() << '\n';
  os << "formula_to_lyapunov_ratio: " << s.formula_to_lyapunov_ratio << '\n';
  os << "rel_error_vs_lyapunov: " << s.lyapunov_rel_error << '\n';
  os << "rel_error_vs_formula: " << s.formula_rel_error << '\n';
}

void write_summary_flat(std::ostream& os, const StationarySummary& s) {
  os << "quantity,row,col,value\n" << std::setprecision(17);
  flat(os, "empirical_mean", s.empirical_mean);
  flat(os, "mean_stderr", s.mean_stderr);
  flat(os, "empirical_cov", s.empirical_cov);
  flat(os, "lyapunov_cov", s.lyapunov_cov);
  flat(os, "closed_form_cov", s.closed_form_cov);
  flat(os, "sigma_bar", s.sigma_bar);
}

}  // namespace uln
