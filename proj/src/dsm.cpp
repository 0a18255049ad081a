#include "uln/dsm.hpp"

#include <cmath>
#include <ostream>
#include <iomanip>

#include "uln/error.hpp"
#include "uln/simd/kernels.hpp"

namespace uln {

namespace {

std::unique_ptr<Model> at(const Model& model, const Vector& theta) {
  auto local = model.clone();
  local->set_params(theta);
  return local;
}

// Per-sample clean loss gradients, one row each.
RowMatrix clean_grads(const Model& model, const Dataset& ds) {
  const auto n = static_cast<Eigen::Index>(ds.n());
  RowMatrix g = RowMatrix::Zero(n, static_cast<Eigen::Index>(model.param_count()));
  for (Eigen::Index i = 0; i < n; ++i)
    model.residual_gradient(ds.features.row(i).data(), ds.clean_labels.row(i).data(), 1.0,
                            g.row(i).data());
  return g;
}

Matrix centered_second_moment(RowMatrix g) {
  const Vector mean = g.colwise().mean().transpose();
  g.rowwise() -= mean.transpose();
  const auto p = static_cast<std::size_t>(g.cols());
  Matrix acc = Matrix::Zero(g.cols(), g.cols());
  const auto& k = simd::kernels();
  for (Eigen::Index i = 0; i < g.rows(); ++i) k.ger(1.0, g.row(i).data(), p, g.row(i).data(), p, acc.data());
  return symmetrize(acc / static_cast<double>(g.rows()));
}

}  // namespace

Matrix sigma_sgd_at(const Model& model, const Dataset& ds, const Vector& theta) {
  return centered_second_moment(clean_grads(*at(model, theta), ds));
}

Vector full_clean_gradient(const Model& model, const Dataset& ds, const Vector& theta) {
  auto local = at(model, theta);
  Vector acc = Vector::Zero(theta.size());
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(ds.n()); ++i)
    local->residual_gradient(ds.features.row(i).data(), ds.clean_labels.row(i).data(), 1.0,
                             acc.data());
  return acc / static_cast<double>(ds.n());
}

CovariancePair covariance_pair(const Model& model, const Dataset& ds, const Vector& theta) {
  if (model.input_dim() != ds.d() || model.output_dim() != ds.m())
    throw Error(ErrorCode::DimensionMismatch, "model and dataset shapes differ");
  auto local = at(model, theta);
  CovariancePair out;
  out.at_params = theta;
  out.sigma_sgd = centered_second_moment(clean_grads(*local, ds));

  const GradientSample gs = per_sample_gradients(*local, ds.features);
  const auto p = static_cast<std::size_t>(gs.per_sample_grads.cols());
  Matrix acc = Matrix::Zero(gs.per_sample_grads.cols(), gs.per_sample_grads.cols());
  const auto& k = simd::kernels();
  for (Eigen::Index r = 0; r < gs.per_sample_grads.rows(); ++r)
    k.ger(1.0, gs.per_sample_grads.row(r).data(), p, gs.per_sample_grads.row(r).data(), p, acc.data());
  const Matrix second = symmetrize(acc / static_cast<double>(ds.n()));
  out.sigma_uln = ds.sigma2 * second;
  if (dynamic_cast<const LinearModel*>(&model)) out.sigma_bar = second;
  return out;
}

DsmConfig DsmConfig::from_sgd(const SgdConfig& sgd, DsmMode mode) {
  DsmConfig c;
  c.sgd = sgd;
  c.mode = mode;
  c.z_seed = sgd.seed.substream(2);
  c.z_prime_seed = sgd.seed.substream(3);
  return c;
}

Vector dsm_step(const Vector& theta, const Vector& clean_grad, const Matrix& l_sgd,
                const Matrix& l_uln, double eta, std::size_t b, const Vector& z,
                const Vector& z_prime) {
  if (clean_grad.size() != theta.size() || z.size() != theta.size())
    throw Error(ErrorCode::DimensionMismatch, "dsm_step sizes");
  const double amp = std::sqrt(eta) * std::sqrt(eta / static_cast<double>(b));
  Vector noise = l_sgd * z;
  if (l_uln.size() > 0) noise += l_uln * z_prime;
  return theta - eta * clean_grad + amp * noise;
}

Trajectory run_dsm(const Model& init, const Dataset& ds, const DsmConfig& cfg) {
  if (init.input_dim() != ds.d() || init.output_dim() != ds.m())
    throw Error(ErrorCode::DimensionMismatch, "model and dataset shapes differ");
  validate(cfg.sgd, ds.n());
  if (cfg.z_seed == cfg.z_prime_seed)
    throw Error(ErrorCode::InvalidArgument, "z and z' must use distinct streams");
  Trajectory traj;
  traj.config = cfg.sgd;
  auto model = init.clone();
  Vector theta = model->params();
  const auto p = theta.size();
  const bool linear = dynamic_cast<const LinearModel*>(&init) != nullptr;
  const bool two = cfg.mode == DsmMode::TwoDiffusion;

  Matrix l_uln;
  if (two && linear) l_uln = cholesky_psd(covariance_pair(*model, ds, theta).sigma_uln).l;

  Rng zr(cfg.z_seed);
  Rng zpr(cfg.z_prime_seed);
  Vector z(p), zp(p);
  auto record = [&](std::size_t it) {
    model->set_params(theta);
    Checkpoint c{it, theta, std::nullopt};
    if (cfg.sgd.record_diagnostics) c.diag = compute_diagnostics(*model, ds);
    traj.checkpoints.push_back(std::move(c));
  };
  traj.checkpoints.reserve(cfg.sgd.iterations / cfg.sgd.record_every + 2);
  record(0);
  for (std::size_t it = 1; it <= cfg.sgd.iterations; ++it) {
    model->set_params(theta);
    const RowMatrix g = clean_grads(*model, ds);
    const Vector grad = g.colwise().mean().transpose();
    const Matrix l_sgd = cholesky_psd(centered_second_moment(g)).l;
    if (two && !linear) l_uln = cholesky_psd(covariance_pair(*model, ds, theta).sigma_uln).l;
    for (Eigen::Index j = 0; j < p; ++j) z(j) = zr.normal();
    if (two)
      for (Eigen::Index j = 0; j < p; ++j) zp(j) = zpr.normal();
    theta = dsm_step(theta, grad, l_sgd, two ? l_uln : Matrix(), cfg.sgd.learning_rate,
                     cfg.sgd.batch_size, z, zp);
    if (!(theta.squaredNorm() <= kDivergenceThreshold * kDivergenceThreshold))
      throw Error(ErrorCode::Diverged, "|theta| exceeded 1e12 at iteration " + std::to_string(it));
    if (it % cfg.sgd.record_every == 0) record(it);
  }
  if (traj.checkpoints.back().k != cfg.sgd.iterations) record(cfg.sgd.iterations);
  return traj;
}

// ---------------------------------------------------------------------------

namespace {

struct LinearSde {
  RowMatrix x;        // n x d
  Vector y;           // clean labels x^T beta*
  Matrix l_uln;       // factor of sigma2 * sigma_bar
  double amp_eta;     // diffusion eta (nominal)
  std::size_t b;
  bool tied;

  // One Euler step of size h driven by Brownian increments dw1, dw2.
  void step(Vector& theta, double h, const Vector& dw1, const Vector& dw2) const {
    const auto n = x.rows();
    const auto d = x.cols();
    RowMatrix g(n, d);
    for (Eigen::Index i = 0; i < n; ++i) g.row(i) = x.row(i) * (x.row(i).dot(theta) - y(i));
    const Vector mean = g.colwise().mean().transpose();
    g.rowwise() -= mean.transpose();
    const Matrix cov = symmetrize(Matrix(g.transpose() * g) / static_cast<double>(n));
    const Matrix l_sgd = cholesky_psd(cov).l;
    const double e = tied ? h : amp_eta;
    theta += -h * mean + std::sqrt(e / static_cast<double>(b)) * (l_sgd * dw1 + l_uln * dw2);
  }
};

LinearSde make_sde(const Dataset& ds, const Vector& beta_star, const StrongOrderOptions& opts) {
  if (ds.m() != 1) throw Error(ErrorCode::DimensionMismatch, "order experiment needs scalar labels");
  if (beta_star.size() != static_cast<Eigen::Index>(ds.d()))
    throw Error(ErrorCode::DimensionMismatch, "beta_star length");
  LinearSde s;
  s.x = ds.features;
  s.y = ds.features * beta_star;
  s.l_uln = cholesky_psd(symmetrize(ds.sigma2 * sample_second_moment(ds.features))).l;
  s.amp_eta = opts.sde_eta;
  s.b = opts.batch_size;
  s.tied = opts.tied;
  return s;
}

std::size_t ratio_of(double coarse, double fine) {
  const double r = coarse / fine;
  const auto k = static_cast<std::size_t>(std::llround(r));
  if (k < 1 || std::abs(r - static_cast<double>(k)) > 1e-9 * r)
    throw Error(ErrorCode::InvalidArgument, "step sizes must be integer multiples of the reference");
  return k;
}

// Squared terminal errors for one replica, per coarse step size.
std::vector<double> replica_errors(const LinearSde& sde, const std::vector<std::size_t>& ratios,
                                   double h_ref, std::size_t n_fine, RngSeed seed) {
  const auto d = sde.x.cols();
  Rng rng(seed);
  const double sq = std::sqrt(h_ref);
  Vector fine = Vector::Zero(d);
  std::vector<Vector> coarse(ratios.size(), Vector::Zero(d));
  std::vector<Vector> acc1(ratios.size(), Vector::Zero(d));
  std::vector<Vector> acc2(ratios.size(), Vector::Zero(d));
  Vector d1(d), d2(d);
  for (std::size_t k = 0; k < n_fine; ++k) {
    for (Eigen::Index j = 0; j < d; ++j) d1(j) = sq * rng.normal();
    for (Eigen::Index j = 0; j < d; ++j) d2(j) = sq * rng.normal();
    sde.step(fine, h_ref, d1, d2);
    for (std::size_t c = 0; c < ratios.size(); ++c) {
      acc1[c] += d1;
      acc2[c] += d2;
      if ((k + 1) % ratios[c] == 0) {
        sde.step(coarse[c], h_ref * static_cast<double>(ratios[c]), acc1[c], acc2[c]);
        acc1[c].setZero();
        acc2[c].setZero();
      }
    }
  }
  std::vector<double> err(ratios.size());
  for (std::size_t c = 0; c < ratios.size(); ++c) err[c] = (fine - coarse[c]).squaredNorm();
  return err;
}

void check_stable(const Dataset& ds, double eta) {
  const double margin = step_stability_margin(ds, eta);
  if (!(margin < 2.0))
    throw Error(ErrorCode::Unstable, "eta * lambda_max = " + std::to_string(margin) + " >= 2");
}

}  // namespace

double coupled_mse(const Dataset& ds, const Vector& beta_star, double eta_coarse, double eta_ref,
                   const StrongOrderOptions& opts, double* stderr_out) {
  check_stable(ds, eta_coarse);
  const LinearSde sde = make_sde(ds, beta_star, opts);
  const std::size_t ratio = ratio_of(eta_coarse, eta_ref);
  const std::size_t n_fine = ratio_of(opts.horizon, eta_ref);
  if (n_fine % ratio != 0) throw Error(ErrorCode::InvalidArgument, "horizon not a multiple of eta");
  double s = 0.0, s2 = 0.0;
  for (std::size_t r = 0; r < opts.n_replicas; ++r) {
    const double e = replica_errors(sde, {ratio}, eta_ref, n_fine, opts.seed.substream(r))[0];
    s += e;
    s2 += e * e;
  }
  const double nr = static_cast<double>(opts.n_replicas);
  const double mean = s / nr;
  if (stderr_out) *stderr_out = std::sqrt(std::max(0.0, s2 / nr - mean * mean) / nr);
  return mean;
}

StrongOrderResult strong_approx_order(const Dataset& ds, const Vector& beta_star,
                                      const std::vector<double>& eta_list,
                                      const StrongOrderOptions& opts, const ParallelFor& pfor) {
  if (eta_list.size() < 3) throw Error(ErrorCode::InvalidArgument, "need at least 3 step sizes");
  if (opts.n_replicas < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 replicas");
  for (double e : eta_list) check_stable(ds, e);
  const LinearSde sde = make_sde(ds, beta_star, opts);
  double h_min = eta_list.front();
  for (double e : eta_list) h_min = std::min(h_min, e);
  const double h_ref = h_min / static_cast<double>(opts.ref_divisor);
  std::vector<std::size_t> ratios;
  for (double e : eta_list) ratios.push_back(ratio_of(e, h_ref));
  const std::size_t n_fine = ratio_of(opts.horizon, h_ref);
  for (auto r : ratios)
    if (n_fine % r != 0) throw Error(ErrorCode::InvalidArgument, "horizon not a multiple of eta");

  std::vector<std::vector<double>> errs(opts.n_replicas);
  pfor(opts.n_replicas, [&](std::size_t r) {
    errs[r] = replica_errors(sde, ratios, h_ref, n_fine, opts.seed.substream(r));
  });

  StrongOrderResult out;
  out.eta = eta_list;
  out.eta_ref = h_ref;
  const double nr = static_cast<double>(opts.n_replicas);
  for (std::size_t c = 0; c < eta_list.size(); ++c) {
    double s = 0.0, s2 = 0.0;
    for (const auto& e : errs) {
      s += e[c];
      s2 += e[c] * e[c];
    }
    const double mean = s / nr;
    out.mse.push_back(mean);
    out.stderr_mse.push_back(std::sqrt(std::max(0.0, s2 / nr - mean * mean) / nr));
  }
  // Least-squares slope of log mse against log eta.
  double mx = 0.0, my = 0.0;
  const double k = static_cast<double>(eta_list.size());
  for (std::size_t c = 0; c < eta_list.size(); ++c) {
    mx += std::log(eta_list[c]) / k;
    my += std::log(out.mse[c]) / k;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t c = 0; c < eta_list.size(); ++c) {
    const double dx = std::log(eta_list[c]) - mx;
    sxy += dx * (std::log(out.mse[c]) - my);
    sxx += dx * dx;
  }
  out.slope = sxy / sxx;
  for (std::size_t c = 0; c + 1 < out.mse.size(); ++c) out.halving_ratios.push_back(out.mse[c] / out.mse[c + 1]);
  return out;
}

void write_order_csv(std::ostream& os, const StrongOrderResult& r) {
  os << "eta,mse,stderr\n" << std::setprecision(17);
  for (std::size_t c = 0; c < r.eta.size(); ++c) os << r.eta[c] << ',' << r.mse[c] << ',' << r.stderr_mse[c] << '\n';
}

}  // namespace uln
