#include "uln/sgd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>

#include <Eigen/Eigenvalues>

#include "uln/error.hpp"
#include "uln/numerics.hpp"
#include "uln/simd/kernels.hpp"

namespace uln {

void validate(const SgdConfig& cfg, std::size_t n) {
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
    throw Error(ErrorCode::InvalidArgument, "learning rate must be finite and >= 0");
  if (cfg.batch_size < 1 || cfg.batch_size > n)
    throw Error(ErrorCode::InvalidArgument, "batch size must lie in [1, N]");
  if (cfg.iterations < 1) throw Error(ErrorCode::InvalidArgument, "iterations must be >= 1");
  if (cfg.record_every < 1) throw Error(ErrorCode::InvalidArgument, "record_every must be >= 1");
}

double step_stability_margin(const Dataset& ds, double eta) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sample_second_moment(ds.features),
                                           Eigen::EigenvaluesOnly);
  return eta * es.eigenvalues().maxCoeff();
}

BatchSampler::BatchSampler(std::size_t n, std::size_t b, Sampling mode) : n_(n), b_(b), mode_(mode) {
  if (mode_ == Sampling::WithoutReplacementPerBatch) {
    perm_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) perm_[i] = i;
  }
}

void BatchSampler::draw(Rng& rng, std::vector<std::size_t>& out) {
  out.resize(b_);
  if (mode_ == Sampling::WithReplacement) {
    for (auto& j : out) j = rng.index(n_);
    return;
  }
  // Partial Fisher-Yates: the first b entries form a uniform b-subset.
  for (std::size_t i = 0; i < b_; ++i) {
    const std::size_t j = i + rng.index(n_ - i);
    std::swap(perm_[i], perm_[j]);
    out[i] = perm_[i];
  }
}

Diagnostics compute_diagnostics(const Model& model, const Dataset& ds) {
  Diagnostics d;
  d.loss_noisy = half_mse(model, ds.features, ds.noisy_labels);
  d.loss_clean = half_mse(model, ds.features, ds.clean_labels);
  d.grad_norm = avg_gradient_norm(model, ds.features);
  return d;
}

namespace {

void check_model_data(const Model& model, const Dataset& ds) {
  if (model.input_dim() != ds.d())
    throw Error(ErrorCode::DimensionMismatch, "model input width != feature width");
  if (model.output_dim() != ds.m())
    throw Error(ErrorCode::DimensionMismatch, "model output width != label width");
}

}  // namespace

Trajectory run_sgd(const Model& init, const Dataset& ds, const SgdConfig& cfg, LabelSource labels,
                   const TargetProvider* provider) {
  check_model_data(init, ds);
  validate(cfg, ds.n());
  Trajectory traj;
  traj.config = cfg;
  if (dynamic_cast<const LinearModel*>(&init)) {
    const double margin = step_stability_margin(ds, cfg.learning_rate);
    if (margin >= 2.0)
      traj.warnings.push_back("eta * lambda_max = " + std::to_string(margin) + " >= 2");
  }

  auto model = init.clone();
  Vector& theta = model->mutable_params();
  const auto p = static_cast<std::size_t>(theta.size());
  const std::size_t m = ds.m();
  const std::size_t b = cfg.batch_size;
  const RowMatrix& y = labels == LabelSource::Noisy ? ds.noisy_labels : ds.clean_labels;

  Rng sampler_rng(cfg.seed.substream(0));
  Rng target_rng(cfg.seed.substream(1));
  BatchSampler sampler(ds.n(), b, cfg.sampling);
  std::vector<std::size_t> batch;
  std::vector<double> targets(b * m);
  Vector grad(static_cast<Eigen::Index>(p));
  const auto& k = simd::kernels();
  const double step = cfg.learning_rate / static_cast<double>(b);

  auto record = [&](std::size_t it) {
    Checkpoint c{it, theta, std::nullopt};
    if (cfg.record_diagnostics) c.diag = compute_diagnostics(*model, ds);
    traj.checkpoints.push_back(std::move(c));
  };
  traj.checkpoints.reserve(cfg.iterations / cfg.record_every + 2);
  record(0);

  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    sampler.draw(sampler_rng, batch);
    grad.setZero();
    if (provider) {
      (*provider)(batch, target_rng, targets.data());
      for (std::size_t s = 0; s < b; ++s)
        model->residual_gradient(ds.features.row(static_cast<Eigen::Index>(batch[s])).data(),
                                 targets.data() + s * m, 1.0, grad.data());
    } else {
      for (std::size_t s = 0; s < b; ++s) {
        const auto r = static_cast<Eigen::Index>(batch[s]);
        model->residual_gradient(ds.features.row(r).data(), y.row(r).data(), 1.0, grad.data());
      }
    }
    k.axpy(-step, grad.data(), theta.data(), p);
    const double norm2 = k.sum_squares(theta.data(), p);
    if (!(norm2 <= kDivergenceThreshold * kDivergenceThreshold))
      throw Error(ErrorCode::Diverged, "|theta| exceeded 1e12 at iteration " + std::to_string(it));
    if (it % cfg.record_every == 0) record(it);
  }
  if (traj.checkpoints.back().k != cfg.iterations) record(cfg.iterations);
  return traj;
}

namespace {

// Sums grad L*_i over the given (sorted) indices and divides by their count.
Vector mean_clean_grad(const Model& model, const Dataset& ds, const std::vector<std::size_t>& idx) {
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(model.param_count()));
  for (auto i : idx) {
    const auto r = static_cast<Eigen::Index>(i);
    model.residual_gradient(ds.features.row(r).data(), ds.clean_labels.row(r).data(), 1.0,
                            acc.data());
  }
  return acc * (1.0 / static_cast<double>(idx.size()));
}

}  // namespace

GradientDecomposition decompose_gradient(const Model& model, const Dataset& ds, const Vector& theta,
                                         std::vector<std::size_t> batch_indices, double eta) {
  check_model_data(model, ds);
  if (batch_indices.empty()) throw Error(ErrorCode::InvalidArgument, "empty batch");
  for (auto i : batch_indices)
    if (i >= ds.n()) throw Error(ErrorCode::IndexOutOfRange, "batch index " + std::to_string(i));
  if (!ds.has_noise_values) throw Error(ErrorCode::MissingNoiseValues, "dataset lacks noise values");
  auto local = model.clone();
  local->set_params(theta);
  std::sort(batch_indices.begin(), batch_indices.end());

  std::vector<std::size_t> all(ds.n());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  const double b = static_cast<double>(batch_indices.size());
  const double se = std::sqrt(eta);
  GradientDecomposition out;
  out.full_clean_grad = mean_clean_grad(*local, ds, all);
  const Vector batch_clean = mean_clean_grad(*local, ds, batch_indices);
  out.xi_star = se * (batch_clean - out.full_clean_grad);

  Vector noise_acc = Vector::Zero(theta.size());
  Vector noisy_acc = Vector::Zero(theta.size());
  for (auto i : batch_indices) {
    const auto r = static_cast<Eigen::Index>(i);
    const double* x = ds.features.row(r).data();
    local->accumulate_vjp(x, ds.noise_values.row(r).data(), 1.0, noise_acc.data());
    local->residual_gradient(x, ds.noisy_labels.row(r).data(), 1.0, noisy_acc.data());
  }
  out.xi_uln = (-se / b) * noise_acc;
  out.batch_grad = noisy_acc / b;
  out.batch_indices = std::move(batch_indices);
  return out;
}

NoiseMoments noise_moment_estimates(const Model& model, const Dataset& ds, const Vector& theta,
                                    const SgdConfig& cfg, std::size_t n_draws, bool fresh_noise) {
  check_model_data(model, ds);
  if (n_draws < 1000) throw Error(ErrorCode::InvalidArgument, "need at least 1000 draws");
  validate(cfg, ds.n());
  auto local = model.clone();
  local->set_params(theta);
  const auto n = static_cast<Eigen::Index>(ds.n());
  const auto m = static_cast<Eigen::Index>(ds.m());
  const auto p = static_cast<Eigen::Index>(local->param_count());

  // Per-sample clean gradients centered at their mean, and output Jacobians.
  RowMatrix g = RowMatrix::Zero(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    local->residual_gradient(ds.features.row(i).data(), ds.clean_labels.row(i).data(), 1.0,
                             g.row(i).data());
  const Vector gbar = g.colwise().mean().transpose();
  g.rowwise() -= gbar.transpose();
  const GradientSample jac = per_sample_gradients(*local, ds.features);

  const double b = static_cast<double>(cfg.batch_size);
  const double coef = std::sqrt(cfg.learning_rate) / b;
  const double sd = std::sqrt(ds.sigma2);
  Rng rng(cfg.seed.substream(0));
  Rng noise_rng(cfg.seed.substream(1));
  BatchSampler sampler(ds.n(), cfg.batch_size, cfg.sampling);
  std::vector<std::size_t> batch;
  const auto& k = simd::kernels();

  Vector s1 = Vector::Zero(p), u1 = Vector::Zero(p);
  Matrix s2 = Matrix::Zero(p, p), u2 = Matrix::Zero(p, p);
  Vector xs(p), xu(p);
  double nsq = 0.0, nsq2 = 0.0;
  for (std::size_t draw = 0; draw < n_draws; ++draw) {
    sampler.draw(rng, batch);
    xs.setZero();
    xu.setZero();
    for (auto j : batch) {
      const auto r = static_cast<Eigen::Index>(j);
      k.axpy(coef, g.row(r).data(), xs.data(), static_cast<std::size_t>(p));
      for (Eigen::Index l = 0; l < m; ++l) {
        const double eps = fresh_noise ? sd * noise_rng.normal() : ds.noise_values(r, l);
        k.axpy(-coef * eps, jac.per_sample_grads.row(r * m + l).data(), xu.data(),
               static_cast<std::size_t>(p));
      }
    }
    s1 += xs;
    u1 += xu;
    k.ger(1.0, xs.data(), static_cast<std::size_t>(p), xs.data(), static_cast<std::size_t>(p), s2.data());
    k.ger(1.0, xu.data(), static_cast<std::size_t>(p), xu.data(), static_cast<std::size_t>(p), u2.data());
    const double q = xu.squaredNorm();
    nsq += q;
    nsq2 += q * q;
  }
  const double nd = static_cast<double>(n_draws);
  NoiseMoments out;
  out.n_draws = n_draws;
  out.mean_xi_star = s1 / nd;
  out.mean_xi_uln = u1 / nd;
  out.cov_xi_star = symmetrize((s2 - nd * out.mean_xi_star * out.mean_xi_star.transpose()) / (nd - 1.0));
  out.cov_xi_uln = symmetrize((u2 - nd * out.mean_xi_uln * out.mean_xi_uln.transpose()) / (nd - 1.0));
  out.se_xi_star = (out.cov_xi_star.diagonal().cwiseMax(0.0) / nd).cwiseSqrt();
  out.se_xi_uln = (out.cov_xi_uln.diagonal().cwiseMax(0.0) / nd).cwiseSqrt();
  out.mean_sq_norm_xi_uln = nsq / nd;
  out.se_sq_norm_xi_uln =
      std::sqrt(std::max(0.0, nsq2 / nd - out.mean_sq_norm_xi_uln * out.mean_sq_norm_xi_uln) / nd);
  return out;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  if (traj.checkpoints.empty()) return;
  const auto p = traj.checkpoints.front().theta.size();
  const bool diag = traj.checkpoints.front().diag.has_value();
  os << 'k';
  for (Eigen::Index j = 0; j < p; ++j) os << ",theta_" << j;
  if (diag) os << ",loss_noisy,loss_clean,grad_norm";
  os << '\n' << std::setprecision(17);
  for (const auto& c : traj.checkpoints) {
    os << c.k;
    for (Eigen::Index j = 0; j < p; ++j) os << ',' << c.theta(j);
    if (diag && c.diag) os << ',' << c.diag->loss_noisy << ',' << c.diag->loss_clean << ',' << c.diag->grad_norm;
    os << '\n';
  }
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path);
  write_trajectory_csv(os, traj);
}

}  // namespace uln
