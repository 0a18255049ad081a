#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "uln/datagen.hpp"
#include "uln/models.hpp"
#include "uln/numerics.hpp"
#include "uln/parallel.hpp"
#include "uln/sgd.hpp"
#include "uln/types.hpp"

namespace uln {

struct CovariancePair {
  Matrix sigma_sgd;                 // covariance of clean per-sample loss gradients
  Matrix sigma_uln;                 // (sigma2/N) sum_i sum_l grad f_l(x_i) grad f_l(x_i)^T
  std::optional<Matrix> sigma_bar;  // (1/N) X^T X, linear models only
  Vector at_params;
};

CovariancePair covariance_pair(const Model& model, const Dataset& ds, const Vector& theta);

/// Sampling covariance only; cheaper when the label-noise term is cached.
Matrix sigma_sgd_at(const Model& model, const Dataset& ds, const Vector& theta);

/// (1/N) sum_i grad L*_i(theta)
Vector full_clean_gradient(const Model& model, const Dataset& ds, const Vector& theta);

enum class DsmMode { TwoDiffusion, CleanOneDiffusion };

struct DsmConfig {
  SgdConfig sgd;  // learning_rate, batch_size, iterations, record_every, seed
  DsmMode mode = DsmMode::TwoDiffusion;
  // Streams for z_k and z'_k; must differ.
  RngSeed z_seed{0, 2};
  RngSeed z_prime_seed{0, 3};

  static DsmConfig from_sgd(const SgdConfig& sgd, DsmMode mode = DsmMode::TwoDiffusion);
};

/// theta - eta * grad + sqrt(eta) * sqrt(eta/b) * (l_sgd z + l_uln z')
/// An empty l_uln drops the second diffusion term.
Vector dsm_step(const Vector& theta, const Vector& clean_grad, const Matrix& l_sgd,
                const Matrix& l_uln, double eta, std::size_t b, const Vector& z,
                const Vector& z_prime);

Trajectory run_dsm(const Model& init, const Dataset& ds, const DsmConfig& cfg);

struct SdePath {
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<Vector> increments_sgd;  // optional, per step
  std::vector<Vector> increments_uln;
};

struct StrongOrderOptions {
  double horizon = 1.0;
  std::size_t n_replicas = 200;
  std::size_t batch_size = 5;
  // Diffusion amplitude sqrt(sde_eta / b) is held fixed across step sizes so
  // every discretization targets the same SDE. tied = true uses the step size
  // itself instead.
  double sde_eta = 0.01;
  bool tied = false;
  std::size_t ref_divisor = 16;
  RngSeed seed{};
};

struct StrongOrderResult {
  std::vector<double> eta;
  std::vector<double> mse;
  std::vector<double> stderr_mse;
  double eta_ref = 0.0;
  double slope = 0.0;
  std::vector<double> halving_ratios;  // mse[i] / mse[i+1]
};

/// Pathwise error between the two-diffusion iteration at each coarse step and a
/// fine reference driven by the same Brownian increments, on the linear model.
StrongOrderResult strong_approx_order(const Dataset& ds, const Vector& beta_star,
                                      const std::vector<double>& eta_list,
                                      const StrongOrderOptions& opts,
                                      const ParallelFor& pfor = sequential_for);

/// Coupled mean-squared error for a single coarse step size against a given
/// reference step (which must divide it).
double coupled_mse(const Dataset& ds, const Vector& beta_star, double eta_coarse, double eta_ref,
                   const StrongOrderOptions& opts, double* stderr_out = nullptr);

void write_order_csv(std::ostream& os, const StrongOrderResult& r);

}  // namespace uln
