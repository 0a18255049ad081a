#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "uln/datagen.hpp"
#include "uln/sgd.hpp"
#include "uln/types.hpp"

namespace uln {

struct StationarySummary {
  Vector empirical_mean;
  Matrix empirical_cov;
  Matrix closed_form_cov;  // (eta sigma2 / b) * sigma_bar
  Matrix lyapunov_cov;       // solution of P = A P A^T + Q with A = I - eta sigma_bar
  Matrix sigma_bar;
  Vector mean_stderr;        // batch-means standard error of empirical_mean
  double burn_in_fraction = 0.5;
  std::size_t n_samples = 0;
  double formula_to_lyapunov_ratio = 0.0;  // trace ratio
  double lyapunov_rel_error = 0.0;         // |emp - lyap|_F / |lyap|_F
  double formula_rel_error = 0.0;
};

/// Closed-form stationary candidates for the noisy-label OLS recursion.
Matrix closed_form_cov(const Matrix& sigma_bar, double eta, double sigma2, std::size_t b);
Matrix lyapunov_stationary_cov(const Matrix& sigma_bar, double eta, double sigma2, std::size_t b);

StationarySummary stationary_summary(const Trajectory& traj, const Dataset& ds, const SgdConfig& cfg,
                                     double burn_in_fraction = 0.5, std::size_t n_batches = 100);

/// Combines per-replica summaries from independent runs: the grand mean with
/// its across-replica standard error, and the average within-run covariance.
struct EnsembleSummary {
  std::size_t replicas = 0;
  Vector grand_mean;
  Vector grand_mean_stderr;
  Matrix pooled_cov;
  Matrix closed_form_cov;
  Matrix lyapunov_cov;
  double formula_to_lyapunov_ratio = 0.0;
  double lyapunov_rel_error = 0.0;
};

EnsembleSummary pool_summaries(const std::vector<StationarySummary>& parts);

struct OuCovariance {
  double at_time = 0.0;
  Matrix cov;
};

/// Covariance of the OU difference process at time t.
OuCovariance ou_covariance_at(double t, const Matrix& sigma_bar, double eta, double sigma2,
                              std::size_t b);

struct AnisotropyReport {
  Vector eigenvalues;   // empirical, descending
  Matrix eigenvectors;  // columns, matching eigenvalues
  Vector sigma_bar_top;
  double angle_deg = 0.0;
  bool aligned = false;  // top empirical axis within 25 degrees of sigma_bar's
  double eigen_ratio = 0.0;
};

AnisotropyReport anisotropy_report(const StationarySummary& s);

void write_summary_report(std::ostream& os, const StationarySummary& s);
void write_summary_flat(std::ostream& os, const StationarySummary& s);

}  // namespace uln
