#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <variant>

#include "uln/rng.hpp"
#include "uln/types.hpp"

namespace uln {

struct GaussianAdditive {
  double sigma2 = 0.0;
};

struct SymmetricSwap {
  double p = 0.0;
  std::size_t logit_dim = 2;
};

using NoiseModel = std::variant<GaussianAdditive, SymmetricSwap>;

void validate(const NoiseModel& noise);

/// Labels are stored as n x m tables; m = 1 for scalar regression.
struct Dataset {
  RowMatrix features;      // n x d
  Vector beta_star;        // ground truth for linear tasks, empty otherwise
  RowMatrix clean_labels;  // n x m
  RowMatrix noise_values;  // n x m
  RowMatrix noisy_labels;  // n x m, clean + noise
  double sigma2 = 0.0;
  bool has_noise_values = true;

  std::size_t n() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(features.cols()); }
  std::size_t m() const { return static_cast<std::size_t>(clean_labels.cols()); }
};

/// Sample covariance (1/N) X^T X of zero-mean features.
Matrix sample_second_moment(const RowMatrix& features);

RowMatrix sample_gaussian_features(std::size_t n, const Matrix& cov, RngSeed seed);

/// Linear labels x^T beta plus i.i.d. N(0, sigma2) noise.
Dataset make_ols_dataset(const RowMatrix& features, const Vector& beta_star,
                         const NoiseModel& noise, RngSeed seed);

/// Attaches noise to arbitrary clean targets. Gaussian noise is drawn
/// independently per entry; swap noise corrupts each row as a logit vector.
Dataset make_noisy_dataset(const RowMatrix& features, const RowMatrix& clean_labels,
                           const NoiseModel& noise, RngSeed seed);

/// Draws noise values for a single row of targets in place.
void corrupt_row(const NoiseModel& noise, const double* clean, double* out, std::size_t m,
                 Rng& rng);

Vector apply_symmetric_swap(const Vector& logits, double p, Rng& rng);
Vector apply_symmetric_swap(const Vector& logits, double p, RngSeed seed);

/// Expected value of a swapped logit vector.
Vector expected_swap(const Vector& logits, double p);

/// Mean per-entry variance of swap noise over a label table.
double swap_noise_variance(const RowMatrix& labels, double p);

void write_dataset_csv(std::ostream& os, const Dataset& ds);
void write_dataset_csv(const std::string& path, const Dataset& ds);

}  // namespace uln
