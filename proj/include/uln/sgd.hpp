#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uln/datagen.hpp"
#include "uln/models.hpp"
#include "uln/rng.hpp"
#include "uln/types.hpp"

namespace uln {

enum class Sampling { WithReplacement, WithoutReplacementPerBatch };
enum class LabelSource { Noisy, Clean };

inline constexpr double kDivergenceThreshold = 1e12;

struct SgdConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 5;
  std::size_t iterations = 1'000'000;
  Sampling sampling = Sampling::WithReplacement;
  RngSeed seed{};
  std::size_t record_every = 1;
  bool record_diagnostics = true;
};

/// Throws InvalidArgument on a malformed config for a dataset of size n.
void validate(const SgdConfig& cfg, std::size_t n);

/// eta * lambda_max of the sample second moment; the mean recursion of a
/// linear model is stable iff this is < 2.
double step_stability_margin(const Dataset& ds, double eta);

struct Diagnostics {
  double loss_noisy = 0.0;
  double loss_clean = 0.0;
  double grad_norm = 0.0;
};

struct Checkpoint {
  std::size_t k = 0;
  Vector theta;
  std::optional<Diagnostics> diag;
};

struct Trajectory {
  std::vector<Checkpoint> checkpoints;
  SgdConfig config;
  std::vector<std::string> warnings;
};

class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t b, Sampling mode);
  void draw(Rng& rng, std::vector<std::size_t>& out);

 private:
  std::size_t n_;
  std::size_t b_;
  Sampling mode_;
  std::vector<std::size_t> perm_;
};

/// Supplies b x m row-major training targets for a sampled batch. Used to
/// redraw label noise on every iteration.
using TargetProvider =
    std::function<void(std::span<const std::size_t> batch, Rng& rng, double* targets)>;

/// Plain constant-step mini-batch SGD on the half squared loss. The sampler
/// uses substream 0 of cfg.seed and a target provider gets substream 1.
Trajectory run_sgd(const Model& init, const Dataset& ds, const SgdConfig& cfg,
                   LabelSource labels = LabelSource::Noisy,
                   const TargetProvider* provider = nullptr);

Diagnostics compute_diagnostics(const Model& model, const Dataset& ds);

struct GradientDecomposition {
  Vector full_clean_grad;  // (1/N) sum_i grad L*_i
  Vector xi_star;          // (sqrt(eta)/b) sum_B (grad L*_j - full_clean_grad)
  Vector xi_uln;           // -(sqrt(eta)/b) sum_B eps_j grad f_j
  Vector batch_grad;       // (1/b) sum_B grad of the noisy loss
  std::vector<std::size_t> batch_indices;
};

/// Splits the mini-batch noisy gradient so that
/// eta * batch_grad == eta * full_clean_grad + sqrt(eta) * (xi_star + xi_uln).
GradientDecomposition decompose_gradient(const Model& model, const Dataset& ds, const Vector& theta,
                                         std::vector<std::size_t> batch_indices, double eta);

struct NoiseMoments {
  Vector mean_xi_star;
  Vector mean_xi_uln;
  Matrix cov_xi_star;
  Matrix cov_xi_uln;
  Vector se_xi_star;  // componentwise std / sqrt(n_draws)
  Vector se_xi_uln;
  double mean_sq_norm_xi_uln = 0.0;
  double se_sq_norm_xi_uln = 0.0;
  std::size_t n_draws = 0;
};

/// Monte-Carlo moments of xi* and xi^ULN over independent batch draws. With
/// fresh_noise the label noise is redrawn N(0, sigma2) for every batch slot;
/// otherwise the dataset's fixed noise values are used.
NoiseMoments noise_moment_estimates(const Model& model, const Dataset& ds, const Vector& theta,
                                    const SgdConfig& cfg, std::size_t n_draws, bool fresh_noise);

void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
void write_trajectory_csv(const std::string& path, const Trajectory& traj);

}  // namespace uln
