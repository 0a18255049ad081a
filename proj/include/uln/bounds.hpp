#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "uln/datagen.hpp"
#include "uln/models.hpp"
#include "uln/parallel.hpp"
#include "uln/rng.hpp"
#include "uln/types.hpp"

namespace uln {

struct BoundsInput {
  double tol = 0.0;         // tolerable training loss
  double m1 = 0.0;          // bound on noise standard deviation
  double m2 = 1.0;          // bound on |f|
  std::size_t n = 1;        // sample count
  double delta_conf = 0.05; // confidence parameter in (0, 1]
};

void validate(const BoundsInput& in);

/// Losses without the 1/2 factor: mean squared errors.
struct LossTriple {
  double noisy_loss = 0.0;    // (1/N) sum (f - y_noisy)^2
  double clean_loss = 0.0;    // (1/N) sum (f - y_clean)^2
  double cross_term = 0.0;    // (2/N) sum eps (f - f*)
  double noise_energy = 0.0;  // (1/N) sum eps^2
};

LossTriple loss_triple(const Model& model, const Dataset& ds, const Vector& theta);

double bernstein_rate(const BoundsInput& in);
double hoeffding_generalization(const BoundsInput& in);

struct CoverageSetup {
  std::size_t n = 200;           // training samples per trial
  std::size_t d = 2;
  std::size_t hidden = 8;
  double noise_std = 0.3;        // labels get N(0, noise_std^2) noise; m1 = noise_std
  double m2 = 2.0;               // output scale of teacher and student
  double teacher_gain = 3.0;     // multiplies the teacher's random initial weights
  double tol = 0.1125;           // training stops once the noisy loss is <= tol
  double train_lr = 0.2;
  std::size_t train_budget = 20000;
  std::size_t restarts = 3;      // fresh student initializations before giving up
  std::size_t holdout_factor = 10;
};

struct CoverageTrial {
  std::size_t trial = 0;
  LossTriple losses;
  double heldout_loss = 0.0;
  double heldout_stderr = 0.0;
  double bernstein = 0.0;
  double hoeffding = 0.0;
  bool bernstein_pass = false;
  bool hoeffding_pass = false;
  std::size_t train_steps = 0;
  std::size_t restarts_used = 0;
};

struct BinomialInterval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Wilson score interval at the given z.
BinomialInterval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.96);

struct CoverageReport {
  std::vector<CoverageTrial> trials;
  double bernstein_coverage = 0.0;
  double hoeffding_coverage = 0.0;
  BinomialInterval bernstein_ci;
  BinomialInterval hoeffding_ci;
  double target = 0.0;     // 1 - 2 delta_conf
  double threshold = 0.0;  // target minus two binomial standard errors
  bool bernstein_ok = false;
  bool hoeffding_ok = false;
};

/// One synthetic trial: a random bounded teacher f*, noisy labels, a student
/// trained by full-batch gradient descent until its noisy loss reaches tol.
CoverageTrial run_coverage_trial(const CoverageSetup& setup, double delta_conf, RngSeed seed,
                                 std::size_t index);

CoverageReport coverage_experiment(const CoverageSetup& setup, std::size_t n_trials,
                                   double delta_conf, RngSeed seed,
                                   const ParallelFor& pfor = sequential_for);

void write_coverage_csv(std::ostream& os, const CoverageReport& r);

}  // namespace uln
