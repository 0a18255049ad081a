#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "uln/datagen.hpp"
#include "uln/models.hpp"
#include "uln/parallel.hpp"
#include "uln/sgd.hpp"
#include "uln/types.hpp"

namespace uln {

/// (eta sigma2 / (b N)) sum_i sum_l |grad_theta f_l(x_i)|^2
double regularizer_strength(const Model& model, const RowMatrix& features, double eta, double sigma2,
                            std::size_t b);

struct DistillConfig {
  ToyNet teacher;
  RowMatrix features;
  NoiseModel noise = GaussianAdditive{0.0};
  SgdConfig sgd;  // iterations is ignored; epochs * ceil(N / b) steps are run
  std::size_t epochs = 200;
  bool resample_noise_each_iteration = true;
  RngSeed noise_seed{};
};

struct DistillEpoch {
  std::size_t epoch = 0;
  double grad_norm = 0.0;
  double loss_noisy = 0.0;
  double loss_clean = 0.0;
  double reg_strength = 0.0;
};

struct DistillReport {
  std::vector<DistillEpoch> epochs;  // epoch 0 is the teacher itself
  Vector final_params;
};

/// The distillation dataset: teacher outputs as clean labels plus one noise
/// realization drawn from cfg.noise_seed.
Dataset distillation_dataset(const DistillConfig& cfg);

/// Student starts at the teacher and runs SGD on noisy teacher outputs.
/// Without resampling this is run_sgd on distillation_dataset(cfg).
DistillReport run_distillation(const DistillConfig& cfg);

struct TeacherSetup {
  std::vector<std::size_t> layer_dims{2, 16, 16, 4};
  double output_scale = 1.0;
  std::size_t n_inputs = 512;
  double lr = 0.2;
  std::size_t batch = 16;
  double target_loss = 1e-4;  // half mean squared error
  std::size_t max_epochs = 3000;
  RngSeed seed{};
};

struct TeacherResult {
  ToyNet teacher;
  RowMatrix features;
  double final_loss = 0.0;
  std::size_t epochs = 0;
};

/// Fits a teacher to a random generator network of the same architecture.
TeacherResult train_teacher(const TeacherSetup& setup);

struct DistillGridSetup {
  std::vector<double> sigma2_grid{0.0, 0.01, 0.05, 0.1};
  std::vector<double> swap_grid{0.0, 0.1, 0.2};
  std::size_t seeds = 3;
  std::size_t epochs = 200;
  double lr = 0.05;
  std::size_t batch = 16;
  bool resample = true;
  RngSeed seed{};
};

struct DistillGridResult {
  double teacher_grad_norm = 0.0;
  std::vector<std::vector<double>> gaussian_final;  // [seed][grid point]
  std::vector<std::vector<double>> swap_final;
  std::vector<std::vector<DistillReport>> gaussian_reports;
  std::vector<std::vector<DistillReport>> swap_reports;
  std::size_t gaussian_ordered = 0;  // nonincreasing links teacher -> grid, per seed
  std::size_t gaussian_links = 0;
  std::size_t swap_ordered = 0;      // nonincreasing links along the p grid
  std::size_t swap_links = 0;
  bool all_noisy_below_teacher = false;  // every sigma2 > 0 run ends below the teacher
};

DistillGridResult run_distill_grid(const TeacherResult& teacher, const DistillGridSetup& setup,
                                   const ParallelFor& pfor = sequential_for);

void write_distill_csv(std::ostream& os, const DistillReport& r);

}  // namespace uln
