#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "uln/sgd.hpp"
#include "uln/types.hpp"

namespace uln::cli {

enum class Kind { Simulate, DsmCompare, Stationary, ApproxOrder, Bounds, Distill };

Kind parse_kind(const std::string& name);
std::string kind_name(Kind k);

/// Every key with its resolved string value, grouped by section.
using ResolvedConfig = std::map<std::string, std::map<std::string, std::string>>;

struct DatasetSection {
  std::size_t n = 100;
  std::size_t d = 2;
  Matrix cov;
  Vector beta_star;
  double sigma2 = 0.5;
};

struct SgdSection {
  double eta = 0.01;
  std::size_t batch = 5;
  std::size_t iterations = 1'000'000;
  Sampling sampling = Sampling::WithReplacement;
  std::size_t record_every = 10;
};

struct SeedsSection {
  std::uint64_t base_seed = 20240611;
  std::size_t replicas = 1;
};

struct ExperimentConfig {
  Kind kind = Kind::Simulate;
  DatasetSection dataset;
  SgdSection sgd;
  SeedsSection seeds;
  ResolvedConfig resolved;

  // simulate, stationary, dsm-compare
  double burn_in = 0.5;
  std::vector<double> sigma2_grid;
  bool write_dataset = true;
  std::vector<double> ou_times;
  std::size_t n_batches = 100;

  // approx-order
  std::vector<double> eta_list;
  double horizon = 1.0;
  std::size_t order_replicas = 200;
  double sde_eta = 0.01;
  bool tied = false;
  std::size_t ref_divisor = 16;

  // bounds
  std::size_t trials = 500;
  double delta_conf = 0.05;
  std::size_t train_n = 200;
  std::size_t hidden = 8;
  double noise_std = 0.3;
  double m2 = 2.0;
  double teacher_gain = 3.0;
  double tol = 0.1125;
  double train_lr = 0.2;
  std::size_t train_budget = 20000;
  std::size_t restarts = 3;
  std::size_t holdout_factor = 10;

  // distill
  std::vector<double> swap_grid;
  std::size_t distill_seeds = 3;
  std::size_t epochs = 200;
  double student_lr = 0.05;
  std::size_t student_batch = 16;
  bool resample = true;
  std::vector<std::size_t> teacher_dims;
  std::size_t teacher_inputs = 512;
  double teacher_lr = 0.2;
  std::size_t teacher_batch = 16;
  double teacher_loss = 1e-4;
  std::size_t teacher_max_epochs = 3000;
};

/// Parses INI text. Keys absent from the document take their defaults; any
/// key or section not known for the experiment kind is a ConfigError. When
/// the document names a kind it must agree with `kind`.
ExperimentConfig parse_config_text(const std::string& text, Kind kind);
ExperimentConfig parse_config_file(const std::string& path, Kind kind);

/// Default values, section by section, for the given kind.
ResolvedConfig default_config(Kind kind);

/// Renders a resolved config back to INI text.
std::string to_ini(const ResolvedConfig& cfg);

}  // namespace uln::cli
