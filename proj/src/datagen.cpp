#include "uln/datagen.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "uln/error.hpp"
#include "uln/numerics.hpp"

namespace uln {

void validate(const NoiseModel& noise) {
  if (const auto* g = std::get_if<GaussianAdditive>(&noise)) {
    if (!(g->sigma2 >= 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma2 must be >= 0");
  } else {
    const auto& s = std::get<SymmetricSwap>(noise);
    if (!(s.p >= 0.0 && s.p <= 1.0)) throw Error(ErrorCode::BadProbability, "swap p outside [0,1]");
    if (s.logit_dim < 2) throw Error(ErrorCode::InvalidArgument, "swap needs logit_dim >= 2");
  }
}

Matrix sample_second_moment(const RowMatrix& features) {
  const double n = static_cast<double>(features.rows());
  return symmetrize(Matrix(features.transpose() * features) / n);
}

RowMatrix sample_gaussian_features(std::size_t n, const Matrix& cov, RngSeed seed) {
  const CholeskyFactor f = cholesky_psd(cov);
  const auto d = cov.rows();
  Rng rng(seed);
  RowMatrix x(static_cast<Eigen::Index>(n), d);
  Vector z(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) z(j) = rng.normal();
    x.row(static_cast<Eigen::Index>(i)) = (f.l * z).transpose();
  }
  return x;
}

void corrupt_row(const NoiseModel& noise, const double* clean, double* out, std::size_t m,
                 Rng& rng) {
  if (const auto* g = std::get_if<GaussianAdditive>(&noise)) {
    const double sd = std::sqrt(g->sigma2);
    for (std::size_t l = 0; l < m; ++l) out[l] = g->sigma2 > 0.0 ? clean[l] + sd * rng.normal() : clean[l];
    return;
  }
  const double p = std::get<SymmetricSwap>(noise).p;
  for (std::size_t l = 0; l < m; ++l) {
    out[l] = clean[l];
    if (m >= 2 && rng.uniform() < p) {
      std::size_t other = rng.index(m - 1);
      if (other >= l) ++other;
      out[l] = clean[other];
    }
  }
}

Dataset make_noisy_dataset(const RowMatrix& features, const RowMatrix& clean_labels,
                           const NoiseModel& noise, RngSeed seed) {
  validate(noise);
  if (features.rows() != clean_labels.rows())
    throw Error(ErrorCode::DimensionMismatch, "feature and label row counts differ");
  Dataset ds;
  ds.features = features;
  ds.clean_labels = clean_labels;
  ds.noisy_labels.resize(clean_labels.rows(), clean_labels.cols());
  const auto m = static_cast<std::size_t>(clean_labels.cols());
  if (const auto* s = std::get_if<SymmetricSwap>(&noise)) {
    if (m != s->logit_dim) throw Error(ErrorCode::DimensionMismatch, "label width != logit_dim");
  }
  Rng rng(seed);
  for (Eigen::Index i = 0; i < clean_labels.rows(); ++i)
    corrupt_row(noise, clean_labels.row(i).data(), ds.noisy_labels.row(i).data(), m, rng);
  ds.noise_values = ds.noisy_labels - ds.clean_labels;
  ds.noisy_labels = ds.clean_labels + ds.noise_values;
  if (const auto* g = std::get_if<GaussianAdditive>(&noise)) {
    ds.sigma2 = g->sigma2;
  } else {
    ds.sigma2 = swap_noise_variance(clean_labels, std::get<SymmetricSwap>(noise).p);
  }
  return ds;
}

Dataset make_ols_dataset(const RowMatrix& features, const Vector& beta_star, const NoiseModel& noise,
                         RngSeed seed) {
  if (!std::holds_alternative<GaussianAdditive>(noise))
    throw Error(ErrorCode::InvalidArgument, "OLS datasets take Gaussian additive noise");
  if (beta_star.size() != features.cols())
    throw Error(ErrorCode::DimensionMismatch, "beta_star length != feature columns");
  RowMatrix clean(features.rows(), 1);
  for (Eigen::Index i = 0; i < features.rows(); ++i) clean(i, 0) = features.row(i).dot(beta_star);
  Dataset ds = make_noisy_dataset(features, clean, noise, seed);
  ds.beta_star = beta_star;
  return ds;
}

Vector apply_symmetric_swap(const Vector& logits, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::BadProbability, "swap p outside [0,1]");
  if (logits.size() < 2) throw Error(ErrorCode::InvalidArgument, "swap needs at least 2 logits");
  Vector out(logits.size());
  corrupt_row(SymmetricSwap{p, static_cast<std::size_t>(logits.size())}, logits.data(), out.data(),
              static_cast<std::size_t>(logits.size()), rng);
  return out;
}

Vector apply_symmetric_swap(const Vector& logits, double p, RngSeed seed) {
  Rng rng(seed);
  return apply_symmetric_swap(logits, p, rng);
}

Vector expected_swap(const Vector& logits, double p) {
  const double k = static_cast<double>(logits.size());
  const double total = logits.sum();
  return ((1.0 - p) * logits.array() + p * (total - logits.array()) / (k - 1.0)).matrix();
}

double swap_noise_variance(const RowMatrix& labels, double p) {
  const auto m = labels.cols();
  if (m < 2 || labels.rows() == 0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < labels.rows(); ++i) {
    const double s1 = labels.row(i).sum();
    const double s2 = labels.row(i).squaredNorm();
    for (Eigen::Index l = 0; l < m; ++l) {
      const double y = labels(i, l);
      const double others1 = (s1 - y) / static_cast<double>(m - 1);
      const double others2 = (s2 - y * y) / static_cast<double>(m - 1);
      const double mean = (1.0 - p) * y + p * others1;
      const double second = (1.0 - p) * y * y + p * others2;
      acc += second - mean * mean;
    }
  }
  return acc / static_cast<double>(labels.size());
}

void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  const auto d = ds.d();
  const auto m = ds.m();
  auto col = [&](const char* base, std::size_t l) {
    return m == 1 ? std::string(base) : std::string(base) + "_" + std::to_string(l);
  };
  for (std::size_t j = 0; j < d; ++j) os << 'x' << j << ',';
  for (std::size_t l = 0; l < m; ++l) os << col("y_clean", l) << ',';
  for (std::size_t l = 0; l < m; ++l) os << col("eps", l) << ',';
  for (std::size_t l = 0; l < m; ++l) os << col("y_noisy", l) << (l + 1 < m ? "," : "\n");
  os << std::setprecision(17);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < d; ++j) os << ds.features(r, static_cast<Eigen::Index>(j)) << ',';
    for (std::size_t l = 0; l < m; ++l) os << ds.clean_labels(r, static_cast<Eigen::Index>(l)) << ',';
    for (std::size_t l = 0; l < m; ++l) os << ds.noise_values(r, static_cast<Eigen::Index>(l)) << ',';
    for (std::size_t l = 0; l < m; ++l)
      os << ds.noisy_labels(r, static_cast<Eigen::Index>(l)) << (l + 1 < m ? "," : "\n");
  }
}

void write_dataset_csv(const std::string& path, const Dataset& ds) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path);
  write_dataset_csv(os, ds);
}

}  // namespace uln
