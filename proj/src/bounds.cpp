#include "uln/bounds.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "uln/error.hpp"

namespace uln {

void validate(const BoundsInput& in) {
  if (!(in.delta_conf > 0.0 && in.delta_conf <= 1.0))
    throw Error(ErrorCode::BadConfidence, "delta_conf must lie in (0, 1]");
  if (!(in.tol >= 0.0) || !(in.m1 >= 0.0) || !(in.m2 > 0.0) || in.n == 0)
    throw Error(ErrorCode::InvalidArgument, "bounds input needs tol, m1 >= 0, m2 > 0, n >= 1");
}

namespace {

double rate(const BoundsInput& in) {
  return std::sqrt(std::log(1.0 / in.delta_conf) / static_cast<double>(in.n));
}

}  // namespace

double bernstein_rate(const BoundsInput& in) {
  validate(in);
  return in.tol + 8.0 * in.m1 * in.m2 * rate(in);
}

double hoeffding_generalization(const BoundsInput& in) {
  validate(in);
  return in.tol + (8.0 * in.m1 * in.m2 + 2.0 * std::sqrt(2.0) * in.m2 * in.m2) * rate(in);
}

LossTriple loss_triple(const Model& model, const Dataset& ds, const Vector& theta) {
  if (!ds.has_noise_values || ds.noise_values.size() != ds.clean_labels.size())
    throw Error(ErrorCode::MissingNoiseValues, "dataset lacks noise values");
  if (model.input_dim() != ds.d() || model.output_dim() != ds.m())
    throw Error(ErrorCode::DimensionMismatch, "model and dataset shapes differ");
  auto local = model.clone();
  local->set_params(theta);
  const std::size_t m = ds.m();
  std::vector<double> f(m);
  double noisy = 0.0, clean = 0.0, cross = 0.0, energy = 0.0;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(ds.n()); ++i) {
    local->forward(ds.features.row(i).data(), f.data());
    for (std::size_t l = 0; l < m; ++l) {
      const auto c = static_cast<Eigen::Index>(l);
      const double fc = f[l] - ds.clean_labels(i, c);
      const double fn = f[l] - ds.noisy_labels(i, c);
      const double e = ds.noise_values(i, c);
      noisy += fn * fn;
      clean += fc * fc;
      cross += e * fc;
      energy += e * e;
    }
  }
  const double n = static_cast<double>(ds.n());
  return LossTriple{noisy / n, clean / n, 2.0 * cross / n, energy / n};
}

BinomialInterval wilson_interval(std::size_t successes, std::size_t trials, double z) {
  if (trials == 0) return {};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / (1.0 + z2 / n);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

CoverageTrial run_coverage_trial(const CoverageSetup& setup, double delta_conf, RngSeed seed,
                                 std::size_t index) {
  const RngSeed base = seed.substream(index);
  const std::vector<std::size_t> dims{setup.d, setup.hidden, 1};
  ToyNet teacher(dims, setup.m2);
  teacher.init_random(base.substream(0));
  teacher.mutable_params() *= setup.teacher_gain;

  const Matrix eye = Matrix::Identity(static_cast<Eigen::Index>(setup.d), static_cast<Eigen::Index>(setup.d));
  auto label = [&](const RowMatrix& x) {
    RowMatrix y(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) teacher.forward(x.row(i).data(), &y(i, 0));
    return y;
  };
  const RowMatrix x = sample_gaussian_features(setup.n, eye, base.substream(1));
  const double sigma2 = setup.noise_std * setup.noise_std;
  const Dataset ds = make_noisy_dataset(x, label(x), GaussianAdditive{sigma2}, base.substream(2));

  ToyNet student(dims, setup.m2);
  Vector grad(static_cast<Eigen::Index>(student.param_count()));
  const double inv_n = 1.0 / static_cast<double>(setup.n);
  CoverageTrial t;
  t.trial = index;
  double last_loss = 0.0;
  bool reached = false;
  for (std::size_t attempt = 0; attempt <= setup.restarts && !reached; ++attempt) {
    student.init_random(base.substream(3 + 10 * attempt));
    t.restarts_used = attempt;
    for (std::size_t step = 0; step <= setup.train_budget; ++step) {
      grad.setZero();
      double half_sum = 0.0;
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        half_sum += student.residual_gradient(x.row(i).data(), &ds.noisy_labels(i, 0), inv_n, grad.data());
      last_loss = 2.0 * half_sum * inv_n;
      if (last_loss <= setup.tol) {
        t.train_steps = step;
        reached = true;
        break;
      }
      student.mutable_params() -= setup.train_lr * grad;
    }
  }
  if (!reached)
    throw Error(ErrorCode::ToleranceNotMet,
                "trial " + std::to_string(index) + " noisy loss " + std::to_string(last_loss));
  t.losses = loss_triple(student, ds, student.params());

  const RowMatrix xh = sample_gaussian_features(setup.n * setup.holdout_factor, eye, base.substream(4));
  double s = 0.0, s2 = 0.0;
  for (Eigen::Index i = 0; i < xh.rows(); ++i) {
    double fs = 0.0, ft = 0.0;
    student.forward(xh.row(i).data(), &fs);
    teacher.forward(xh.row(i).data(), &ft);
    const double e = (fs - ft) * (fs - ft);
    s += e;
    s2 += e * e;
  }
  const double nh = static_cast<double>(xh.rows());
  t.heldout_loss = s / nh;
  t.heldout_stderr = std::sqrt(std::max(0.0, s2 / nh - t.heldout_loss * t.heldout_loss) / nh);

  const BoundsInput in{setup.tol, setup.noise_std, setup.m2, setup.n, delta_conf};
  t.bernstein = bernstein_rate(in);
  t.hoeffding = hoeffding_generalization(in);
  t.bernstein_pass = t.losses.clean_loss <= t.bernstein;
  t.hoeffding_pass = t.heldout_loss - 1.96 * t.heldout_stderr <= t.hoeffding;
  return t;
}

CoverageReport coverage_experiment(const CoverageSetup& setup, std::size_t n_trials,
                                   double delta_conf, RngSeed seed, const ParallelFor& pfor) {
  validate(BoundsInput{setup.tol, setup.noise_std, setup.m2, setup.n, delta_conf});
  if (n_trials == 0) throw Error(ErrorCode::InvalidArgument, "need at least one trial");
  CoverageReport r;
  r.trials.resize(n_trials);
  pfor(n_trials, [&](std::size_t i) { r.trials[i] = run_coverage_trial(setup, delta_conf, seed, i); });
  std::size_t nb = 0, nh = 0;
  for (const auto& t : r.trials) {
    nb += t.bernstein_pass;
    nh += t.hoeffding_pass;
  }
  const double n = static_cast<double>(n_trials);
  r.bernstein_coverage = static_cast<double>(nb) / n;
  r.hoeffding_coverage = static_cast<double>(nh) / n;
  r.bernstein_ci = wilson_interval(nb, n_trials);
  r.hoeffding_ci = wilson_interval(nh, n_trials);
  r.target = std::max(0.0, 1.0 - 2.0 * delta_conf);
  r.threshold = r.target - 2.0 * std::sqrt(r.target * (1.0 - r.target) / n);
  r.bernstein_ok = r.bernstein_coverage >= r.threshold;
  r.hoeffding_ok = r.hoeffding_coverage >= r.threshold;
  return r;
}

void write_coverage_csv(std::ostream& os, const CoverageReport& r) {
  os << "trial,clean_loss,bound,pass,heldout_loss,heldout_stderr,hoeffding_bound,hoeffding_pass\n";
  os << std::setprecision(12);
  for (const auto& t : r.trials)
    os << t.trial << ',' << t.losses.clean_loss << ',' << t.bernstein << ',' << (t.bernstein_pass ? 1 : 0)
       << ',' << t.heldout_loss << ',' << t.heldout_stderr << ',' << t.hoeffding << ','
       << (t.hoeffding_pass ? 1 : 0) << '\n';
  os << "# bernstein_coverage=" << r.bernstein_coverage << " ci=[" << r.bernstein_ci.lo << ','
     << r.bernstein_ci.hi << "] hoeffding_coverage=" << r.hoeffding_coverage << " ci=["
     << r.hoeffding_ci.lo << ',' << r.hoeffding_ci.hi << "] target=" << r.target
     << " threshold=" << r.threshold << '\n';
}

}  // namespace uln
