#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "uln/bounds.hpp"
#include "uln/datagen.hpp"
#include "uln/error.hpp"
#include "uln/models.hpp"

using namespace uln;

namespace {

Dataset ols_dataset(double sigma2, RngSeed seed) {
  const RowMatrix x = sample_gaussian_features(200, 4.0 * Matrix::Identity(2, 2), seed.substream(0));
  return make_ols_dataset(x, Vector::Ones(2), GaussianAdditive{sigma2}, seed.substream(1));
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("loss triple without noise") {
  const Dataset ds = ols_dataset(0.0, RngSeed{1, 0});
  Vector theta(2);
  theta << 0.3, 2.0;
  const LossTriple t = loss_triple(LinearModel(2), ds, theta);
  CHECK(t.clean_loss == doctest::Approx(t.noisy_loss).epsilon(1e-15));
  CHECK(t.cross_term == 0.0);
  CHECK(t.noise_energy == 0.0);
  CHECK(t.clean_loss > 0.0);
}

TEST_CASE("loss triple at a perfect fit") {
  const Dataset ds = ols_dataset(0.5, RngSeed{2, 0});
  const LossTriple t = loss_triple(LinearModel(2), ds, Vector::Ones(2));
  CHECK(t.clean_loss == 0.0);
  CHECK(t.cross_term == 0.0);
  CHECK(t.noisy_loss == doctest::Approx(t.noise_energy).epsilon(1e-14));
  CHECK(t.noise_energy == doctest::Approx(ds.noise_values.squaredNorm() / 200.0).epsilon(1e-14));
}

TEST_CASE("loss triple decomposition identity") {
  const Dataset ds = ols_dataset(0.8, RngSeed{3, 0});
  Rng rng(RngSeed{3, 1});
  for (int c = 0; c < 20; ++c) {
    Vector theta(2);
    theta << 1.0 + rng.normal(), 1.0 + rng.normal();
    const LossTriple t = loss_triple(LinearModel(2), ds, theta);
    const Vector pred = ds.features * theta;
    const double clean = (pred - ds.clean_labels.col(0)).squaredNorm() / 200.0;
    CHECK(t.clean_loss == doctest::Approx(clean).epsilon(1e-12));
    CHECK(std::abs(t.noisy_loss + t.cross_term - t.noise_energy - clean) <= 1e-10);
  }
}

TEST_CASE("loss triple requires noise values") {
  Dataset ds = ols_dataset(0.5, RngSeed{4, 0});
  ds.has_noise_values = false;
  CHECK(code_of([&] { loss_triple(LinearModel(2), ds, Vector::Ones(2)); }) == ErrorCode::MissingNoiseValues);
}

TEST_CASE("bernstein rate arithmetic") {
  CHECK(bernstein_rate({0.0, 1.0, 1.0, 10000, 0.01}) == doctest::Approx(0.171678).epsilon(1e-5));
  CHECK(bernstein_rate({0.0, 1.0, 1.0, 10000, 0.01}) ==
        doctest::Approx(8.0 * std::sqrt(std::log(100.0) / 10000.0)).epsilon(1e-14));
  CHECK(bernstein_rate({0.25, 3.0, 2.0, 17, 1.0}) == 0.25);
}

TEST_CASE("bernstein excess halves when n quadruples") {
  const BoundsInput a{0.1, 0.7, 1.3, 500, 0.05};
  BoundsInput b = a;
  b.n = 2000;
  CHECK((bernstein_rate(b) - b.tol) == doctest::Approx(0.5 * (bernstein_rate(a) - a.tol)).epsilon(1e-14));
}

TEST_CASE("hoeffding bound arithmetic") {
  CHECK(hoeffding_generalization({0.0, 1.0, 1.0, 10000, 0.01}) == doctest::Approx(0.232375).epsilon(1e-5));
  const BoundsInput noiseless{0.05, 0.0, 1.5, 400, 0.1};
  CHECK(hoeffding_generalization(noiseless) ==
        doctest::Approx(0.05 + 2.0 * std::sqrt(2.0) * 1.5 * 1.5 * std::sqrt(std::log(10.0) / 400.0)).epsilon(1e-14));
  CHECK(bernstein_rate(noiseless) == 0.05);
}

TEST_CASE("bounds are monotone in their inputs") {
  const BoundsInput base{0.1, 0.5, 1.0, 1000, 0.05};
  for (auto f : {bernstein_rate, hoeffding_generalization}) {
    BoundsInput more_n = base, more_m1 = base, more_m2 = base, more_delta = base, more_tol = base;
    more_n.n = 2000;
    more_m1.m1 = 0.6;
    more_m2.m2 = 1.2;
    more_delta.delta_conf = 0.1;
    more_tol.tol = 0.2;
    CHECK(f(more_n) < f(base));
    CHECK(f(more_m1) > f(base));
    CHECK(f(more_m2) > f(base));
    CHECK(f(more_delta) < f(base));
    CHECK(f(more_tol) > f(base));
    CHECK(hoeffding_generalization(base) >= bernstein_rate(base));
  }
}

TEST_CASE("bounds reject bad confidence and inputs") {
  for (double d : {0.0, -0.1, 1.5}) {
    const BoundsInput in{0.0, 1.0, 1.0, 10, d};
    CHECK(code_of([&] { bernstein_rate(in); }) == ErrorCode::BadConfidence);
    CHECK(code_of([&] { hoeffding_generalization(in); }) == ErrorCode::BadConfidence);
  }
  CHECK(code_of([&] { bernstein_rate({0.0, 1.0, 0.0, 10, 0.1}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { bernstein_rate({-1.0, 1.0, 1.0, 10, 0.1}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { bernstein_rate({0.0, 1.0, 1.0, 0, 0.1}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("wilson interval") {
  const BinomialInterval all = wilson_interval(500, 500);
  CHECK(all.hi == doctest::Approx(1.0));
  CHECK(all.lo == doctest::Approx(0.9923753815).epsilon(1e-9));
  const BinomialInterval none = wilson_interval(0, 10);
  CHECK(none.lo == doctest::Approx(0.0));
  const BinomialInterval half = wilson_interval(50, 100);
  CHECK(half.lo + half.hi == doctest::Approx(1.0));
  CHECK(half.lo < 0.5);
  CHECK(half.hi > 0.5);
  const BinomialInterval narrow = wilson_interval(500, 1000);
  CHECK(narrow.hi - narrow.lo < half.hi - half.lo);
}

TEST_CASE("noise-free coverage is complete") {
  CoverageSetup s;
  s.noise_std = 0.0;
  const CoverageReport r = coverage_experiment(s, 20, 0.05, RngSeed{5, 0});
  CHECK(r.bernstein_coverage == 1.0);
  for (const auto& t : r.trials) {
    CHECK(t.losses.clean_loss == doctest::Approx(t.losses.noisy_loss).epsilon(1e-14));
    CHECK(t.losses.noisy_loss <= s.tol);
    CHECK(t.bernstein == s.tol);
  }
}

TEST_CASE("coverage trials meet the training tolerance and are reproducible") {
  CoverageSetup s;
  const CoverageTrial a = run_coverage_trial(s, 0.05, RngSeed{6, 0}, 3);
  const CoverageTrial b = run_coverage_trial(s, 0.05, RngSeed{6, 0}, 3);
  CHECK(a.losses.noisy_loss <= s.tol);
  CHECK(a.train_steps > 0);
  CHECK(a.losses.clean_loss == b.losses.clean_loss);
  CHECK(a.heldout_loss == b.heldout_loss);
  CHECK(a.bernstein == doctest::Approx(bernstein_rate({s.tol, s.noise_std, s.m2, s.n, 0.05})));
  CHECK(a.hoeffding == doctest::Approx(hoeffding_generalization({s.tol, s.noise_std, s.m2, s.n, 0.05})));
}

TEST_CASE("unreachable tolerance is reported") {
  CoverageSetup s;
  s.tol = 0.0;
  s.train_budget = 5;
  s.restarts = 1;
  CHECK(code_of([&] { run_coverage_trial(s, 0.05, RngSeed{7, 0}, 0); }) == ErrorCode::ToleranceNotMet);
}

TEST_CASE("coverage target is vacuous at delta one half") {
  const CoverageReport r = coverage_experiment(CoverageSetup{}, 5, 0.5, RngSeed{8, 0});
  CHECK(r.target == 0.0);
  CHECK(r.bernstein_ok);
  CHECK(r.hoeffding_ok);
}

TEST_CASE("coverage csv schema") {
  const CoverageReport r = coverage_experiment(CoverageSetup{}, 4, 0.05, RngSeed{9, 0});
  std::ostringstream os;
  write_coverage_csv(os, r);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line.rfind("trial,clean_loss,bound,pass", 0) == 0);
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.rfind('#', 0) == 0) continue;
    std::stringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    CHECK(std::stoul(cell) == rows);
    std::getline(ls, cell, ',');
    CHECK(std::stod(cell) == doctest::Approx(r.trials[rows].losses.clean_loss).epsilon(1e-10));
    ++rows;
  }
  CHECK(rows == 4);
}
