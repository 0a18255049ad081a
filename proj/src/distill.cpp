#include "uln/distill.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "uln/error.hpp"

namespace uln {

double regularizer_strength(const Model& model, const RowMatrix& features, double eta, double sigma2,
                            std::size_t b) {
  return eta * sigma2 / static_cast<double>(b) * avg_gradient_norm(model, features);
}

namespace {

RowMatrix outputs_of(const Model& model, const RowMatrix& x) {
  RowMatrix y(x.rows(), static_cast<Eigen::Index>(model.output_dim()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) model.forward(x.row(i).data(), y.row(i).data());
  return y;
}

std::size_t steps_per_epoch(std::size_t n, std::size_t b) { return (n + b - 1) / b; }

}  // namespace

Dataset distillation_dataset(const DistillConfig& cfg) {
  return make_noisy_dataset(cfg.features, outputs_of(cfg.teacher, cfg.features), cfg.noise,
                            cfg.noise_seed);
}

DistillReport run_distillation(const DistillConfig& cfg) {
  if (static_cast<std::size_t>(cfg.features.cols()) != cfg.teacher.input_dim())
    throw Error(ErrorCode::DimensionMismatch, "features do not match teacher input");
  const Dataset ds = distillation_dataset(cfg);
  const std::size_t per_epoch = steps_per_epoch(ds.n(), cfg.sgd.batch_size);
  SgdConfig sgd = cfg.sgd;
  sgd.iterations = cfg.epochs * per_epoch;
  sgd.record_every = per_epoch;
  sgd.record_diagnostics = false;

  Trajectory traj;
  if (cfg.resample_noise_each_iteration) {
    const std::size_t m = ds.m();
    const NoiseModel noise = cfg.noise;
    const RowMatrix& clean = ds.clean_labels;
    TargetProvider provider = [&clean, noise, m](std::span<const std::size_t> batch, Rng& rng,
                                                 double* targets) {
      for (std::size_t s = 0; s < batch.size(); ++s)
        corrupt_row(noise, clean.row(static_cast<Eigen::Index>(batch[s])).data(), targets + s * m, m, rng);
    };
    traj = run_sgd(cfg.teacher, ds, sgd, LabelSource::Noisy, &provider);
  } else {
    traj = run_sgd(cfg.teacher, ds, sgd, LabelSource::Noisy);
  }

  DistillReport report;
  ToyNet student = cfg.teacher;
  for (const auto& c : traj.checkpoints) {
    student.set_params(c.theta);
    DistillEpoch e;
    e.epoch = c.k / per_epoch;
    e.grad_norm = avg_gradient_norm(student, ds.features);
    e.loss_noisy = half_mse(student, ds.features, ds.noisy_labels);
    e.loss_clean = half_mse(student, ds.features, ds.clean_labels);
    e.reg_strength = regularizer_strength(student, ds.features, sgd.learning_rate, ds.sigma2, sgd.batch_size);
    report.epochs.push_back(e);
  }
  report.final_params = traj.checkpoints.back().theta;
  return report;
}

TeacherResult train_teacher(const TeacherSetup& setup) {
  const auto d = static_cast<Eigen::Index>(setup.layer_dims.front());
  TeacherResult out{ToyNet(setup.layer_dims, setup.output_scale), RowMatrix(), 0.0, 0};
  out.features = sample_gaussian_features(setup.n_inputs, Matrix::Identity(d, d), setup.seed.substream(0));
  ToyNet generator(setup.layer_dims, setup.output_scale);
  generator.init_random(setup.seed.substream(1));
  const Dataset ds =
      make_noisy_dataset(out.features, outputs_of(generator, out.features), GaussianAdditive{0.0}, RngSeed{});
  out.teacher.init_random(setup.seed.substream(2));

  const std::size_t per_epoch = steps_per_epoch(setup.n_inputs, setup.batch);
  constexpr std::size_t chunk = 5;
  SgdConfig sgd;
  sgd.learning_rate = setup.lr;
  sgd.batch_size = setup.batch;
  sgd.iterations = chunk * per_epoch;
  sgd.record_every = sgd.iterations;
  sgd.record_diagnostics = false;
  sgd.sampling = Sampling::WithoutReplacementPerBatch;
  out.final_loss = half_mse(out.teacher, ds.features, ds.clean_labels);
  while (out.final_loss > setup.target_loss) {
    if (out.epochs >= setup.max_epochs)
      throw Error(ErrorCode::ToleranceNotMet, "teacher loss " + std::to_string(out.final_loss));
    sgd.seed = setup.seed.substream(100 + out.epochs);
    const Trajectory t = run_sgd(out.teacher, ds, sgd, LabelSource::Clean);
    out.teacher.set_params(t.checkpoints.back().theta);
    out.epochs += chunk;
    out.final_loss = half_mse(out.teacher, ds.features, ds.clean_labels);
  }
  return out;
}

namespace {

void count_chain(const std::vector<double>& chain, std::size_t& ordered, std::size_t& links) {
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    ++links;
    if (chain[i + 1] <= chain[i]) ++ordered;
  }
}

}  // namespace

DistillGridResult run_distill_grid(const TeacherResult& teacher, const DistillGridSetup& setup,
                                   const ParallelFor& pfor) {
  DistillGridResult r;
  r.teacher_grad_norm = avg_gradient_norm(teacher.teacher, teacher.features);
  const std::size_t ng = setup.sigma2_grid.size();
  const std::size_t ns = setup.swap_grid.size();
  const std::size_t logits = teacher.teacher.output_dim();
  r.gaussian_reports.assign(setup.seeds, std::vector<DistillReport>(ng));
  r.swap_reports.assign(setup.seeds, std::vector<DistillReport>(ns));

  const std::size_t per_seed = ng + ns;
  pfor(setup.seeds * per_seed, [&](std::size_t job) {
    const std::size_t s = job / per_seed;
    const std::size_t g = job % per_seed;
    DistillConfig cfg{teacher.teacher, teacher.features, GaussianAdditive{0.0}, SgdConfig{}, setup.epochs,
                     setup.resample, RngSeed{}};
    cfg.sgd.learning_rate = setup.lr;
    cfg.sgd.batch_size = setup.batch;
    cfg.sgd.sampling = Sampling::WithoutReplacementPerBatch;
    // Shared streams across grid points for a given seed.
    cfg.sgd.seed = setup.seed.substream(10 + s);
    cfg.noise_seed = setup.seed.substream(1000 + s);
    if (g < ng) {
      cfg.noise = GaussianAdditive{setup.sigma2_grid[g]};
      r.gaussian_reports[s][g] = run_distillation(cfg);
    } else {
      cfg.noise = SymmetricSwap{setup.swap_grid[g - ng], logits};
      r.swap_reports[s][g - ng] = run_distillation(cfg);
    }
  });

  r.all_noisy_below_teacher = true;
  for (std::size_t s = 0; s < setup.seeds; ++s) {
    std::vector<double> gchain{r.teacher_grad_norm}, schain;
    std::vector<double> gf, sf;
    for (std::size_t g = 0; g < ng; ++g) {
      const double v = r.gaussian_reports[s][g].epochs.back().grad_norm;
      gf.push_back(v);
      gchain.push_back(v);
      if (setup.sigma2_grid[g] > 0.0 && !(v < r.teacher_grad_norm)) r.all_noisy_below_teacher = false;
    }
    for (std::size_t g = 0; g < ns; ++g) {
      const double v = r.swap_reports[s][g].epochs.back().grad_norm;
      sf.push_back(v);
      schain.push_back(v);
    }
    count_chain(gchain, r.gaussian_ordered, r.gaussian_links);
    count_chain(schain, r.swap_ordered, r.swap_links);
    r.gaussian_final.push_back(gf);
    r.swap_final.push_back(sf);
  }
  return r;
}

void write_distill_csv(std::ostream& os, const DistillReport& r) {
  os << "epoch,grad_norm,loss_noisy,loss_clean,reg_strength\n" << std::setprecision(12);
  for (const auto& e : r.epochs)
    os << e.epoch << ',' << e.grad_norm << ',' << e.loss_noisy << ',' << e.loss_clean << ','
       << e.reg_strength << '\n';
}

}  // namespace uln
