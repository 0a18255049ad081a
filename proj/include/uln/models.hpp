#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "uln/datagen.hpp"
#include "uln/rng.hpp"
#include "uln/types.hpp"

namespace uln {

/// A differentiable predictor f(x, theta) with output_dim() outputs.
/// Evaluation is const and thread-safe; parameters are owned per copy.
class Model {
 public:
  virtual ~Model() = default;
  virtual std::unique_ptr<Model> clone() const = 0;

  virtual std::size_t input_dim() const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual std::size_t param_count() const = 0;

  const Vector& params() const { return params_; }
  Vector& mutable_params() { return params_; }
  void set_params(const Vector& p);

  virtual void forward(const double* x, double* out) const = 0;

  /// grad += scale * sum_l r[l] * grad_theta f_l(x)
  virtual void accumulate_vjp(const double* x, const double* r, double scale, double* grad) const = 0;

  /// Computes outputs, residual = f(x) - target, and accumulates
  /// scale * sum_l residual[l] * grad_theta f_l(x). Returns 0.5 * |residual|^2.
  virtual double residual_gradient(const double* x, const double* target, double scale,
                                   double* grad) const;

  /// Row l of jac (output_dim x param_count, row-major) is grad_theta f_l(x).
  void jacobian(const double* x, double* jac) const;

  /// sum_l |grad_theta f_l(x)|^2
  virtual double grad_norm_sq(const double* x) const;

 protected:
  Vector params_;
};

class LinearModel final : public Model {
 public:
  explicit LinearModel(std::size_t d);
  explicit LinearModel(const Vector& beta);

  std::unique_ptr<Model> clone() const override { return std::make_unique<LinearModel>(*this); }
  std::size_t input_dim() const override { return static_cast<std::size_t>(params_.size()); }
  std::size_t output_dim() const override { return 1; }
  std::size_t param_count() const override { return static_cast<std::size_t>(params_.size()); }

  void forward(const double* x, double* out) const override;
  void accumulate_vjp(const double* x, const double* r, double scale, double* grad) const override;
  double residual_gradient(const double* x, const double* target, double scale,
                           double* grad) const override;
  double grad_norm_sq(const double* x) const override;
};

/// Fully connected tanh network; the last layer is also tanh and is
/// multiplied by output_scale, so every output satisfies |f| <= output_scale.
class ToyNet final : public Model {
 public:
  ToyNet(std::vector<std::size_t> layer_dims, double output_scale = 10.0);

  static std::size_t count_params(const std::vector<std::size_t>& layer_dims);

  std::unique_ptr<Model> clone() const override { return std::make_unique<ToyNet>(*this); }
  std::size_t input_dim() const override { return dims_.front(); }
  std::size_t output_dim() const override { return dims_.back(); }
  std::size_t param_count() const override { return static_cast<std::size_t>(params_.size()); }

  const std::vector<std::size_t>& layer_dims() const { return dims_; }
  double output_scale() const { return scale_; }
  double response_bound() const { return scale_; }

  /// Weights N(0, 1/fan_in), biases zero.
  void init_random(RngSeed seed);

  void forward(const double* x, double* out) const override;
  void accumulate_vjp(const double* x, const double* r, double scale, double* grad) const override;
  double residual_gradient(const double* x, const double* target, double scale,
                           double* grad) const override;

  void save(std::ostream& os) const;
  void save(const std::string& path) const;
  static ToyNet load(std::istream& is);
  static ToyNet load(const std::string& path);

 private:
  struct Workspace;
  Workspace& workspace() const;
  void run_forward(const double* x, Workspace& ws) const;
  void backward(Workspace& ws, double scale, double* grad) const;

  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;  // start of each layer's weights in params_
  double scale_;
};

/// Gradient table: row (i * m + l) is grad_theta f_l(x_i).
struct GradientSample {
  RowMatrix per_sample_grads;
  Vector at_params;
};

GradientSample per_sample_gradients(const Model& model, const RowMatrix& features);

/// (X^T X)^{-1} X^T y_noisy for a scalar-label dataset.
Vector closed_form_ols(const Dataset& ds);

/// (1/N) sum_i sum_l |grad_theta f_l(x_i)|^2
double avg_gradient_norm(const Model& model, const RowMatrix& features);
double avg_gradient_norm(const Model& model, const Dataset& ds);

/// 0.5 * mean_i |f(x_i) - y_i|^2
double half_mse(const Model& model, const RowMatrix& features, const RowMatrix& targets);

}  // namespace uln
