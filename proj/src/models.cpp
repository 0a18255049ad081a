#include "uln/models.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "uln/error.hpp"
#include "uln/simd/kernels.hpp"

namespace uln {

void Model::set_params(const Vector& p) {
  if (static_cast<std::size_t>(p.size()) != param_count())
    throw Error(ErrorCode::DimensionMismatch, "parameter vector length");
  params_ = p;
}

double Model::residual_gradient(const double* x, const double* target, double scale,
                                double* grad) const {
  const std::size_t m = output_dim();
  std::vector<double> r(m);
  forward(x, r.data());
  double loss = 0.0;
  for (std::size_t l = 0; l < m; ++l) {
    r[l] -= target[l];
    loss += r[l] * r[l];
  }
  accumulate_vjp(x, r.data(), scale, grad);
  return 0.5 * loss;
}

void Model::jacobian(const double* x, double* jac) const {
  const std::size_t m = output_dim();
  const std::size_t p = param_count();
  std::vector<double> e(m, 0.0);
  for (std::size_t l = 0; l < m; ++l) {
    double* row = jac + l * p;
    for (std::size_t k = 0; k < p; ++k) row[k] = 0.0;
    e[l] = 1.0;
    accumulate_vjp(x, e.data(), 1.0, row);
    e[l] = 0.0;
  }
}

double Model::grad_norm_sq(const double* x) const {
  const std::size_t m = output_dim();
  const std::size_t p = param_count();
  thread_local std::vector<double> jac;
  jac.assign(m * p, 0.0);
  jacobian(x, jac.data());
  return simd::kernels().sum_squares(jac.data(), jac.size());
}

// ---------------------------------------------------------------------------

LinearModel::LinearModel(std::size_t d) {
  if (d == 0) throw Error(ErrorCode::InvalidArgument, "linear model needs d >= 1");
  params_ = Vector::Zero(static_cast<Eigen::Index>(d));
}

LinearModel::LinearModel(const Vector& beta) : LinearModel(static_cast<std::size_t>(beta.size())) {
  params_ = beta;
}

void LinearModel::forward(const double* x, double* out) const {
  out[0] = simd::kernels().dot(x, params_.data(), param_count());
}

void LinearModel::accumulate_vjp(const double* x, const double* r, double scale,
                                 double* grad) const {
  simd::kernels().axpy(scale * r[0], x, grad, param_count());
}

double LinearModel::residual_gradient(const double* x, const double* target, double scale,
                                      double* grad) const {
  const auto& k = simd::kernels();
  const double r = k.dot(x, params_.data(), param_count()) - target[0];
  k.axpy(scale * r, x, grad, param_count());
  return 0.5 * r * r;
}

double LinearModel::grad_norm_sq(const double* x) const {
  return simd::kernels().sum_squares(x, param_count());
}

// ---------------------------------------------------------------------------

struct ToyNet::Workspace {
  std::vector<std::vector<double>> act;  // act[0] = input, act[i] = tanh output of layer i
  std::vector<double> delta;
  std::vector<double> delta_prev;
};

ToyNet::ToyNet(std::vector<std::size_t> layer_dims, double output_scale)
    : dims_(std::move(layer_dims)), scale_(output_scale) {
  if (dims_.size() < 2) throw Error(ErrorCode::InvalidArgument, "ToyNet needs at least 2 layer widths");
  for (auto w : dims_)
    if (w == 0) throw Error(ErrorCode::InvalidArgument, "ToyNet layer width 0");
  if (!(scale_ > 0.0)) throw Error(ErrorCode::InvalidArgument, "ToyNet output scale must be > 0");
  std::size_t off = 0;
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
    offsets_.push_back(off);
    off += (dims_[i] + 1) * dims_[i + 1];
  }
  params_ = Vector::Zero(static_cast<Eigen::Index>(off));
}

std::size_t ToyNet::count_params(const std::vector<std::size_t>& layer_dims) {
  std::size_t total = 0;
  for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i)
    total += (layer_dims[i] + 1) * layer_dims[i + 1];
  return total;
}

void ToyNet::init_random(RngSeed seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
    const std::size_t in = dims_[i];
    const std::size_t out = dims_[i + 1];
    const double sd = 1.0 / std::sqrt(static_cast<double>(in));
    double* w = params_.data() + offsets_[i];
    for (std::size_t k = 0; k < in * out; ++k) w[k] = sd * rng.normal();
    for (std::size_t k = 0; k < out; ++k) w[in * out + k] = 0.0;
  }
}

ToyNet::Workspace& ToyNet::workspace() const {
  const auto& dims = dims_;
  thread_local Workspace ws;
  if (ws.act.size() != dims.size()) ws.act.resize(dims.size());
  std::size_t widest = 0;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    ws.act[i].resize(dims[i]);
    widest = std::max(widest, dims[i]);
  }
  ws.delta.resize(widest);
  ws.delta_prev.resize(widest);
  return ws;
}

void ToyNet::run_forward(const double* x, Workspace& ws) const {
  const auto& k = simd::kernels();
  std::copy(x, x + dims_[0], ws.act[0].begin());
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
    const std::size_t in = dims_[i];
    const std::size_t out = dims_[i + 1];
    const double* w = params_.data() + offsets_[i];
    const double* b = w + in * out;
    double* h = ws.act[i + 1].data();
    k.gemv(w, out, in, ws.act[i].data(), h);
    for (std::size_t j = 0; j < out; ++j) h[j] = std::tanh(h[j] + b[j]);
  }
}

void ToyNet::backward(Workspace& ws, double scale, double* grad) const {
  // On entry ws.delta holds dLoss/d(output) for the final layer.
  const auto& k = simd::kernels();
  const std::size_t layers = dims_.size() - 1;
  {
    const double* h = ws.act[layers].data();
    for (std::size_t j = 0; j < dims_[layers]; ++j)
      ws.delta[j] *= scale * scale_ * (1.0 - h[j] * h[j]);
  }
  for (std::size_t i = layers; i-- > 0;) {
    const std::size_t in = dims_[i];
    const std::size_t out = dims_[i + 1];
    const double* w = params_.data() + offsets_[i];
    double* gw = grad + offsets_[i];
    k.ger(1.0, ws.delta.data(), out, ws.act[i].data(), in, gw);
    k.axpy(1.0, ws.delta.data(), gw + in * out, out);
    if (i > 0) {
      k.gemv_t(w, out, in, ws.delta.data(), ws.delta_prev.data());
      const double* h = ws.act[i].data();
      for (std::size_t j = 0; j < in; ++j) ws.delta[j] = ws.delta_prev[j] * (1.0 - h[j] * h[j]);
    }
  }
}

void ToyNet::forward(const double* x, double* out) const {
  auto& ws = workspace();
  run_forward(x, ws);
  const auto& h = ws.act.back();
  for (std::size_t j = 0; j < h.size(); ++j) out[j] = scale_ * h[j];
}

void ToyNet::accumulate_vjp(const double* x, const double* r, double scale, double* grad) const {
  auto& ws = workspace();
  run_forward(x, ws);
  std::copy(r, r + dims_.back(), ws.delta.begin());
  backward(ws, scale, grad);
}

double ToyNet::residual_gradient(const double* x, const double* target, double scale,
                                 double* grad) const {
  auto& ws = workspace();
  run_forward(x, ws);
  double loss = 0.0;
  const auto& h = ws.act.back();
  for (std::size_t j = 0; j < h.size(); ++j) {
    const double r = scale_ * h[j] - target[j];
    ws.delta[j] = r;
    loss += r * r;
  }
  backward(ws, scale, grad);
  return 0.5 * loss;
}

void ToyNet::save(std::ostream& os) const {
  os << "layer_dims=";
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
  os << " output_scale=" << std::setprecision(17) << scale_ << '\n';
  for (Eigen::Index i = 0; i < params_.size(); ++i) os << params_(i) << '\n';
}

void ToyNet::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path);
  save(os);
}

ToyNet ToyNet::load(std::istream& is) {
  std::string header;
  if (!std::getline(is, header) || header.rfind("layer_dims=", 0) != 0)
    throw Error(ErrorCode::IoError, "checkpoint header missing layer_dims");
  std::istringstream hs(header.substr(11));
  std::string dims_text;
  hs >> dims_text;
  std::vector<std::size_t> dims;
  std::istringstream ds(dims_text);
  for (std::string tok; std::getline(ds, tok, ',');) dims.push_back(std::stoul(tok));
  double scale = 10.0;
  std::string rest;
  if (hs >> rest && rest.rfind("output_scale=", 0) == 0) scale = std::stod(rest.substr(13));
  ToyNet net(dims, scale);
  Vector p(static_cast<Eigen::Index>(count_params(dims)));
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (!(is >> p(i))) throw Error(ErrorCode::IoError, "checkpoint truncated");
  net.set_params(p);
  return net;
}

ToyNet ToyNet::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path);
  return load(is);
}

// ---------------------------------------------------------------------------

GradientSample per_sample_gradients(const Model& model, const RowMatrix& features) {
  if (static_cast<std::size_t>(features.cols()) != model.input_dim())
    throw Error(ErrorCode::DimensionMismatch, "feature width != model input");
  const auto m = static_cast<Eigen::Index>(model.output_dim());
  const auto p = static_cast<Eigen::Index>(model.param_count());
  GradientSample gs;
  gs.per_sample_grads.resize(features.rows() * m, p);
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    model.jacobian(features.row(i).data(), gs.per_sample_grads.row(i * m).data());
  gs.at_params = model.params();
  return gs;
}

Vector closed_form_ols(const Dataset& ds) {
  if (ds.m() != 1) throw Error(ErrorCode::DimensionMismatch, "OLS needs scalar labels");
  const Matrix x = ds.features;
  const Matrix gram = x.transpose() * x;
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12)
    throw Error(ErrorCode::SingularDesign, "X^T X is numerically singular");
  const Vector y = ds.noisy_labels.col(0);
  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  Vector beta = qr.solve(y);
  // One step of iterative refinement on the normal equations.
  const Vector resid = x.transpose() * (y - x * beta);
  beta += gram.ldlt().solve(resid);
  return beta;
}

double avg_gradient_norm(const Model& model, const RowMatrix& features) {
  if (static_cast<std::size_t>(features.cols()) != model.input_dim())
    throw Error(ErrorCode::DimensionMismatch, "feature width != model input");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) acc += model.grad_norm_sq(features.row(i).data());
  return acc / static_cast<double>(features.rows());
}

double avg_gradient_norm(const Model& model, const Dataset& ds) {
  return avg_gradient_norm(model, ds.features);
}

double half_mse(const Model& model, const RowMatrix& features, const RowMatrix& targets) {
  const std::size_t m = model.output_dim();
  std::vector<double> out(m);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    model.forward(features.row(i).data(), out.data());
    for (std::size_t l = 0; l < m; ++l) {
      const double r = out[l] - targets(i, static_cast<Eigen::Index>(l));
      acc += r * r;
    }
  }
  return 0.5 * acc / static_cast<double>(features.rows());
}

}  // namespace uln
