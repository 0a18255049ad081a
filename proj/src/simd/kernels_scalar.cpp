#include "uln/simd/kernels.hpp"

namespace uln::simd {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum_squares(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return s;
}

void ger(double alpha, const double* x, std::size_t m, const double* y, std::size_t n, double* a) {
  for (std::size_t i = 0; i < m; ++i) {
    const double ax = alpha * x[i];
    double* row = a + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += ax * y[j];
  }
}

void gemv(const double* a, std::size_t m, std::size_t n, const double* x, double* y) {
  for (std::size_t i = 0; i < m; ++i) y[i] = dot(a + i * n, x, n);
}

void gemv_t(const double* a, std::size_t m, std::size_t n, const double* x, double* y) {
  for (std::size_t j = 0; j < n; ++j) y[j] = 0.0;
  for (std::size_t i = 0; i < m; ++i) axpy(x[i], a + i * n, y, n);
}

constexpr KernelTable kTable{Backend::Scalar, dot, axpy, sum_squares, ger, gemv, gemv_t};

}  // namespace

const KernelTable& scalar_kernels() noexcept { return kTable; }

}  // namespace uln::simd
