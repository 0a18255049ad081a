#include "uln/simd/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace uln::simd {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double sum_squares(const double* x, std::size_t n) { return dot(x, x, n); }

void ger(double alpha, const double* x, std::size_t m, const double* y, std::size_t n, double* a) {
  for (std::size_t r = 0; r < m; ++r) axpy(alpha * x[r], y, a + r * n, n);
}

void gemv(const double* a, std::size_t m, std::size_t n, const double* x, double* y) {
  for (std::size_t r = 0; r < m; ++r) y[r] = dot(a + r * n, x, n);
}

void gemv_t(const double* a, std::size_t m, std::size_t n, const double* x, double* y) {
  for (std::size_t j = 0; j < n; ++j) y[j] = 0.0;
  for (std::size_t r = 0; r < m; ++r) axpy(x[r], a + r * n, y, n);
}

constexpr KernelTable kTable{Backend::Neon, dot, axpy, sum_squares, ger, gemv, gemv_t};

}  // namespace

const KernelTable* neon_kernels() noexcept { return &kTable; }

}  // namespace uln::simd

#else

namespace uln::simd {
const KernelTable* neon_kernels() noexcept { return nullptr; }
}  // namespace uln::simd

#endif
