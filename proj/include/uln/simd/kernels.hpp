#pragma once

#include <cstddef>
#include <string_view>

namespace uln::simd {

enum class Backend { Scalar, Avx2, Neon };

// Dense double-precision kernels on contiguous row-major storage.
struct KernelTable {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*sum_squares)(const double* x, std::size_t n);
  // a (m x n) += alpha * x y^T
  void (*ger)(double alpha, const double* x, std::size_t m, const double* y, std::size_t n,
              double* a);
  // y (m) = a (m x n) * x
  void (*gemv)(const double* a, std::size_t m, std::size_t n, const double* x, double* y);
  // y (n) = a^T (n x m) * x (m)
  void (*gemv_t)(const double* a, std::size_t m, std::size_t n, const double* x, double* y);
};

const KernelTable& scalar_kernels() noexcept;
const KernelTable* avx2_kernels() noexcept;  // nullptr when not compiled in
const KernelTable* neon_kernels() noexcept;

/// Table for a given backend, or nullptr if it is not compiled in or the CPU
/// lacks the instructions.
const KernelTable* kernels_for(Backend b) noexcept;

/// Active table. Chosen on first use: the widest supported backend unless the
/// ULN_SIMD environment variable is set to "scalar".
const KernelTable& kernels() noexcept;

/// Returns false if the backend is unavailable on this machine.
bool set_backend(Backend b) noexcept;

std::string_view backend_name(Backend b) noexcept;

}  // namespace uln::simd
