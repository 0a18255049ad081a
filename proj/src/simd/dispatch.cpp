#include <atomic>
#include <cstdlib>
#include <string_view>

#include "uln/simd/kernels.hpp"

namespace uln::simd {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* pick_default() noexcept {
  if (const char* env = std::getenv("ULN_SIMD"); env && std::string_view(env) == "scalar")
    return &scalar_kernels();
  if (auto* t = kernels_for(Backend::Avx2)) return t;
  if (auto* t = kernels_for(Backend::Neon)) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*> g_active{nullptr};

}  // namespace

const KernelTable* kernels_for(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar:
      return &scalar_kernels();
    case Backend::Avx2:
      return cpu_has_avx2() ? avx2_kernels() : nullptr;
    case Backend::Neon:
      return neon_kernels();
  }
  return nullptr;
}

const KernelTable& kernels() noexcept {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (!t) {
    const KernelTable* fresh = pick_default();
    if (g_active.compare_exchange_strong(t, fresh, std::memory_order_acq_rel)) t = fresh;
  }
  return *t;
}

bool set_backend(Backend b) noexcept {
  const KernelTable* t = kernels_for(b);
  if (!t) return false;
  g_active.store(t, std::memory_order_release);
  return true;
}

std::string_view backend_name(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
    case Backend::Neon:
      return "neon";
  }
  return "unknown";
}

}  // namespace uln::simd
