#include <cstdlib>
#include <string_view>

#include "swire/simd/kernels.hpp"

namespace swire::simd {

namespace detail {
#if defined(SWIRE_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(SWIRE_HAVE_NEON)
const KernelTable& neon_table();
#endif
}  // namespace detail

const KernelTable* avx2_kernels() {
#if defined(SWIRE_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &detail::avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_kernels() {
#if defined(SWIRE_HAVE_NEON)
  return &detail::neon_table();
#else
  return nullptr;
#endif
}

std::vector<const KernelTable*> available_kernels() {
  std::vector<const KernelTable*> out{&scalar_kernels()};
  if (const auto* t = avx2_kernels()) out.push_back(t);
  if (const auto* t = neon_kernels()) out.push_back(t);
  return out;
}

namespace {

const KernelTable& select() {
  if (const char* env = std::getenv("SWIRE_SIMD"); env && std::string_view(env) == "scalar") {
    return scalar_kernels();
  }
  if (const auto* t = avx2_kernels()) return *t;
  if (const auto* t = neon_kernels()) return *t;
  return scalar_kernels();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace swire::simd
