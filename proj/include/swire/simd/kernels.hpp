#pragma once

// Data-parallel inner loops shared by the tensor engine, the BoW baseline
// and the embedding index. Each kernel has a scalar reference and optional
// vector variants; one table is selected at startup from CPU features.
// SWIRE_SIMD=scalar in the environment forces the reference path.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace swire::simd {

struct KernelTable {
  std::string_view name;
  // sum_i a[i] * b[i]
  float (*dot)(const float* a, const float* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
  // sum_i (a[i] - b[i])^2
  float (*squared_l2)(const float* a, const float* b, std::size_t n);
};

const KernelTable& scalar_kernels();

// nullptr when the variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// Every table usable on this machine, reference first.
std::vector<const KernelTable*> available_kernels();

const KernelTable& active();

inline float dot(std::span<const float> a, std::span<const float> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline float squared_l2(std::span<const float> a, std::span<const float> b) {
  return active().squared_l2(a.data(), b.data(), a.size());
}

// Double-precision overloads have no vector variant; they exist so the
// tensor engine can be instantiated in double for gradient verification.
inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace swire::simd
