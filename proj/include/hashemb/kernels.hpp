#pragma once

// Arithmetic inner loops shared by the embedding and classifier code.
//
// Every float kernel has a portable scalar reference and, on x86-64, an
// AVX2+FMA variant. The variant is picked once at startup from CPUID and can
// be forced with HASHEMB_SIMD=scalar|avx2 or set_level(). Double overloads
// are scalar only; they back the double-precision gradient checks.

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <string_view>

namespace hashemb::simd {

enum class Level { scalar, avx2 };

std::string_view name(Level level) noexcept;

/// Best level supported by this CPU and build.
Level detected_level() noexcept;
Level active_level() noexcept;
/// Throws std::invalid_argument when `level` is not supported here.
void set_level(Level level);

/// Scalars for one lazy/dense Adam step, precomputed per global step t.
struct AdamCoefficients {
  float alpha = 0.001f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
  float inv_bias1 = 1.0f;  // 1 / (1 - beta1^t)
  float inv_bias2 = 1.0f;  // 1 / (1 - beta2^t)
  float grad_scale = 1.0f;
};

/// Raw kernel entry points, one table per level.
struct KernelTable {
  void (*axpy)(float a, const float* x, float* y, std::size_t n);
  float (*dot)(const float* x, const float* y, std::size_t n);
  void (*adam)(float* param, float* m, float* v, const float* grad, std::size_t n,
               const AdamCoefficients& c);
};

const KernelTable& scalar_kernels() noexcept;
/// nullptr when the build has no AVX2 variant.
const KernelTable* avx2_kernels() noexcept;
const KernelTable& active_kernels() noexcept;

// ---- float (dispatched) ----------------------------------------------------

/// y += a * x
inline void axpy(float a, std::span<const float> x, std::span<float> y) {
  assert(x.size() == y.size());
  active_kernels().axpy(a, x.data(), y.data(), x.size());
}

inline float dot(std::span<const float> x, std::span<const float> y) {
  assert(x.size() == y.size());
  return active_kernels().dot(x.data(), y.data(), x.size());
}

inline void adam_update(std::span<float> param, std::span<float> m, std::span<float> v,
                        std::span<const float> grad, const AdamCoefficients& c) {
  assert(param.size() == m.size() && m.size() == v.size() && v.size() == grad.size());
  active_kernels().adam(param.data(), m.data(), v.data(), grad.data(), param.size(), c);
}

// ---- double (scalar) -------------------------------------------------------

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline double dot(std::span<const double> x, std::span<const double> y) {
  assert(x.size() == y.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

}  // namespace hashemb::simd
