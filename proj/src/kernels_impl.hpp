#pragma once

#include <cstddef>

#include "hashemb/kernels.hpp"

namespace hashemb::simd {

namespace scalar {
void axpy(float a, const float* x, float* y, std::size_t n);
float dot(const float* x, const float* y, std::size_t n);
void adam(float* param, float* m, float* v, const float* grad, std::size_t n,
          const AdamCoefficients& c);
}  // namespace scalar

#if defined(HASHEMB_HAVE_AVX2)
namespace avx2 {
void axpy(float a, const float* x, float* y, std::size_t n);
float dot(const float* x, const float* y, std::size_t n);
void adam(float* param, float* m, float* v, const float* grad, std::size_t n,
          const AdamCoefficients& c);
}  // namespace avx2
#endif

}  // namespace hashemb::simd
