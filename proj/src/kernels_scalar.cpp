#include <cmath>

#include "kernels_impl.hpp"

namespace hashemb::simd::scalar {

void axpy(float a, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

float dot(const float* x, const float* y, std::size_t n) {
  float s = 0.0f;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void adam(float* param, float* m, float* v, const float* grad, std::size_t n,
          const AdamCoefficients& c) {
  const float one_m_b1 = 1.0f - c.beta1;
  const float one_m_b2 = 1.0f - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const float g = grad[i] * c.grad_scale;
    m[i] = c.beta1 * m[i] + one_m_b1 * g;
    v[i] = c.beta2 * v[i] + one_m_b2 * (g * g);
    const float m_hat = m[i] * c.inv_bias1;
    const float v_hat = v[i] * c.inv_bias2;
    param[i] -= c.alpha * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace hashemb::simd::scalar
