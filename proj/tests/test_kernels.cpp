#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <string_view>
#include <vector>

#include "hashemb/kernels.hpp"
#include "hashemb/random.hpp"

namespace hashemb::simd {
namespace {

std::vector<float> random_vec(Rng& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

// Lengths straddling the 8- and 16-wide loops and their tails.
const std::size_t kLengths[] = {0, 1, 3, 7, 8, 9, 15, 16, 17, 20, 31, 33, 64, 100, 1000, 1023};

class KernelEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (avx2_kernels() == nullptr) GTEST_SKIP() << "no AVX2 variant on this machine";
  }
  const KernelTable& ref = scalar_kernels();
  const KernelTable& vec() { return *avx2_kernels(); }
};

TEST_F(KernelEquivalence, AxpyMatchesScalar) {
  // The vector path fuses the multiply-add, the scalar one rounds twice.
  Rng rng(1);
  for (auto n : kLengths) {
    const auto x = random_vec(rng, n);
    auto y1 = random_vec(rng, n);
    auto y2 = y1;
    const auto y0 = y1;
    ref.axpy(0.37f, x.data(), y1.data(), n);
    vec().axpy(0.37f, x.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      const double scale = std::fabs(0.37 * x[i]) + std::fabs(y0[i]);
      EXPECT_LE(std::fabs(double(y1[i]) - double(y2[i])), 2.0 * 0x1.0p-24 * scale) << n;
    }
  }
}

TEST_F(KernelEquivalence, AxpyIsDeterministic) {
  Rng rng(11);
  const auto x = random_vec(rng, 1000);
  auto y1 = random_vec(rng, 1000);
  auto y2 = y1;
  vec().axpy(-1.25f, x.data(), y1.data(), 1000);
  vec().axpy(-1.25f, x.data(), y2.data(), 1000);
  EXPECT_EQ(y1, y2);
}

TEST_F(KernelEquivalence, DotWithinReassociationBound) {
  Rng rng(2);
  for (auto n : kLengths) {
    const auto x = random_vec(rng, n);
    const auto y = random_vec(rng, n);
    double exact = 0.0, abs_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      exact += double(x[i]) * double(y[i]);
      abs_sum += std::fabs(double(x[i]) * double(y[i]));
    }
    const double bound = 2.0 * double(n + 1) * 0x1.0p-24 * abs_sum + 1e-30;
    EXPECT_LE(std::fabs(ref.dot(x.data(), y.data(), n) - exact), bound) << n;
    EXPECT_LE(std::fabs(vec().dot(x.data(), y.data(), n) - exact), bound) << n;
  }
}

TEST_F(KernelEquivalence, AdamMatchesScalar) {
  Rng rng(3);
  AdamCoefficients c;
  c.inv_bias1 = 1.0f / (1.0f - 0.9f * 0.9f);
  c.inv_bias2 = 1.0f / (1.0f - 0.999f * 0.999f);
  c.grad_scale = 0.25f;
  for (auto n : kLengths) {
    auto p1 = random_vec(rng, n), m1 = random_vec(rng, n, -0.1, 0.1);
    auto v1 = random_vec(rng, n, 0.0, 0.1);
    const auto g = random_vec(rng, n);
    auto p2 = p1, m2 = m1, v2 = v1;
    ref.adam(p1.data(), m1.data(), v1.data(), g.data(), n, c);
    vec().adam(p2.data(), m2.data(), v2.data(), g.data(), n, c);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(m1[i], m2[i], 1e-6f * (1 + std::fabs(m1[i])));
      EXPECT_NEAR(v1[i], v2[i], 1e-6f * (1 + std::fabs(v1[i])));
      EXPECT_NEAR(p1[i], p2[i], 1e-6f * (1 + std::fabs(p1[i])));
    }
  }
}

TEST(KernelDispatch, SetLevelSwitchesActiveTable) {
  const Level before = active_level();
  set_level(Level::scalar);
  EXPECT_EQ(active_level(), Level::scalar);
  EXPECT_EQ(&active_kernels(), &scalar_kernels());
  if (avx2_kernels() != nullptr) {
    set_level(Level::avx2);
    EXPECT_EQ(&active_kernels(), avx2_kernels());
  } else {
    EXPECT_THROW(set_level(Level::avx2), std::invalid_argument);
  }
  set_level(before);
}

TEST(KernelDispatch, EnvironmentOverride) {
  const char* env = std::getenv("HASHEMB_SIMD");
  if (env == nullptr) {
    EXPECT_EQ(active_level(), detected_level());
  } else if (std::string_view(env) == "scalar") {
    EXPECT_EQ(active_level(), Level::scalar);
  }
}

TEST(KernelDispatch, SpanWrappers) {
  std::vector<float> x{1, 2, 3}, y{1, 1, 1};
  axpy(2.0f, std::span<const float>(x), std::span<float>(y));
  EXPECT_EQ(y, (std::vector<float>{3, 5, 7}));
  EXPECT_EQ(dot(std::span<const float>(x), std::span<const float>(y)), 34.0f);
  std::vector<double> xd{1, 2}, yd{3, 4};
  EXPECT_EQ(dot(std::span<const double>(xd), std::span<const double>(yd)), 11.0);
}

TEST(KernelDispatch, AdamScalarSingleStepClosedForm) {
  // t = 1: m_hat = g, v_hat = g^2, so the step is -alpha * g / (|g| + eps).
  AdamCoefficients c;
  c.inv_bias1 = 1.0f / (1.0f - c.beta1);
  c.inv_bias2 = 1.0f / (1.0f - c.beta2);
  float p[2] = {1.0f, -1.0f}, m[2] = {0, 0}, v[2] = {0, 0};
  const float g[2] = {0.5f, -3.0f};
  scalar_kernels().adam(p, m, v, g, 2, c);
  EXPECT_NEAR(p[0], 1.0f - 0.001f, 1e-6f);
  EXPECT_NEAR(p[1], -1.0f + 0.001f, 1e-6f);
}

}  // namespace
}  // namespace hashemb::simd
