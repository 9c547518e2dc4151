#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kernels_impl.hpp"

namespace hashemb::simd {

namespace {

constexpr KernelTable kScalar{&scalar::axpy, &scalar::dot, &scalar::adam};
#if defined(HASHEMB_HAVE_AVX2)
constexpr KernelTable kAvx2{&avx2::axpy, &avx2::dot, &avx2::adam};
#endif

bool cpu_has_avx2() noexcept {
#if defined(HASHEMB_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* table_for(Level level) noexcept {
  switch (level) {
    case Level::scalar:
      return &kScalar;
    case Level::avx2:
#if defined(HASHEMB_HAVE_AVX2)
      return cpu_has_avx2() ? &kAvx2 : nullptr;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

Level initial_level() noexcept {
  if (const char* env = std::getenv("HASHEMB_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return Level::scalar;
    if (want == "avx2" && table_for(Level::avx2)) return Level::avx2;
  }
  return detected_level();
}

struct Active {
  std::atomic<Level> level{initial_level()};
  std::atomic<const KernelTable*> table{table_for(level.load())};
};

Active& active() noexcept {
  static Active a;
  return a;
}

}  // namespace

std::string_view name(Level level) noexcept {
  switch (level) {
    case Level::scalar: return "scalar";
    case Level::avx2: return "avx2";
  }
  return "unknown";
}

Level detected_level() noexcept {
  return cpu_has_avx2() ? Level::avx2 : Level::scalar;
}

Level active_level() noexcept { return active().level.load(std::memory_order_relaxed); }

void set_level(Level level) {
  const KernelTable* t = table_for(level);
  if (!t) {
    throw std::invalid_argument("SIMD level '" + std::string(name(level)) +
                                "' is not supported on this machine");
  }
  active().table.store(t, std::memory_order_relaxed);
  active().level.store(level, std::memory_order_relaxed);
}

const KernelTable& scalar_kernels() noexcept { return kScalar; }

const KernelTable* avx2_kernels() noexcept { return table_for(Level::avx2); }

const KernelTable& active_kernels() noexcept {
  return *active().table.load(std::memory_order_relaxed);
}

}  // namespace hashemb::simd
