#include <atomic>
#include <cstdlib>
#include <stdexcept>

#include "negmm/simd.hpp"

namespace negmm::simd {
namespace {

bool cpu_has_avx2_fma() {
#if defined(NEGMM_BUILD_AVX2) && defined(__GNUC__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend pick_default() {
  if (const char* env = std::getenv("NEGMM_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Backend::scalar;
    if (v == "avx2" && cpu_has_avx2_fma()) return Backend::avx2;
  }
  return cpu_has_avx2_fma() ? Backend::avx2 : Backend::scalar;
}

std::atomic<const detail::Ops*> g_ops{nullptr};
std::atomic<Backend> g_backend{Backend::scalar};

const detail::Ops* ops() {
  const detail::Ops* p = g_ops.load(std::memory_order_acquire);
  if (!p) {
    force_backend(pick_default());
    p = g_ops.load(std::memory_order_acquire);
  }
  return p;
}

}  // namespace

bool avx2_available() { return cpu_has_avx2_fma(); }

void force_backend(Backend b) {
  switch (b) {
    case Backend::scalar:
      g_ops.store(&detail::scalar_ops, std::memory_order_release);
      break;
    case Backend::avx2:
#if defined(NEGMM_BUILD_AVX2)
      if (cpu_has_avx2_fma()) {
        g_ops.store(&detail::avx2_ops, std::memory_order_release);
        break;
      }
#endif
      throw std::runtime_error("AVX2 backend not available on this CPU/build");
  }
  g_backend.store(b, std::memory_order_release);
}

Backend active_backend() {
  ops();
  return g_backend.load(std::memory_order_acquire);
}

const char* backend_name() {
  return active_backend() == Backend::avx2 ? "avx2" : "scalar";
}

double dot(const double* x, const double* y, std::size_t n) {
  return ops()->dot(x, y, n);
}
double sumsq(const double* x, std::size_t n) { return ops()->sumsq(x, n); }
double sumsq_diff(const double* x, const double* y, std::size_t n) {
  return ops()->sumsq_diff(x, y, n);
}
void axpy(double a, const double* x, double* y, std::size_t n) {
  ops()->axpy(a, x, y, n);
}
void exp_dist_row(double ax, double ay, const double* xs, const double* ys,
                  double* out, std::size_t n, double inv_ell, double scale) {
  ops()->exp_dist_row(ax, ay, xs, ys, out, n, inv_ell, scale);
}
void scaled_exp_neg(const double* d, double* out, std::size_t n, double inv_ell,
                    double scale) {
  ops()->scaled_exp_neg(d, out, n, inv_ell, scale);
}

}  // namespace negmm::simd
