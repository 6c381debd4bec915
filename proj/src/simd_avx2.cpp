#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "negmm/simd.hpp"

// AVX2+FMA variants. Compiled with -mavx2 -mfma; only reached through the
// dispatch table after a runtime CPU check.
namespace negmm::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// exp(x) for 4 doubles, Cephes rational approximation after range reduction
// x = n*ln2 + r. Accurate to ~1 ulp on [-708, 709]; out-of-range inputs are
// clamped, which matches the saturating behavior needed for kernel decay.
inline __m256d exp_pd(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);
  const __m256d hi = _mm256_set1_pd(709.0);
  const __m256d lo = _mm256_set1_pd(-708.0);

  const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
  const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
  const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
  const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
  const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
  const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
  const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);

  x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                              _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, c1, x);
  r = _mm256_fnmadd_pd(n, c2, r);

  const __m256d z = _mm256_mul_pd(r, r);
  __m256d p = _mm256_fmadd_pd(p0, z, p1);
  p = _mm256_fmadd_pd(p, z, p2);
  p = _mm256_mul_pd(p, r);
  __m256d q = _mm256_fmadd_pd(q0, z, q1);
  q = _mm256_fmadd_pd(q, z, q2);
  q = _mm256_fmadd_pd(q, z, q3);
  // e^r = 1 + 2p/(q - p)
  __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  e = _mm256_fmadd_pd(e, _mm256_set1_pd(2.0), _mm256_set1_pd(1.0));

  // scale by 2^n via exponent-field construction
  __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  n64 = _mm256_add_epi64(n64, _mm256_set1_epi64x(1023));
  n64 = _mm256_slli_epi64(n64, 52);
  return _mm256_mul_pd(e, _mm256_castsi256_pd(n64));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sumsq_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_fmadd_pd(v, v, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i] * x[i];
  return s;
}

double sumsq_diff_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r =
        _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, r);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void exp_dist_row_avx2(double ax, double ay, const double* xs, const double* ys,
                       double* out, std::size_t n, double inv_ell, double scale) {
  const __m256d vax = _mm256_set1_pd(ax);
  const __m256d vay = _mm256_set1_pd(ay);
  const __m256d vk = _mm256_set1_pd(-inv_ell);
  const __m256d vs = _mm256_set1_pd(scale);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dx = _mm256_sub_pd(vax, _mm256_loadu_pd(xs + i));
    const __m256d dy = _mm256_sub_pd(vay, _mm256_loadu_pd(ys + i));
    const __m256d d2 = _mm256_fmadd_pd(dx, dx, _mm256_mul_pd(dy, dy));
    const __m256d d = _mm256_sqrt_pd(d2);
    _mm256_storeu_pd(out + i, _mm256_mul_pd(vs, exp_pd(_mm256_mul_pd(vk, d))));
  }
  for (; i < n; ++i) {
    const double dx = ax - xs[i];
    const double dy = ay - ys[i];
    out[i] = scale * std::exp(-inv_ell * std::sqrt(dx * dx + dy * dy));
  }
}

void scaled_exp_neg_avx2(const double* d, double* out, std::size_t n,
                         double inv_ell, double scale) {
  const __m256d vk = _mm256_set1_pd(-inv_ell);
  const __m256d vs = _mm256_set1_pd(scale);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(d + i);
    _mm256_storeu_pd(out + i, _mm256_mul_pd(vs, exp_pd(_mm256_mul_pd(vk, v))));
  }
  for (; i < n; ++i) out[i] = scale * std::exp(-inv_ell * d[i]);
}

}  // namespace

namespace detail {
const Ops avx2_ops = {dot_avx2,  sumsq_avx2,        sumsq_diff_avx2,
                      axpy_avx2, exp_dist_row_avx2, scaled_exp_neg_avx2};
}  // namespace detail

}  // namespace negmm::simd
