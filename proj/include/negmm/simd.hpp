#pragma once

#include <cstddef>
#include <string>

// Data-parallel inner-loop kernels used by covariance assembly and the
// log-posterior reduction. Each kernel has a scalar reference implementation
// and an AVX2+FMA variant selected once at runtime; the two are held
// equivalence-tested against each other. Reductions use a fixed accumulation
// order per backend, so results are reproducible run to run on one machine.
namespace negmm::simd {

enum class Backend { scalar, avx2 };

Backend active_backend();
const char* backend_name();

// Test hook. Throws if the requested backend is not available on this CPU.
void force_backend(Backend b);
bool avx2_available();

// sum_i x_i * y_i
double dot(const double* x, const double* y, std::size_t n);

// sum_i x_i^2
double sumsq(const double* x, std::size_t n);

// sum_i (x_i - y_i)^2
double sumsq_diff(const double* x, const double* y, std::size_t n);

// y_i += a * x_i
void axpy(double a, const double* x, double* y, std::size_t n);

// out_i = scale * exp(-inv_ell * sqrt((ax - xs_i)^2 + (ay - ys_i)^2))
// One row of an exponential-kernel Gram matrix against point (ax, ay).
void exp_dist_row(double ax, double ay, const double* xs, const double* ys,
                  double* out, std::size_t n, double inv_ell, double scale);

// out_i = scale * exp(-inv_ell * d_i), d_i >= 0
void scaled_exp_neg(const double* d, double* out, std::size_t n,
                    double inv_ell, double scale);

namespace detail {
struct Ops {
  double (*dot)(const double*, const double*, std::size_t);
  double (*sumsq)(const double*, std::size_t);
  double (*sumsq_diff)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*exp_dist_row)(double, double, const double*, const double*, double*,
                       std::size_t, double, double);
  void (*scaled_exp_neg)(const double*, double*, std::size_t, double, double);
};
extern const Ops scalar_ops;
#if defined(NEGMM_BUILD_AVX2)
extern const Ops avx2_ops;
#endif
}  // namespace detail

}  // namespace negmm::simd
