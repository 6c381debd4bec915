#include <cmath>

#include "negmm/simd.hpp"

// Reference kernels. Deliberately plain loops: these define the semantics the
// vectorized variants are tested against.
namespace negmm::simd {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sumsq_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

double sumsq_diff_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void exp_dist_row_scalar(double ax, double ay, const double* xs,
                         const double* ys, double* out, std::size_t n,
                         double inv_ell, double scale) {
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = ax - xs[i];
    const double dy = ay - ys[i];
    out[i] = scale * std::exp(-inv_ell * std::sqrt(dx * dx + dy * dy));
  }
}

void scaled_exp_neg_scalar(const double* d, double* out, std::size_t n,
                           double inv_ell, double scale) {
  for (std::size_t i = 0; i < n; ++i) out[i] = scale * std::exp(-inv_ell * d[i]);
}

}  // namespace

namespace detail {
const Ops scalar_ops = {dot_scalar,  sumsq_scalar,        sumsq_diff_scalar,
                        axpy_scalar, exp_dist_row_scalar, scaled_exp_neg_scalar};
}  // namespace detail

}  // namespace negmm::simd
