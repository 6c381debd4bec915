#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "negmm/rng.hpp"
#include "negmm/simd.hpp"

using namespace negmm;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double lo = -10.0,
                               double hi = 10.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + rng.u01() * (hi - lo);
  return v;
}

struct BackendGuard {
  ~BackendGuard() {
    simd::force_backend(simd::avx2_available() ? simd::Backend::avx2
                                               : simd::Backend::scalar);
  }
};

}  // namespace

TEST_CASE("scalar and avx2 backends agree on every kernel") {
  if (!simd::avx2_available()) return;  // scalar-only host: dispatch test is moot
  BackendGuard guard;
  Rng rng(20240817);

  for (const std::size_t n : {1ul, 3ul, 4ul, 7ul, 64ul, 257ul, 1000ul}) {
    const auto x = random_vec(n, rng);
    const auto y = random_vec(n, rng);
    const auto d = random_vec(n, rng, 0.0, 500.0);

    simd::force_backend(simd::Backend::scalar);
    const double dot_s = simd::dot(x.data(), y.data(), n);
    const double ss_s = simd::sumsq(x.data(), n);
    const double sd_s = simd::sumsq_diff(x.data(), y.data(), n);
    std::vector<double> axpy_s = y;
    simd::axpy(0.37, x.data(), axpy_s.data(), n);
    std::vector<double> row_s(n), exp_s(n);
    simd::exp_dist_row(1.5, -2.5, x.data(), y.data(), row_s.data(), n, 1.0 / 30.0,
                       0.09);
    simd::scaled_exp_neg(d.data(), exp_s.data(), n, 1.0 / 25.0, 2.0);

    simd::force_backend(simd::Backend::avx2);
    CHECK(simd::dot(x.data(), y.data(), n) == doctest::Approx(dot_s).epsilon(1e-13));
    CHECK(simd::sumsq(x.data(), n) == doctest::Approx(ss_s).epsilon(1e-13));
    CHECK(simd::sumsq_diff(x.data(), y.data(), n) ==
          doctest::Approx(sd_s).epsilon(1e-13));
    std::vector<double> axpy_v = y;
    simd::axpy(0.37, x.data(), axpy_v.data(), n);
    std::vector<double> row_v(n), exp_v(n);
    simd::exp_dist_row(1.5, -2.5, x.data(), y.data(), row_v.data(), n, 1.0 / 30.0,
                       0.09);
    simd::scaled_exp_neg(d.data(), exp_v.data(), n, 1.0 / 25.0, 2.0);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(axpy_v[i] == doctest::Approx(axpy_s[i]).epsilon(1e-13));
      CHECK(row_v[i] == doctest::Approx(row_s[i]).epsilon(1e-12));
      CHECK(exp_v[i] == doctest::Approx(exp_s[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("vectorized exp matches libm across the usable range") {
  if (!simd::avx2_available()) return;
  BackendGuard guard;
  Rng rng(7);
  std::vector<double> d(4096);
  for (auto& v : d) v = rng.u01() * 700.0;  // exp(-700)..exp(0)

  std::vector<double> got(d.size());
  simd::force_backend(simd::Backend::avx2);
  simd::scaled_exp_neg(d.data(), got.data(), d.size(), 1.0, 1.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double want = std::exp(-d[i]);
    if (want > 0.0)
      CHECK(std::abs(got[i] - want) / want < 5e-14);
  }
}

TEST_CASE("fused distance-exp row equals composition of hypot and exp") {
  BackendGuard guard;
  Rng rng(99);
  const auto xs = random_vec(51, rng, -300.0, 300.0);
  const auto ys = random_vec(51, rng, 3600.0, 4200.0);
  std::vector<double> row(51);
  simd::exp_dist_row(12.0, 3900.0, xs.data(), ys.data(), row.data(), 51, 1.0 / 40.0,
                     0.25);
  for (std::size_t i = 0; i < 51; ++i) {
    const double dx = 12.0 - xs[i], dy = 3900.0 - ys[i];
    const double want = 0.25 * std::exp(-std::sqrt(dx * dx + dy * dy) / 40.0);
    CHECK(row[i] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("reductions are exact on structured inputs") {
  std::vector<double> ones(37, 1.0);
  CHECK(simd::sumsq(ones.data(), ones.size()) == doctest::Approx(37.0));
  std::vector<double> ramp(10);
  for (int i = 0; i < 10; ++i) ramp[i] = i;
  CHECK(simd::dot(ramp.data(), ones.data(), 10) == doctest::Approx(45.0));
  CHECK(simd::sumsq_diff(ramp.data(), ramp.data(), 10) == doctest::Approx(0.0));
}
