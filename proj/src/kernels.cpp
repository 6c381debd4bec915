#include "negmm/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "negmm/simd.hpp"

namespace negmm {

void KernelSpec::validate() const {
  if (!(omega >= 0.0)) throw std::invalid_argument("kernel omega must be >= 0");
  if (!(ell > 0.0)) throw std::invalid_argument("kernel ell must be > 0");
  if (!(omega_nugget >= 0.0))
    throw std::invalid_argument("kernel nugget must be >= 0");
  if (family == KernelFamily::exponential && omega_nugget != 0.0)
    throw std::invalid_argument("nugget given for pure exponential kernel");
}

double cov_exponential(const KernelSpec& spec, const XY& a, const XY& b) {
  return spec.omega * spec.omega * std::exp(-distance(a, b) / spec.ell);
}

double cov_cell(const KernelSpec& spec, const XY& a, const XY& b, bool same_cell) {
  double c = cov_exponential(spec, a, b);
  if (same_cell) c += spec.omega_nugget * spec.omega_nugget;
  return c;
}

namespace {

void check_finite(std::span<const XY> pts) {
  for (const XY& p : pts)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw std::invalid_argument("non-finite coordinate in kernel point set");
}

// Assemble scale * exp(-d/ell) row-wise through the SIMD kernels; symmetry by
// construction of mirrored writes.
Eigen::MatrixXd assemble_exp(std::span<const XY> pts, double ell, double scale) {
  const std::size_t n = pts.size();
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = pts[i].x;
    ys[i] = pts[i].y;
  }
  Eigen::MatrixXd k(n, n);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    simd::exp_dist_row(xs[i], ys[i], xs.data(), ys.data() + 0, row.data(), i + 1,
                       1.0 / ell, scale);
    for (std::size_t j = 0; j <= i; ++j) {
      k(i, j) = row[j];
      k(j, i) = row[j];
    }
  }
  return k;
}

}  // namespace

Eigen::MatrixXd cov_matrix(const KernelSpec& spec, std::span<const XY> pts,
                           double jitter_rel) {
  spec.validate();
  if (pts.empty()) throw std::invalid_argument("cov_matrix needs at least one point");
  check_finite(pts);
  Eigen::MatrixXd k = assemble_exp(pts, spec.ell, spec.omega * spec.omega);
  double diag_add = jitter_rel * spec.omega * spec.omega;
  if (spec.family == KernelFamily::exponential_plus_nugget)
    diag_add += spec.omega_nugget * spec.omega_nugget;
  if (diag_add != 0.0) k.diagonal().array() += diag_add;
  return k;
}

Eigen::MatrixXd corr_matrix_exponential(double ell, std::span<const XY> pts,
                                        double jitter_rel) {
  if (!(ell > 0.0)) throw std::invalid_argument("ell must be > 0");
  if (pts.empty()) throw std::invalid_argument("empty point set");
  check_finite(pts);
  Eigen::MatrixXd k = assemble_exp(pts, ell, 1.0);
  if (jitter_rel != 0.0) k.diagonal().array() += jitter_rel;
  return k;
}

Eigen::MatrixXd cross_cov(const KernelSpec& spec, std::span<const XY> a,
                          std::span<const XY> b, std::span<const int> ids_a,
                          std::span<const int> ids_b) {
  spec.validate();
  check_finite(a);
  check_finite(b);
  const bool with_ids = !ids_a.empty() && !ids_b.empty();
  if (with_ids && (ids_a.size() != a.size() || ids_b.size() != b.size()))
    throw std::invalid_argument("identity lists must match point counts");

  const std::size_t na = a.size(), nb = b.size();
  std::vector<double> xs(nb), ys(nb);
  for (std::size_t j = 0; j < nb; ++j) {
    xs[j] = b[j].x;
    ys[j] = b[j].y;
  }
  Eigen::MatrixXd k(na, nb);
  std::vector<double> row(nb);
  const double s2 = spec.omega * spec.omega;
  const double n2 = spec.omega_nugget * spec.omega_nugget;
  for (std::size_t i = 0; i < na; ++i) {
    simd::exp_dist_row(a[i].x, a[i].y, xs.data(), ys.data(), row.data(), nb,
                       1.0 / spec.ell, s2);
    for (std::size_t j = 0; j < nb; ++j) {
      double v = row[j];
      if (with_ids && ids_a[i] == ids_b[j]) v += n2;
      k(i, j) = v;
    }
  }
  return k;
}

}  // namespace negmm
