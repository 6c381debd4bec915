#pragma once

#include <Eigen/Dense>
#include <span>

#include "negmm/types.hpp"

namespace negmm {

enum class KernelFamily { exponential, exponential_plus_nugget };

// Covariance specification for one spatially varying term. omega is the
// marginal standard deviation (natural-log EAS units), ell the correlation
// length in km. The nugget variance applies only on cell identity.
struct KernelSpec {
  KernelFamily family = KernelFamily::exponential;
  double omega = 1.0;
  double ell = 1.0;
  double omega_nugget = 0.0;

  void validate() const;
};

// omega^2 * exp(-|a-b| / ell)
double cov_exponential(const KernelSpec& spec, const XY& a, const XY& b);

// omega^2 * exp(-|a-b| / ell) + omega_nugget^2 * [same_cell]
double cov_cell(const KernelSpec& spec, const XY& a, const XY& b, bool same_cell);

// Relative diagonal jitter applied before factorization.
inline constexpr double kJitterRel = 1e-9;

// Gram matrix over pts. The diagonal carries omega^2 (+ nugget^2 for the
// cell family) plus jitter_rel * omega^2. Pass jitter_rel = 0 for the raw
// matrix. Nugget entries trigger on index equality, i.e. pts are distinct
// cell identities.
Eigen::MatrixXd cov_matrix(const KernelSpec& spec, std::span<const XY> pts,
                           double jitter_rel = kJitterRel);

// Unit-variance correlation matrix exp(-d/ell) (+ jitter on the diagonal);
// the omega^2 scale factors out of the Cholesky in the non-centered model.
Eigen::MatrixXd corr_matrix_exponential(double ell, std::span<const XY> pts,
                                        double jitter_rel = kJitterRel);

// Cross-covariance between two point sets (no nugget unless identities given:
// ids_a[i] == ids_b[j] marks the same cell).
Eigen::MatrixXd cross_cov(const KernelSpec& spec, std::span<const XY> a,
                          std::span<const XY> b, std::span<const int> ids_a = {},
                          std::span<const int> ids_b = {});

}  // namespace negmm
