#pragma once

#include <Eigen/Dense>

#include "negmm/rng.hpp"

namespace negmm {

struct TargetDensity {
  virtual ~TargetDensity() = default;
  virtual int dim() const = 0;
  // log density and gradient; -inf marks an invalid state.
  virtual double logp_grad(const Eigen::VectorXd& q, Eigen::VectorXd& grad) const = 0;
};

struct NutsOptions {
  int warmup = 500;
  int draws = 500;
  double target_accept = 0.8;
  int max_tree_depth = 10;
};

struct NutsResult {
  Eigen::MatrixXd draws;  // draws x dim, post-warmup states
  double step_size = 0.0;
  Eigen::VectorXd inv_mass;
  int divergences = 0;        // post-warmup
  double accept_mean = 0.0;   // post-warmup mean acceptance statistic
  long n_grad_evals = 0;
};

// No-U-Turn sampler with slice termination, dual-averaging step-size
// adaptation and diagonal mass-matrix estimation during warmup.
NutsResult nuts_sample(const TargetDensity& target, const Eigen::VectorXd& q0,
                       const NutsOptions& opt, Rng& rng);

}  // namespace negmm
