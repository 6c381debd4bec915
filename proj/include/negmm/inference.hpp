#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "negmm/model.hpp"

namespace negmm {

struct SamplerConfig {
  int chains = 1;
  int warmup = 500;
  int draws = 500;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 1;
  int workers = 1;

  void validate() const;
};

// Per-frequency posterior: summary statistics and retained draws over the
// constrained parameters.
struct PosteriorSummary {
  double freq = 0.0;
  Phase phase = Phase::one;
  int n_events = 0, n_stations = 0, n_cells = 0;
  std::vector<std::string> names;
  Eigen::VectorXd means, sds, p05, p95, ess, rhat;
  Eigen::MatrixXd draws;  // (chains*draws) x n_params
  int chains = 1;
  int divergences = 0;
  bool converged = true;
  double step_size = 0.0;
  long n_grad_evals = 0;

  int index_of(const std::string& name) const;           // -1 when absent
  double mean_of(const std::string& name) const;          // throws when absent
  // constrained layout offsets
  int off_dc1e() const { return 3; }
  int off_dc1a() const { return 3 + n_events; }
  int off_dc1b() const { return 3 + n_events + n_stations; }
  int off_cca() const { return 3 + n_events + 2 * n_stations; }
  int off_dB() const { return off_cca() + n_cells; }
};

// Joint fit of model parameters and hyperparameters (phase 1) or with the
// spatial hyperparameters pinned (phase 2) at one frequency.
PosteriorSummary fit_frequency(const Dataset& data, int freq_index, Phase phase,
                               const SamplerConfig& cfg, const PriorConfig& pc,
                               const HyperParams* fixed_hyper = nullptr);

struct SmoothingRules {
  std::vector<double> omega1a_knots_hz{0.5, 5.0, 15.0};
  double omega1a_break_hz = 15.0;
  double ell_ca_cap_km = 75.0;
  int median_window = 3;
};

// Per-frequency pinned hyperparameter values for phase 2.
struct SmoothedHyper {
  std::vector<double> freqs;
  std::vector<double> ell_1e, omega_1e, ell_1as, omega_1as, omega_1bs;
  std::vector<double> ell_ca1, omega_ca1, omega_ca2;
  std::vector<std::string> warnings;

  HyperParams at(double freq) const;  // piecewise-linear in ln f, clamped ends
  static SmoothedHyper constant(const HyperParams& h, std::vector<double> freqs);
};

SmoothedHyper smooth_hyperparameters(std::span<const PosteriorSummary> phase1,
                                     const SmoothingRules& rules = {});

std::vector<PosteriorSummary> fit_phase1(const Dataset& data,
                                         std::span<const int> freq_indices,
                                         const SamplerConfig& cfg,
                                         const PriorConfig& pc);

std::vector<PosteriorSummary> fit_phase2(const Dataset& data,
                                         std::span<const int> freq_indices,
                                         const SmoothedHyper& smoothed,
                                         const SamplerConfig& cfg,
                                         const PriorConfig& pc);

// MAP point estimate with a diagonal Laplace approximation; fast-iteration
// mode, not part of the acceptance path.
struct MapResult {
  Eigen::VectorXd q;           // unconstrained optimum
  ModelParams params;
  HyperParams hyper;
  double logp = 0.0;
  Eigen::VectorXd sd;          // delta-method sd of the constrained parameters
  bool converged = false;
  int iterations = 0;
};

MapResult map_laplace(const Dataset& data, int freq_index, Phase phase,
                      const PriorConfig& pc, const HyperParams* fixed_hyper = nullptr,
                      int max_iter = 500);

// split-Rhat and effective sample size used by the summaries (exposed for
// testing): draws is (chains*n) x 1 column ordering chain-major.
double split_rhat(const Eigen::MatrixXd& draws_by_chain);
double effective_sample_size(const Eigen::MatrixXd& draws_by_chain);

}  // namespace negmm
