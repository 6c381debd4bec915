#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "negmm/rng.hpp"

namespace negmm {

// Two-term exponential decay of the inter-frequency correlation in
// f_r = |ln(f1/f2)|. Coefficients are stored as printed magnitudes; the decay
// rates B and D are negated on evaluation.
struct CorrelationModel {
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
};

struct EmpiricalCorr {
  struct Point {
    double f1 = 0.0, f2 = 0.0;
    double rho = 0.0;
    int n = 0;        // sample count behind the estimate
    double z = 0.0;   // atanh(rho)
    double sigma_z = 0.0;
  };
  std::vector<Point> points;
};

// Pearson product-moment estimate; throws on zero variance.
double empirical_rho(std::span<const double> x, std::span<const double> y);

// z = atanh(rho), sigma_z = 1/sqrt(n-3); throws at |rho| = 1 or n <= 3.
std::pair<double, double> fisher_z(double rho, int n);

struct CorrelationFitDiagnostics {
  Eigen::Vector4d start;
  double rss = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct CorrelationFit {
  CorrelationModel model;
  double weighted_rss = 0.0;
  std::vector<CorrelationFitDiagnostics> starts;
};

// Weighted damped least squares on z over the pooled f_r points, multi-start;
// f_r = 0 pairs are excluded (the model pins rho there to 1).
CorrelationFit fit_correlation_model(const EmpiricalCorr& emp);

// rho(f1, f2); exactly 1 at equal frequencies.
double eval_correlation(const CorrelationModel& m, double f1, double f2);

// Correlation matrix over a frequency list for one term.
Eigen::MatrixXd correlation_matrix(const CorrelationModel& m,
                                   std::span<const double> freqs);

// Clip negative eigenvalues then renormalize the diagonal to 1. Matrices that
// are already PSD are returned unchanged.
Eigen::MatrixXd repair_psd(const Eigen::MatrixXd& r, double floor = 1e-8);

// Zero-mean Gaussian draws across frequencies with the term's correlation
// structure scaled by per-frequency marginal sds. Returns n_samples x n_freqs.
Eigen::MatrixXd sample_correlated_terms(const CorrelationModel& m,
                                        std::span<const double> marginal_sds,
                                        std::span<const double> freqs, int n_samples,
                                        Rng& rng);

// Reference coefficient rows fitted to the non-ergodic terms (source constant,
// both site terms, cell attenuation), used as regression fixtures.
struct ReferenceCorrelation {
  std::string term;
  CorrelationModel model;
};
const std::vector<ReferenceCorrelation>& reference_correlation_models();

}  // namespace negmm
