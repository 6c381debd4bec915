#include "negmm/ifcorr.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace negmm {

double empirical_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("sample length mismatch");
  const int n = static_cast<int>(x.size());
  if (n < 4) throw std::invalid_argument("need at least 4 paired samples");
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0)
    throw std::invalid_argument("zero variance: correlation undefined");
  return sxy / (std::sqrt(sxx) * std::sqrt(syy));
}

std::pair<double, double> fisher_z(double rho, int n) {
  if (!(std::abs(rho) < 1.0))
    throw std::invalid_argument("|rho| = 1 has infinite z transform");
  if (n <= 3) throw std::invalid_argument("fisher z needs n > 3");
  return {std::atanh(rho), 1.0 / std::sqrt(static_cast<double>(n - 3))};
}

namespace {

double z_model(const Eigen::Vector4d& p, double fr) {
  return p[0] * std::exp(-p[1] * fr) + p[2] * std::exp(-p[3] * fr);
}

void z_jacobian(const Eigen::Vector4d& p, double fr, Eigen::Vector4d& j) {
  const double e1 = std::exp(-p[1] * fr);
  const double e2 = std::exp(-p[3] * fr);
  j[0] = e1;
  j[1] = -p[0] * fr * e1;
  j[2] = e2;
  j[3] = -p[2] * fr * e2;
}

}  // namespace

CorrelationFit fit_correlation_model(const EmpiricalCorr& emp) {
  std::vector<double> fr, z, w;
  std::set<long long> distinct;
  for (const auto& pt : emp.points) {
    if (!(pt.f1 > 0.0) || !(pt.f2 > 0.0))
      throw std::invalid_argument("non-positive frequency in correlation data");
    const double r = std::abs(std::log(pt.f1 / pt.f2));
    if (r == 0.0) continue;  // rho is pinned to 1 at zero separation
    fr.push_back(r);
    z.push_back(pt.z != 0.0 || pt.rho == 0.0 ? pt.z : std::atanh(pt.rho));
    const double sz = pt.sigma_z > 0.0
                          ? pt.sigma_z
                          : 1.0 / std::sqrt(std::max(4, pt.n) - 3.0);
    w.push_back(1.0 / (sz * sz));
    distinct.insert(static_cast<long long>(std::round(r * 1e9)));
  }
  if (distinct.size() < 8)
    throw std::invalid_argument("correlation fit needs >= 8 distinct f_r values");

  const int n = static_cast<int>(fr.size());
  const auto rss_of = [&](const Eigen::Vector4d& p) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double r = z[i] - z_model(p, fr[i]);
      s += w[i] * r * r;
    }
    return s;
  };

  double zmax = 0.0;
  for (double v : z) zmax = std::max(zmax, std::abs(v));
  if (zmax <= 0.0) zmax = 1.0;
  const std::vector<Eigen::Vector4d> starts = {
      {0.7 * zmax, 1.0, 0.3 * zmax, 10.0}, {0.5 * zmax, 0.5, 0.5 * zmax, 20.0},
      {1.0, 1.0, 1.0, 10.0},               {2.0, 0.8, 1.0, 20.0},
      {1.5, 2.0, 2.5, 60.0},               {1.0, 0.3, 0.3, 10.0},
      {0.5, 0.5, 0.2, 5.0},                {2.0, 0.5, 0.5, 30.0}};

  CorrelationFit fit;
  double best_rss = std::numeric_limits<double>::infinity();
  bool any_converged = false;

  for (const auto& start : starts) {
    Eigen::Vector4d p = start;
    double rss = rss_of(p);
    double lambda = 1e-3;
    bool converged = false;
    int it = 0;
    for (; it < 200; ++it) {
      Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
      Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
      Eigen::Vector4d jrow;
      for (int i = 0; i < n; ++i) {
        z_jacobian(p, fr[i], jrow);
        const double r = z[i] - z_model(p, fr[i]);
        jtj.noalias() += w[i] * jrow * jrow.transpose();
        jtr.noalias() += w[i] * r * jrow;
      }
      Eigen::Matrix4d damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::Vector4d step = damped.ldlt().solve(jtr);
      if (!step.allFinite()) break;
      const Eigen::Vector4d trial = p + step;
      const double trial_rss = rss_of(trial);
      if (std::isfinite(trial_rss) && trial_rss < rss) {
        const double drop = rss - trial_rss;
        p = trial;
        rss = trial_rss;
        lambda = std::max(1e-12, lambda / 10.0);
        if (drop < 1e-12 * (1.0 + rss) || step.norm() < 1e-10) {
          converged = true;
          break;
        }
      } else {
        lambda *= 10.0;
        if (lambda > 1e12) break;
      }
    }
    fit.starts.push_back({start, rss, converged, it});
    any_converged = any_converged || converged;
    if (converged && rss < best_rss) {
      best_rss = rss;
      fit.model = CorrelationModel{p[0], p[1], p[2], p[3]};
      fit.weighted_rss = rss;
    }
  }

  if (!any_converged) {
    std::ostringstream os;
    os << "correlation model fit did not converge from any start;";
    for (const auto& d : fit.starts)
      os << " [A0=" << d.start[0] << " rss=" << d.rss << " it=" << d.iterations << "]";
    throw std::runtime_error(os.str());
  }
  return fit;
}

double eval_correlation(const CorrelationModel& m, double f1, double f2) {
  if (!(f1 > 0.0) || !(f2 > 0.0))
    throw std::invalid_argument("frequencies must be positive");
  if (f1 == f2) return 1.0;
  const double fr = std::abs(std::log(f1 / f2));
  if (fr == 0.0) return 1.0;
  // stored coefficients are printed magnitudes; decay needs negative rates
  return std::tanh(m.a * std::exp(-m.b * fr) + m.c * std::exp(-m.d * fr));
}

Eigen::MatrixXd correlation_matrix(const CorrelationModel& m,
                                   std::span<const double> freqs) {
  const int n = static_cast<int>(freqs.size());
  Eigen::MatrixXd r(n, n);
  for (int i = 0; i < n; ++i) {
    r(i, i) = 1.0;
    for (int j = 0; j < i; ++j) {
      const double v = eval_correlation(m, freqs[i], freqs[j]);
      r(i, j) = v;
      r(j, i) = v;
    }
  }
  return r;
}

Eigen::MatrixXd repair_psd(const Eigen::MatrixXd& r, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r);
  if (eig.eigenvalues().minCoeff() >= 0.0) return r;
  const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(floor);
  Eigen::MatrixXd fixed =
      eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
  // renormalize to unit diagonal
  const Eigen::VectorXd d = fixed.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  fixed = d.asDiagonal() * fixed * d.asDiagonal();
  fixed = 0.5 * (fixed + fixed.transpose()).eval();
  return fixed;
}

Eigen::MatrixXd sample_correlated_terms(const CorrelationModel& m,
                                        std::span<const double> marginal_sds,
                                        std::span<const double> freqs, int n_samples,
                                        Rng& rng) {
  if (freqs.empty()) throw std::invalid_argument("need at least one frequency");
  if (marginal_sds.size() != freqs.size())
    throw std::invalid_argument("marginal sd count must match frequencies");
  const int f = static_cast<int>(freqs.size());
  const Eigen::MatrixXd r = repair_psd(correlation_matrix(m, freqs));
  Eigen::MatrixXd sigma(f, f);
  for (int i = 0; i < f; ++i)
    for (int j = 0; j < f; ++j) sigma(i, j) = r(i, j) * marginal_sds[i] * marginal_sds[j];

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  const Eigen::VectorXd scale = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd root = eig.eigenvectors() * scale.asDiagonal();

  Eigen::MatrixXd out(n_samples, f);
  Eigen::VectorXd zvec(f);
  for (int s = 0; s < n_samples; ++s) {
    for (int i = 0; i < f; ++i) zvec[i] = rng.normal();
    out.row(s) = (root * zvec).transpose();
  }
  return out;
}

const std::vector<ReferenceCorrelation>& reference_correlation_models() {
  static const std::vector<ReferenceCorrelation> table = {
      {"dc1e", {1.94, 0.77, 0.96, 19.49}},
      {"dc1a", {1.30, 0.92, 1.36, 30.85}},
      {"dc1b", {1.83, 1.86, 2.77, 63.96}},
      {"cca", {1.85, 0.41, 0.27, 10.00}},
  };
  return table;
}

}  // namespace negmm
