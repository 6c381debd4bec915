#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "negmm/inference.hpp"

namespace negmm {
namespace {

// piecewise-linear interpolation in ln f with constant extension
double interp_logf(const std::vector<double>& freqs, const std::vector<double>& vals,
                   double f) {
  if (freqs.empty()) throw std::invalid_argument("empty frequency table");
  if (freqs.size() == 1 || f <= freqs.front()) return vals.front();
  if (f >= freqs.back()) return vals.back();
  const double lf = std::log(f);
  for (std::size_t i = 1; i < freqs.size(); ++i) {
    if (f <= freqs[i]) {
      const double l0 = std::log(freqs[i - 1]), l1 = std::log(freqs[i]);
      const double t = (lf - l0) / (l1 - l0);
      return vals[i - 1] * (1.0 - t) + vals[i] * t;
    }
  }
  return vals.back();
}

std::vector<double> running_median(const std::vector<double>& v, int window) {
  const int n = static_cast<int>(v.size());
  const int half = window / 2;
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    std::vector<double> w(v.begin() + lo, v.begin() + hi + 1);
    std::sort(w.begin(), w.end());
    out[i] = w[w.size() / 2];
  }
  return out;
}

// pool-adjacent-violators: non-decreasing least-squares fit
std::vector<double> pava_nondecreasing(const std::vector<double>& y) {
  const int n = static_cast<int>(y.size());
  std::vector<double> level(y);
  std::vector<double> weight(n, 1.0);
  std::vector<int> len(n, 1);
  int m = 0;
  for (int i = 0; i < n; ++i) {
    level[m] = y[i];
    weight[m] = 1.0;
    len[m] = 1;
    while (m > 0 && level[m - 1] > level[m]) {
      level[m - 1] = (weight[m - 1] * level[m - 1] + weight[m] * level[m]) /
                     (weight[m - 1] + weight[m]);
      weight[m - 1] += weight[m];
      len[m - 1] += len[m];
      --m;
    }
    ++m;
  }
  std::vector<double> out;
  out.reserve(n);
  for (int b = 0; b < m; ++b)
    for (int k = 0; k < len[b]; ++k) out.push_back(level[b]);
  return out;
}

// continuous piecewise-linear least squares on a hat basis over ln f
std::vector<double> pwl_fit(const std::vector<double>& lf, const std::vector<double>& y,
                            std::vector<double> knots_lf,
                            const std::vector<double>& eval_lf) {
  const int n = static_cast<int>(lf.size());
  if (n == 0) return {};
  const double lo = *std::min_element(lf.begin(), lf.end());
  const double hi = *std::max_element(lf.begin(), lf.end());
  std::vector<double> ks{lo};
  for (double k : knots_lf)
    if (k > lo + 1e-12 && k < hi - 1e-12) ks.push_back(k);
  if (hi > lo + 1e-12) ks.push_back(hi);
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end(),
                       [](double a, double b) { return std::abs(a - b) < 1e-12; }),
           ks.end());
  const int nb = static_cast<int>(ks.size());
  if (nb < 2 || n < 2) {
    // too little structure; constant fit
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
    return std::vector<double>(eval_lf.size(), mean);
  }
  const auto hat = [&](int j, double x) {
    x = std::clamp(x, ks.front(), ks.back());
    if (j > 0 && x >= ks[j - 1] && x <= ks[j])
      return (x - ks[j - 1]) / (ks[j] - ks[j - 1]);
    if (j + 1 < nb && x >= ks[j] && x <= ks[j + 1])
      return (ks[j + 1] - x) / (ks[j + 1] - ks[j]);
    return 0.0;
  };
  Eigen::MatrixXd a(n, nb);
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) {
    rhs[i] = y[i];
    for (int j = 0; j < nb; ++j) a(i, j) = hat(j, lf[i]);
  }
  // light ridge keeps under-determined knot layouts solvable
  Eigen::MatrixXd ata = a.transpose() * a;
  ata.diagonal().array() += 1e-10;
  const Eigen::VectorXd coef = ata.ldlt().solve(a.transpose() * rhs);
  std::vector<double> out(eval_lf.size());
  for (std::size_t i = 0; i < eval_lf.size(); ++i) {
    double v = 0.0;
    for (int j = 0; j < nb; ++j) v += coef[j] * hat(j, eval_lf[i]);
    out[i] = v;
  }
  return out;
}

}  // namespace

HyperParams SmoothedHyper::at(double freq) const {
  HyperParams h;
  h.ell_1e = interp_logf(freqs, ell_1e, freq);
  h.omega_1e = interp_logf(freqs, omega_1e, freq);
  h.ell_1as = interp_logf(freqs, ell_1as, freq);
  h.omega_1as = interp_logf(freqs, omega_1as, freq);
  h.omega_1bs = interp_logf(freqs, omega_1bs, freq);
  h.ell_ca1 = interp_logf(freqs, ell_ca1, freq);
  h.omega_ca1 = interp_logf(freqs, omega_ca1, freq);
  h.omega_ca2 = interp_logf(freqs, omega_ca2, freq);
  return h;
}

SmoothedHyper SmoothedHyper::constant(const HyperParams& h, std::vector<double> freqs) {
  SmoothedHyper s;
  s.freqs = std::move(freqs);
  const std::size_t n = s.freqs.size();
  s.ell_1e.assign(n, h.ell_1e);
  s.omega_1e.assign(n, h.omega_1e);
  s.ell_1as.assign(n, h.ell_1as);
  s.omega_1as.assign(n, h.omega_1as);
  s.omega_1bs.assign(n, h.omega_1bs);
  s.ell_ca1.assign(n, h.ell_ca1);
  s.omega_ca1.assign(n, h.omega_ca1);
  s.omega_ca2.assign(n, h.omega_ca2);
  return s;
}

SmoothedHyper smooth_hyperparameters(std::span<const PosteriorSummary> phase1,
                                     const SmoothingRules& rules) {
  if (phase1.size() < 3)
    throw std::invalid_argument("hyperparameter smoothing needs >= 3 fitted frequencies");

  std::vector<const PosteriorSummary*> sorted;
  for (const auto& s : phase1) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* a, const auto* b) { return a->freq < b->freq; });

  const std::size_t nf = sorted.size();
  SmoothedHyper out;
  out.freqs.resize(nf);
  std::vector<double> m_ell1e(nf), m_om1e(nf), m_ell1a(nf), m_om1a(nf), m_om1b(nf),
      m_ellca(nf), m_omca1(nf), m_omca2(nf), lf(nf);
  for (std::size_t i = 0; i < nf; ++i) {
    const auto& s = *sorted[i];
    out.freqs[i] = s.freq;
    lf[i] = std::log(s.freq);
    m_ell1e[i] = s.mean_of("ell_1e");
    m_om1e[i] = s.mean_of("omega_1e");
    m_ell1a[i] = s.mean_of("ell_1as");
    m_om1a[i] = s.mean_of("omega_1as");
    m_om1b[i] = s.mean_of("omega_1bs");
    m_ellca[i] = s.mean_of("ell_ca1");
    m_omca1[i] = s.mean_of("omega_ca1");
    m_omca2[i] = s.mean_of("omega_ca2");
  }

  // (a) source terms: frequency average
  const double avg_ell1e =
      std::accumulate(m_ell1e.begin(), m_ell1e.end(), 0.0) / nf;
  const double avg_om1e = std::accumulate(m_om1e.begin(), m_om1e.end(), 0.0) / nf;
  out.ell_1e.assign(nf, avg_ell1e);
  out.omega_1e.assign(nf, avg_om1e);

  // (b) omega_1a: piecewise-linear fit below the break; beyond it the excess
  // source variability moves into the site term as a root-sum-square
  std::vector<double> fit_lf, fit_y;
  for (std::size_t i = 0; i < nf; ++i) {
    if (out.freqs[i] <= rules.omega1a_break_hz) {
      fit_lf.push_back(lf[i]);
      fit_y.push_back(m_om1a[i]);
    }
  }
  if (fit_lf.empty()) {
    fit_lf = lf;
    fit_y = m_om1a;
  }
  std::vector<double> knots;
  for (double k : rules.omega1a_knots_hz) knots.push_back(std::log(k));
  std::vector<double> pwl = pwl_fit(fit_lf, fit_y, knots, lf);
  out.omega_1as.resize(nf);
  for (std::size_t i = 0; i < nf; ++i) {
    if (out.freqs[i] <= rules.omega1a_break_hz) {
      out.omega_1as[i] = pwl[i];
    } else {
      const double excess = std::max(0.0, m_om1e[i] - avg_om1e);
      out.omega_1as[i] = std::sqrt(pwl[i] * pwl[i] + excess * excess);
    }
  }

  // (c) light smoothing
  out.ell_1as = running_median(m_ell1a, rules.median_window);
  out.omega_1bs = running_median(m_om1b, rules.median_window);

  // (d) cell correlation length: average of the well-constrained estimates
  double sum = 0.0;
  int count = 0;
  for (double v : m_ellca)
    if (v < rules.ell_ca_cap_km) {
      sum += v;
      ++count;
    }
  double ellca;
  if (count > 0) {
    ellca = sum / count;
  } else {
    ellca = std::accumulate(m_ellca.begin(), m_ellca.end(), 0.0) / nf;
    out.warnings.push_back("all ell_ca1 means >= cap; falling back to global mean");
  }
  out.ell_ca1.assign(nf, ellca);

  // (e) monotone piecewise-linear in log frequency
  out.omega_ca1 = pava_nondecreasing(m_omca1);
  out.omega_ca2 = pava_nondecreasing(m_omca2);

  return out;
}

}  // namespace negmm
