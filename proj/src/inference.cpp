#include "negmm/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "negmm/nuts.hpp"

namespace negmm {

void SamplerConfig::validate() const {
  if (chains < 1) throw std::invalid_argument("chains must be >= 1");
  if (warmup < 1) throw std::invalid_argument("warmup must be >= 1");
  if (draws < 1) throw std::invalid_argument("draws must be >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("target_accept must be in (0, 1)");
  if (max_tree_depth < 1) throw std::invalid_argument("max_tree_depth must be >= 1");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
}

int PosteriorSummary::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

double PosteriorSummary::mean_of(const std::string& name) const {
  const int i = index_of(name);
  if (i < 0) throw std::invalid_argument("no parameter named " + name);
  return means[i];
}

namespace {

// columns are chains, rows iterations
Eigen::MatrixXd split_chains(const Eigen::MatrixXd& by_chain) {
  const int n = static_cast<int>(by_chain.rows());
  const int m = static_cast<int>(by_chain.cols());
  const int half = n / 2;
  Eigen::MatrixXd out(half, 2 * m);
  for (int c = 0; c < m; ++c) {
    out.col(2 * c) = by_chain.col(c).head(half);
    out.col(2 * c + 1) = by_chain.col(c).segment(n - half, half);
  }
  return out;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * (v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - lo;
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

}  // namespace

double split_rhat(const Eigen::MatrixXd& by_chain) {
  const Eigen::MatrixXd s = split_chains(by_chain);
  const int n = static_cast<int>(s.rows());
  const int m = static_cast<int>(s.cols());
  if (n < 2) return 1.0;
  Eigen::VectorXd mean = s.colwise().mean();
  double w = 0.0;
  for (int c = 0; c < m; ++c)
    w += (s.col(c).array() - mean[c]).square().sum() / (n - 1);
  w /= m;
  const double grand = mean.mean();
  double b = 0.0;
  for (int c = 0; c < m; ++c) b += (mean[c] - grand) * (mean[c] - grand);
  b *= static_cast<double>(n) / (m - 1);
  if (w <= 0.0) return 1.0;
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

double effective_sample_size(const Eigen::MatrixXd& by_chain) {
  const Eigen::MatrixXd s = split_chains(by_chain);
  const int n = static_cast<int>(s.rows());
  const int m = static_cast<int>(s.cols());
  if (n < 4) return static_cast<double>(n) * m;
  const int max_lag = std::min(n - 1, 250);

  Eigen::VectorXd mean = s.colwise().mean();
  Eigen::VectorXd chain_var(m);
  Eigen::MatrixXd acov(max_lag + 1, m);
  for (int c = 0; c < m; ++c) {
    Eigen::VectorXd x = s.col(c).array() - mean[c];
    for (int t = 0; t <= max_lag; ++t) {
      double a = 0.0;
      for (int i = 0; i + t < n; ++i) a += x[i] * x[i + t];
      acov(t, c) = a / n;
    }
    chain_var[c] = acov(0, c) * n / (n - 1.0);
  }
  const double w = chain_var.mean();
  const double grand = mean.mean();
  double b = 0.0;
  for (int c = 0; c < m; ++c) b += (mean[c] - grand) * (mean[c] - grand);
  b *= m > 1 ? static_cast<double>(n) / (m - 1) : 0.0;
  const double var_plus = (n - 1.0) / n * w + (m > 1 ? b / n : 0.0);
  if (var_plus <= 0.0) return static_cast<double>(n) * m;

  // Geyer initial monotone positive sequence on the averaged correlations
  double tau = 1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (int t = 1; t + 1 <= max_lag; t += 2) {
    const double rho_a = 1.0 - (w - acov.row(t).mean()) / var_plus;
    const double rho_b = 1.0 - (w - acov.row(t + 1).mean()) / var_plus;
    double pair = rho_a + rho_b;
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  const double total = static_cast<double>(n) * m;
  return std::clamp(total / tau, 1.0, total);
}

namespace {

class PosteriorTarget final : public TargetDensity {
 public:
  explicit PosteriorTarget(const PosteriorDensity& d) : d_(d) {}
  int dim() const override { return d_.dim(); }
  double logp_grad(const Eigen::VectorXd& q, Eigen::VectorXd& g) const override {
    return d_.logp_grad(q, g);
  }

 private:
  const PosteriorDensity& d_;
};

}  // namespace

PosteriorSummary fit_frequency(const Dataset& data, int freq_index, Phase phase,
                               const SamplerConfig& cfg, const PriorConfig& pc,
                               const HyperParams* fixed_hyper) {
  cfg.validate();
  if (phase == Phase::one && (data.n_events() < 2 || data.n_stations() < 2))
    throw std::invalid_argument("phase 1 needs at least 2 events and 2 stations");

  PosteriorDensity density(data, freq_index, phase, pc, fixed_hyper);
  PosteriorTarget target(density);

  NutsOptions opt;
  opt.warmup = cfg.warmup;
  opt.draws = cfg.draws;
  opt.target_accept = cfg.target_accept;
  opt.max_tree_depth = cfg.max_tree_depth;

  const int n_par = static_cast<int>(density.constrained_names().size());
  PosteriorSummary out;
  out.freq = data.freqs.at(freq_index);
  out.phase = phase;
  out.n_events = data.n_events();
  out.n_stations = data.n_stations();
  out.n_cells = data.grid.ncells();
  out.names = density.constrained_names();
  out.chains = cfg.chains;
  out.draws.resize(cfg.chains * cfg.draws, n_par);

  std::vector<NutsResult> results(cfg.chains);
  const std::string tag =
      "fit/phase" + std::to_string(static_cast<int>(phase)) + "/f" +
      std::to_string(freq_index) + "/chain";
  for (int c = 0; c < cfg.chains; ++c) {
    Rng rng = Rng::substream(cfg.seed, tag + std::to_string(c));
    const Eigen::VectorXd q0 = density.initial_point(rng);
    results[c] = nuts_sample(target, q0, opt, rng);
  }

  long grads = 0;
  int divergences = 0;
  for (int c = 0; c < cfg.chains; ++c) {
    const Eigen::MatrixXd& u = results[c].draws;
    for (int i = 0; i < cfg.draws; ++i)
      out.draws.row(c * cfg.draws + i) = density.constrained(u.row(i).transpose());
    grads += results[c].n_grad_evals;
    divergences += results[c].divergences;
  }
  out.divergences = divergences;
  out.n_grad_evals = grads;
  out.step_size = results.back().step_size;

  out.means.resize(n_par);
  out.sds.resize(n_par);
  out.p05.resize(n_par);
  out.p95.resize(n_par);
  out.ess.resize(n_par);
  out.rhat.resize(n_par);
  Eigen::MatrixXd by_chain(cfg.draws, cfg.chains);
  for (int j = 0; j < n_par; ++j) {
    const auto col = out.draws.col(j);
    out.means[j] = col.mean();
    const double var =
        (col.array() - out.means[j]).square().sum() / std::max(1, int(col.size()) - 1);
    out.sds[j] = std::sqrt(var);
    std::vector<double> v(col.data(), col.data() + col.size());
    out.p05[j] = percentile(v, 0.05);
    out.p95[j] = percentile(v, 0.95);
    for (int c = 0; c < cfg.chains; ++c)
      by_chain.col(c) = out.draws.col(j).segment(c * cfg.draws, cfg.draws);
    out.rhat[j] = split_rhat(by_chain);
    out.ess[j] = effective_sample_size(by_chain);
  }

  // convergence gate over the sampled hyperparameters
  std::vector<std::string> gate = {"phi0", "tau0"};
  if (phase == Phase::one)
    for (const char* h : {"ell_1e", "omega_1e", "ell_1as", "omega_1as", "omega_1bs",
                          "ell_ca1", "omega_ca1", "omega_ca2"})
      gate.push_back(h);
  out.converged = true;
  for (const auto& g : gate) {
    const int j = out.index_of(g);
    if (j >= 0 && (!(out.rhat[j] < 1.05) || !(out.ess[j] >= 100.0)))
      out.converged = false;
  }
  return out;
}

namespace {

std::vector<PosteriorSummary> fit_many(const Dataset& data,
                                       std::span<const int> freq_indices, Phase phase,
                                       const SmoothedHyper* smoothed,
                                       const SamplerConfig& cfg, const PriorConfig& pc) {
  std::vector<PosteriorSummary> out(freq_indices.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  const int workers = std::max(1, std::min(cfg.workers, static_cast<int>(freq_indices.size())));
  auto work = [&]() {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= freq_indices.size()) return;
      try {
        const int fi = freq_indices[k];
        if (phase == Phase::one) {
          out[k] = fit_frequency(data, fi, Phase::one, cfg, pc, nullptr);
        } else {
          const HyperParams h = smoothed->at(data.freqs.at(fi));
          out[k] = fit_frequency(data, fi, Phase::two, cfg, pc, &h);
        }
      } catch (...) {
        std::scoped_lock lk(err_mu);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers - 1; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
  return out;
}

}  // namespace

std::vector<PosteriorSummary> fit_phase1(const Dataset& data,
                                         std::span<const int> freq_indices,
                                         const SamplerConfig& cfg,
                                         const PriorConfig& pc) {
  return fit_many(data, freq_indices, Phase::one, nullptr, cfg, pc);
}

std::vector<PosteriorSummary> fit_phase2(const Dataset& data,
                                         std::span<const int> freq_indices,
                                         const SmoothedHyper& smoothed,
                                         const SamplerConfig& cfg,
                                         const PriorConfig& pc) {
  return fit_many(data, freq_indices, Phase::two, &smoothed, cfg, pc);
}

MapResult map_laplace(const Dataset& data, int freq_index, Phase phase,
                      const PriorConfig& pc, const HyperParams* fixed_hyper,
                      int max_iter) {
  PosteriorDensity density(data, freq_index, phase, pc, fixed_hyper);
  const int n = density.dim();
  Rng rng = Rng::substream(0, "map-init");
  Eigen::VectorXd q = density.initial_point(rng);
  Eigen::VectorXd g(n);
  double f = density.logp_grad(q, g);
  if (!std::isfinite(f)) throw std::runtime_error("MAP: invalid initial state");

  // L-BFGS with backtracking on -logp
  const int mem = 10;
  std::vector<Eigen::VectorXd> s_hist, y_hist;
  std::vector<double> rho_hist;
  Eigen::VectorXd q_prev = q, g_prev = g;
  MapResult res;
  int it = 0;
  for (; it < max_iter; ++it) {
    // two-loop recursion, direction d = H * grad (ascent)
    Eigen::VectorXd d = g;
    std::vector<double> a(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      a[i] = rho_hist[i] * s_hist[i].dot(d);
      d -= a[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      d *= std::max(1e-8, gamma);
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double b = rho_hist[i] * y_hist[i].dot(d);
      d += (a[i] - b) * s_hist[i];
    }
    if (!d.allFinite() || d.dot(g) <= 0.0) d = g;

    double step = 1.0;
    double f_new = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd q_new, g_new(n);
    const double slope = d.dot(g);
    for (int ls = 0; ls < 40; ++ls) {
      q_new = q + step * d;
      f_new = density.logp_grad(q_new, g_new);
      if (std::isfinite(f_new) && f_new >= f + 1e-4 * step * slope) break;
      step *= 0.5;
    }
    if (!std::isfinite(f_new) || f_new <= f + 1e-12 * std::abs(f)) break;

    const Eigen::VectorXd s = q_new - q;
    const Eigen::VectorXd yv = -(g_new - g);  // gradient of -logp flips sign
    const double sy = s.dot(yv);
    if (sy > 1e-12) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > mem) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }
    q = q_new;
    g = g_new;
    f = f_new;
    if (g.norm() < 1e-6 * std::max(1.0, std::abs(f))) {
      res.converged = true;
      ++it;
      break;
    }
  }

  res.q = q;
  res.logp = f;
  res.iterations = it;
  res.params = density.unpack(q);
  res.hyper = density.hyper_of(q);

  // diagonal Laplace: central differences of the gradient
  const double h = 1e-4;
  Eigen::VectorXd hdiag(n), gp(n), gm(n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd qp = q, qm = q;
    qp[i] += h;
    qm[i] -= h;
    density.logp_grad(qp, gp);
    density.logp_grad(qm, gm);
    hdiag[i] = -(gp[i] - gm[i]) / (2 * h);  // curvature of -logp
  }
  Eigen::VectorXd sd_u =
      hdiag.array().max(1e-12).inverse().sqrt().matrix();
  // delta method through the constrained map
  const Eigen::VectorXd base = density.constrained(q);
  Eigen::VectorXd sd_c = Eigen::VectorXd::Zero(base.size());
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd qp = q;
    qp[i] += 1e-5;
    const Eigen::VectorXd shifted = density.constrained(qp);
    sd_c.array() +=
        ((shifted - base).array() / 1e-5 * sd_u[i]).square();
  }
  res.sd = sd_c.array().sqrt().matrix();
  return res;
}

}  // namespace negmm
