#include "negmm/model.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "negmm/kernels.hpp"
#include "negmm/simd.hpp"

namespace negmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double ln_invgamma(double x, double alpha, double beta) {
  return alpha * std::log(beta) - std::lgamma(alpha) - (alpha + 1.0) * std::log(x) -
         beta / x;
}

double ln_exponential(double x, double rate) { return std::log(rate) - rate * x; }

double ln_lognormal(double x, double mu, double sd) {
  const double z = (std::log(x) - mu) / sd;
  return -std::log(x) - std::log(sd) - 0.5 * kLog2Pi - 0.5 * z * z;
}

double ln_normal(double x, double sd) {
  return -0.5 * (x / sd) * (x / sd) - std::log(sd) - 0.5 * kLog2Pi;
}

// exp(-D/ell) + jitter on the diagonal, assembled over the stored distance
// matrix through the SIMD backend.
Eigen::MatrixXd corr_from_dist(const Eigen::MatrixXd& d, double ell, double jitter) {
  Eigen::MatrixXd c(d.rows(), d.cols());
  simd::scaled_exp_neg(d.data(), c.data(), static_cast<std::size_t>(d.size()),
                       1.0 / ell, 1.0);
  c.diagonal().array() += jitter;
  return c;
}

// Cholesky with jitter escalation; returns false if the factorization cannot
// be stabilized.
bool chol_with_escalation(Eigen::MatrixXd k, double scale, Eigen::MatrixXd& lower) {
  double jitter = 0.0;
  for (int attempt = 0; attempt < 6; ++attempt) {
    Eigen::MatrixXd trial = k;
    if (jitter > 0.0) trial.diagonal().array() += jitter * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(trial);
    if (llt.info() == Eigen::Success) {
      lower = llt.matrixL();
      return true;
    }
    jitter = jitter == 0.0 ? 1e-8 : jitter * 10.0;
  }
  return false;
}

Eigen::MatrixXd pairwise_dist(const std::vector<XY>& pts) {
  const int n = static_cast<int>(pts.size());
  Eigen::MatrixXd d(n, n);
  for (int i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (int j = 0; j < i; ++j) {
      const double v = distance(pts[i], pts[j]);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

// Lower-triangular half with halved diagonal; the directional derivative of a
// Cholesky factor is L * phi(L^-1 dK L^-T).
void phi_inplace(Eigen::MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  for (int j = 0; j < n; ++j) {
    m(j, j) *= 0.5;
    for (int i = 0; i < j; ++i) m(i, j) = 0.0;
  }
}

}  // namespace

int Dataset::freq_index(double f) const {
  for (std::size_t i = 0; i < freqs.size(); ++i)
    if (std::abs(freqs[i] - f) <= 1e-9 * std::max(1.0, std::abs(f)))
      return static_cast<int>(i);
  std::ostringstream os;
  os << "frequency " << f << " Hz not fitted; available:";
  for (double g : freqs) os << ' ' << g;
  throw std::invalid_argument(os.str());
}

std::vector<XY> Dataset::event_xy() const {
  std::vector<XY> v;
  v.reserve(events.size());
  for (const auto& e : events) v.push_back(e.xy);
  return v;
}

std::vector<XY> Dataset::station_xy() const {
  std::vector<XY> v;
  v.reserve(stations.size());
  for (const auto& s : stations) v.push_back(s.xy);
  return v;
}

Region dc0e_selector(double mag, Region region, double freq, const PriorConfig& pc) {
  if (mag >= pc.mask_mag_max || freq >= pc.mask_freq_max) return Region::none;
  return region;
}

double median_nonergodic(const Dataset& data, int record, const ModelParams& p,
                         double freq, const PriorConfig& pc) {
  const Record& rec = data.records.at(record);
  const EventInfo& ev = data.events.at(rec.event);
  double m = p.dc0;
  switch (dc0e_selector(ev.mag, ev.region, freq, pc)) {
    case Region::north: m += p.dc0e_north; break;
    case Region::south: m += p.dc0e_south; break;
    case Region::none: break;
  }
  if (rec.event >= p.dc1e.size()) throw std::out_of_range("event index beyond dc1e");
  if (rec.station >= p.dc1a.size() || rec.station >= p.dc1b.size())
    throw std::out_of_range("station index beyond dc1a/dc1b");
  m += p.dc1e[rec.event] + p.dc1a[rec.station] + p.dc1b[rec.station];
  const auto cells = data.segments.row_cells(record);
  const auto vals = data.segments.row_values(record);
  for (std::size_t k = 0; k < cells.size(); ++k) m += p.c_ca[cells[k]] * vals[k];
  return m;
}

double log_likelihood(const Dataset& data, int freq_index, const ModelParams& p,
                      const PriorConfig& pc) {
  const int n = data.n_records();
  const double freq = data.freqs.at(freq_index);
  Eigen::VectorXd pred(n);
  for (int r = 0; r < n; ++r)
    pred[r] = median_nonergodic(data, r, p, freq, pc) + p.dB[data.records[r].event];
  const double ss = simd::sumsq_diff(data.residuals.col(freq_index).data(),
                                     pred.data(), static_cast<std::size_t>(n));
  return -n * std::log(p.phi0) - 0.5 * n * kLog2Pi - ss / (2.0 * p.phi0 * p.phi0);
}

double log_posterior(const Dataset& data, int freq_index, const ModelParams& p,
                     const HyperParams& h, Phase phase, const PriorConfig& pc) {
  if (!(p.phi0 > 0.0) || !(p.tau0 > 0.0))
    throw std::invalid_argument("phi0 and tau0 must be positive");
  if ((p.c_ca.array() > 0.0).any()) return kNegInf;

  double lp = log_likelihood(data, freq_index, p, pc);

  const auto mvn_zero = [&](const Eigen::VectorXd& x, const Eigen::MatrixXd& k) {
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("covariance factorization failure at frequency " +
                               std::to_string(data.freqs[freq_index]) + " Hz");
    const Eigen::VectorXd alpha = llt.solve(x);
    double logdet = 0.0;
    for (int i = 0; i < k.rows(); ++i) logdet += std::log(llt.matrixL()(i, i));
    return -0.5 * x.dot(alpha) - logdet - 0.5 * x.size() * kLog2Pi;
  };

  KernelSpec ke{KernelFamily::exponential, h.omega_1e, h.ell_1e, 0.0};
  KernelSpec ka{KernelFamily::exponential, h.omega_1as, h.ell_1as, 0.0};
  KernelSpec kc{KernelFamily::exponential_plus_nugget, h.omega_ca1, h.ell_ca1,
                h.omega_ca2};
  const auto ev_xy = data.event_xy();
  const auto st_xy = data.station_xy();
  const auto mids = data.grid.midpoints();
  lp += mvn_zero(p.dc1e, cov_matrix(ke, ev_xy, pc.jitter_rel));
  lp += mvn_zero(p.dc1a, cov_matrix(ka, st_xy, pc.jitter_rel));
  const double c7 = data.c7.at(freq_index);
  lp += mvn_zero((p.c_ca.array() - c7).matrix(), cov_matrix(kc, mids, pc.jitter_rel));
  for (int s = 0; s < p.dc1b.size(); ++s) lp += ln_normal(p.dc1b[s], h.omega_1bs);
  for (int e = 0; e < p.dB.size(); ++e) lp += ln_normal(p.dB[e], p.tau0);
  lp += ln_normal(p.dc0, pc.dc0_sd);
  lp += ln_normal(p.dc0e_north, pc.dc0e_sd) + ln_normal(p.dc0e_south, pc.dc0e_sd);

  if (phase == Phase::one) {
    lp += ln_invgamma(h.ell_1e, pc.ell_invgamma_alpha, pc.ell_invgamma_beta);
    lp += ln_invgamma(h.ell_1as, pc.ell_invgamma_alpha, pc.ell_invgamma_beta);
    lp += ln_invgamma(h.ell_ca1, pc.ell_invgamma_alpha, pc.ell_invgamma_beta);
    lp += ln_exponential(h.omega_1e, pc.omega_exp_rate);
    lp += ln_exponential(h.omega_1as, pc.omega_exp_rate);
    lp += ln_exponential(h.omega_ca1, pc.omega_exp_rate);
    lp += ln_exponential(h.omega_ca2, pc.omega_exp_rate);
    lp += ln_lognormal(h.omega_1bs, pc.omega1b_ln_mu, pc.omega1b_ln_sd);
  }
  lp += ln_lognormal(p.phi0, pc.phi0_ln_mu, pc.phi0_ln_sd);
  lp += ln_lognormal(p.tau0, pc.tau0_ln_mu, pc.tau0_ln_sd);
  return lp;
}

// ---------------------------------------------------------------------------

struct PosteriorDensity::Impl {
  const Dataset& data;
  int fidx;
  double freq;
  Phase phase;
  PriorConfig pc;
  HyperParams fixed;  // used in phase 2

  int E, S, C, N;
  Eigen::VectorXd y;
  std::vector<int> mask;  // 0 none, 1 north, 2 south
  Eigen::MatrixXd dist_e, dist_s, dist_c;
  double c7;

  // phase-2 cached factors
  Eigen::MatrixXd Lce2, Lcs2, Lca2;
  double logdet_Lca2 = 0.0;

  // offsets into q
  int off_z1e, off_z1a, off_z1b, off_u, off_zB, off_hyp, off_phi;
  int dim;

  std::vector<std::string> names;

  Impl(const Dataset& d, int fi, Phase ph, const PriorConfig& p, const HyperParams* fh)
      : data(d), fidx(fi), freq(d.freqs.at(fi)), phase(ph), pc(p) {
    if (ph == Phase::two) {
      if (!fh) throw std::invalid_argument("phase 2 requires fixed hyperparameters");
      fixed = *fh;
    }
    E = d.n_events();
    S = d.n_stations();
    C = d.grid.ncells();
    N = d.n_records();
    if (E < 1 || S < 1 || N < 1) throw std::invalid_argument("empty dataset");
    if (static_cast<int>(d.segments.rows()) != N)
      throw std::invalid_argument("segment matrix rows do not match records");
    y = d.residuals.col(fidx);
    c7 = d.c7.at(fidx);
    mask.resize(N);
    for (int r = 0; r < N; ++r) {
      const EventInfo& ev = d.events[d.records[r].event];
      mask[r] = static_cast<int>(dc0e_selector(ev.mag, ev.region, freq, pc));
    }
    dist_e = pairwise_dist(d.event_xy());
    dist_s = pairwise_dist(d.station_xy());
    dist_c = pairwise_dist(d.grid.midpoints());

    off_z1e = 3;
    off_z1a = off_z1e + E;
    off_z1b = off_z1a + S;
    off_u = off_z1b + S;
    off_zB = off_u + C;
    off_hyp = off_zB + E;
    const int nhyp = ph == Phase::one ? 8 : 0;
    off_phi = off_hyp + nhyp;
    dim = off_phi + 2;

    if (ph == Phase::two) {
      if (!chol_with_escalation(corr_from_dist(dist_e, fixed.ell_1e, pc.jitter_rel),
                                1.0, Lce2) ||
          !chol_with_escalation(corr_from_dist(dist_s, fixed.ell_1as, pc.jitter_rel),
                                1.0, Lcs2))
        throw std::runtime_error("covariance factorization failure at frequency " +
                                 std::to_string(freq) + " Hz");
      Eigen::MatrixXd kca =
          fixed.omega_ca1 * fixed.omega_ca1 *
          corr_from_dist(dist_c, fixed.ell_ca1, pc.jitter_rel);
      kca.diagonal().array() += fixed.omega_ca2 * fixed.omega_ca2;
      if (!chol_with_escalation(std::move(kca), fixed.omega_ca1 * fixed.omega_ca1,
                                Lca2))
        throw std::runtime_error("cell covariance factorization failure at frequency " +
                                 std::to_string(freq) + " Hz");
      logdet_Lca2 = Lca2.diagonal().array().log().sum();
    }

    names = {"dc0", "dc0e_north", "dc0e_south"};
    for (const auto& e : d.events) names.push_back("dc1e[" + e.id + "]");
    for (const auto& s : d.stations) names.push_back("dc1a[" + s.id + "]");
    for (const auto& s : d.stations) names.push_back("dc1b[" + s.id + "]");
    for (int c = 0; c < C; ++c) names.push_back("c_ca[" + std::to_string(c) + "]");
    for (const auto& e : d.events) names.push_back("dB[" + e.id + "]");
    if (ph == Phase::one)
      for (const char* h : {"ell_1e", "omega_1e", "ell_1as", "omega_1as", "omega_1bs",
                            "ell_ca1", "omega_ca1", "omega_ca2"})
        names.push_back(h);
    names.push_back("phi0");
    names.push_back("tau0");
  }

  HyperParams hyper_from(const Eigen::VectorXd& q) const {
    if (phase == Phase::two) return fixed;
    HyperParams h;
    const double* x = q.data() + off_hyp;
    h.ell_1e = std::exp(x[0]);
    h.omega_1e = std::exp(x[1]);
    h.ell_1as = std::exp(x[2]);
    h.omega_1as = std::exp(x[3]);
    h.omega_1bs = std::exp(x[4]);
    h.ell_ca1 = std::exp(x[5]);
    h.omega_ca1 = std::exp(x[6]);
    h.omega_ca2 = std::exp(x[7]);
    return h;
  }

  bool state_ok(const Eigen::VectorXd& q) const {
    if (!q.allFinite()) return false;
    for (int i = off_u; i < off_u + C; ++i)
      if (q[i] > 40.0) return false;
    for (int i = off_hyp; i < dim; ++i)
      if (std::abs(q[i]) > 30.0) return false;
    return true;
  }
};

PosteriorDensity::PosteriorDensity(const Dataset& data, int freq_index, Phase phase,
                                   const PriorConfig& pc, const HyperParams* fh)
    : impl_(std::make_unique<Impl>(data, freq_index, phase, pc, fh)) {}

PosteriorDensity::~PosteriorDensity() = default;

int PosteriorDensity::dim() const { return impl_->dim; }
double PosteriorDensity::freq() const { return impl_->freq; }
Phase PosteriorDensity::phase() const { return impl_->phase; }
const std::vector<std::string>& PosteriorDensity::constrained_names() const {
  return impl_->names;
}

double PosteriorDensity::logp_grad(const Eigen::VectorXd& q,
                                   Eigen::VectorXd& grad) const {
  const Impl& im = *impl_;
  grad.setZero(im.dim);
  if (q.size() != im.dim) throw std::invalid_argument("state dimension mismatch");
  if (!im.state_ok(q)) return kNegInf;

  const PriorConfig& pc = im.pc;
  const HyperParams h = im.hyper_from(q);
  const double phi0 = std::exp(q[im.off_phi]);
  const double tau0 = std::exp(q[im.off_phi + 1]);
  if (!std::isfinite(phi0) || !std::isfinite(tau0) || phi0 <= 0.0 || tau0 <= 0.0)
    return kNegInf;

  const double dc0 = q[0], dc0e_n = q[1], dc0e_s = q[2];
  const auto z1e = q.segment(im.off_z1e, im.E);
  const auto z1a = q.segment(im.off_z1a, im.S);
  const auto z1b = q.segment(im.off_z1b, im.S);
  const auto u = q.segment(im.off_u, im.C);
  const auto zB = q.segment(im.off_zB, im.E);

  // factors (phase 1 rebuilds every call; phase 2 uses cached)
  Eigen::MatrixXd Lce, Lcs, Lca;
  Eigen::MatrixXd corr_c;  // cell correlation, kept for hyper gradients
  if (im.phase == Phase::one) {
    if (!chol_with_escalation(corr_from_dist(im.dist_e, h.ell_1e, pc.jitter_rel), 1.0,
                              Lce))
      return kNegInf;
    if (!chol_with_escalation(corr_from_dist(im.dist_s, h.ell_1as, pc.jitter_rel), 1.0,
                              Lcs))
      return kNegInf;
    corr_c = corr_from_dist(im.dist_c, h.ell_ca1, pc.jitter_rel);
    Eigen::MatrixXd kca = h.omega_ca1 * h.omega_ca1 * corr_c;
    kca.diagonal().array() += h.omega_ca2 * h.omega_ca2;
    if (!chol_with_escalation(std::move(kca), h.omega_ca1 * h.omega_ca1, Lca))
      return kNegInf;
  }
  const Eigen::MatrixXd& Le = im.phase == Phase::one ? Lce : im.Lce2;
  const Eigen::MatrixXd& Ls = im.phase == Phase::one ? Lcs : im.Lcs2;
  const Eigen::MatrixXd& La = im.phase == Phase::one ? Lca : im.Lca2;

  const Eigen::VectorXd lez = Le.triangularView<Eigen::Lower>() * z1e;
  const Eigen::VectorXd lsz = Ls.triangularView<Eigen::Lower>() * z1a;
  const Eigen::VectorXd dc1e = h.omega_1e * lez;
  const Eigen::VectorXd dc1a = h.omega_1as * lsz;
  const Eigen::VectorXd dc1b = h.omega_1bs * z1b;
  const Eigen::VectorXd cca = (-u.array().exp()).matrix();
  const Eigen::VectorXd dB = tau0 * zB;

  // likelihood pass
  Eigen::VectorXd res(im.N);
  for (int r = 0; r < im.N; ++r) {
    const Record& rec = im.data.records[r];
    double m = dc0;
    if (im.mask[r] == 1) m += dc0e_n;
    if (im.mask[r] == 2) m += dc0e_s;
    m += dc1e[rec.event] + dc1a[rec.station] + dc1b[rec.station];
    const auto cells = im.data.segments.row_cells(r);
    const auto vals = im.data.segments.row_values(r);
    for (std::size_t k = 0; k < cells.size(); ++k) m += cca[cells[k]] * vals[k];
    res[r] = im.y[r] - m - dB[rec.event];
  }
  const double sumsq = simd::sumsq(res.data(), static_cast<std::size_t>(im.N));
  double lp = -im.N * std::log(phi0) - 0.5 * im.N * kLog2Pi -
              sumsq / (2.0 * phi0 * phi0);

  // likelihood gradient scatter
  const double inv_phi2 = 1.0 / (phi0 * phi0);
  Eigen::VectorXd GB = Eigen::VectorXd::Zero(im.E);
  Eigen::VectorXd GS = Eigen::VectorXd::Zero(im.S);
  Eigen::VectorXd Gc = Eigen::VectorXd::Zero(im.C);
  double gsum = 0.0, gnorth = 0.0, gsouth = 0.0;
  for (int r = 0; r < im.N; ++r) {
    const Record& rec = im.data.records[r];
    const double g = res[r] * inv_phi2;
    gsum += g;
    if (im.mask[r] == 1) gnorth += g;
    if (im.mask[r] == 2) gsouth += g;
    GB[rec.event] += g;
    GS[rec.station] += g;
    const auto cells = im.data.segments.row_cells(r);
    const auto vals = im.data.segments.row_values(r);
    for (std::size_t k = 0; k < cells.size(); ++k) Gc[cells[k]] += g * vals[k];
  }

  // latent-normal priors
  lp += -0.5 * (z1e.squaredNorm() + z1a.squaredNorm() + z1b.squaredNorm() +
                zB.squaredNorm()) -
        0.5 * (2 * im.E + 2 * im.S) * kLog2Pi;

  // cell prior: MVN(c7, K_ca) on the bound-transformed coefficients plus the
  // transform Jacobian sum(u)
  const Eigen::VectorXd cdev = (cca.array() - im.c7).matrix();
  Eigen::VectorXd alpha = La.triangularView<Eigen::Lower>().solve(cdev);
  const double quad_ca = alpha.squaredNorm();  // (c-mu)' K^-1 (c-mu)
  La.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha);
  const double logdet_La = im.phase == Phase::one
                               ? La.diagonal().array().log().sum()
                               : im.logdet_Lca2;
  lp += -0.5 * quad_ca - logdet_La - 0.5 * im.C * kLog2Pi + u.sum();

  // scalar priors
  lp += ln_normal(dc0, pc.dc0_sd) + ln_normal(dc0e_n, pc.dc0e_sd) +
        ln_normal(dc0e_s, pc.dc0e_sd);

  // gradients: location parameters
  grad[0] = gsum - dc0 / (pc.dc0_sd * pc.dc0_sd);
  grad[1] = gnorth - dc0e_n / (pc.dc0e_sd * pc.dc0e_sd);
  grad[2] = gsouth - dc0e_s / (pc.dc0e_sd * pc.dc0e_sd);
  const Eigen::VectorXd lt_gb = Le.triangularView<Eigen::Lower>().transpose() * GB;
  const Eigen::VectorXd lt_gs = Ls.triangularView<Eigen::Lower>().transpose() * GS;
  grad.segment(im.off_z1e, im.E) = h.omega_1e * lt_gb - z1e;
  grad.segment(im.off_z1a, im.S) = h.omega_1as * lt_gs - z1a;
  grad.segment(im.off_z1b, im.S) = h.omega_1bs * GS - z1b;
  grad.segment(im.off_u, im.C) =
      ((Gc - alpha).array() * cca.array() + 1.0).matrix();
  grad.segment(im.off_zB, im.E) = tau0 * GB - zB;

  // hyperparameter block
  if (im.phase == Phase::one) {
    const double ig_a = pc.ell_invgamma_alpha, ig_b = pc.ell_invgamma_beta;
    const double rate = pc.omega_exp_rate;
    double* gh = grad.data() + im.off_hyp;

    // correlation-length gradient of a non-centered GP term:
    // d(dc)/d(ell) = omega * L * phi(L^-1 C' L^-T) * z
    const auto ell_term = [&](const Eigen::MatrixXd& L, const Eigen::MatrixXd& dist,
                              double ell, const Eigen::VectorXd& z,
                              const Eigen::VectorXd& gvec, double omega) {
      const int n = static_cast<int>(dist.rows());
      Eigen::MatrixXd cp(n, n);
      simd::scaled_exp_neg(dist.data(), cp.data(), static_cast<std::size_t>(dist.size()),
                           1.0 / ell, 1.0);
      cp.array() *= dist.array() / (ell * ell);
      Eigen::MatrixXd t1 = L.triangularView<Eigen::Lower>().solve(cp);
      Eigen::MatrixXd m =
          L.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd(t1.transpose()));
      phi_inplace(m);
      const Eigen::VectorXd v = L.triangularView<Eigen::Lower>() * (m * z);
      return omega * gvec.dot(v);
    };

    lp += ln_invgamma(h.ell_1e, ig_a, ig_b) + std::log(h.ell_1e);
    gh[0] = h.ell_1e * ell_term(Le, im.dist_e, h.ell_1e, z1e, GB, h.omega_1e) -
            ig_a + ig_b / h.ell_1e;

    lp += ln_exponential(h.omega_1e, rate) + std::log(h.omega_1e);
    gh[1] = GB.dot(dc1e) + 1.0 - rate * h.omega_1e;

    lp += ln_invgamma(h.ell_1as, ig_a, ig_b) + std::log(h.ell_1as);
    gh[2] = h.ell_1as * ell_term(Ls, im.dist_s, h.ell_1as, z1a, GS, h.omega_1as) -
            ig_a + ig_b / h.ell_1as;

    lp += ln_exponential(h.omega_1as, rate) + std::log(h.omega_1as);
    gh[3] = GS.dot(dc1a) + 1.0 - rate * h.omega_1as;

    lp += ln_lognormal(h.omega_1bs, pc.omega1b_ln_mu, pc.omega1b_ln_sd) +
          std::log(h.omega_1bs);
    gh[4] = GS.dot(dc1b) -
            (std::log(h.omega_1bs) - pc.omega1b_ln_mu) /
                (pc.omega1b_ln_sd * pc.omega1b_ln_sd);

    // cell-kernel hyper gradients need K^-1 traces
    Eigen::MatrixXd linv = Eigen::MatrixXd::Identity(im.C, im.C);
    La.triangularView<Eigen::Lower>().solveInPlace(linv);
    const double tr_kinv = linv.squaredNorm();
    const double om1 = h.omega_ca1, om2 = h.omega_ca2;
    const double om1sq = om1 * om1, om2sq = om2 * om2;
    // alpha' (C + jI) alpha and tr(K^-1 (C + jI)) via K = om1^2(C+jI) + om2^2 I
    const double alpha_sq = alpha.squaredNorm();
    const double quad_corr = (quad_ca - om2sq * alpha_sq) / om1sq;
    const double tr_corr = (im.C - om2sq * tr_kinv) / om1sq;

    // correlation-length derivative: B = om1^2 * (C o D / ell^2)
    Eigen::MatrixXd cpc(im.C, im.C);
    simd::scaled_exp_neg(im.dist_c.data(), cpc.data(),
                         static_cast<std::size_t>(im.dist_c.size()),
                         1.0 / h.ell_ca1, 1.0);
    cpc.array() *= im.dist_c.array() / (h.ell_ca1 * h.ell_ca1);
    const double alpha_cp_alpha = alpha.dot(cpc * alpha);
    // tr(K^-1 C') = tr(L^-1 C' L^-T) = sum over rows of (L^-1 C') o L^-1
    Eigen::MatrixXd t1 = La.triangularView<Eigen::Lower>().solve(cpc);
    const double tr_kinv_cp = (t1.array() * linv.array()).sum();

    lp += ln_invgamma(h.ell_ca1, ig_a, ig_b) + std::log(h.ell_ca1);
    gh[5] = h.ell_ca1 * 0.5 * om1sq * (alpha_cp_alpha - tr_kinv_cp) - ig_a +
            ig_b / h.ell_ca1;

    lp += ln_exponential(om1, rate) + std::log(om1);
    gh[6] = om1sq * (quad_corr - tr_corr) + 1.0 - rate * om1;

    lp += ln_exponential(om2, rate) + std::log(om2);
    gh[7] = om2sq * (alpha_sq - tr_kinv) + 1.0 - rate * om2;
  }

  // phi0, tau0 (log space, lognormal priors)
  const double xphi = q[im.off_phi], xtau = q[im.off_phi + 1];
  lp += -0.5 * (xphi - pc.phi0_ln_mu) * (xphi - pc.phi0_ln_mu) /
            (pc.phi0_ln_sd * pc.phi0_ln_sd) -
        std::log(pc.phi0_ln_sd) - 0.5 * kLog2Pi;
  lp += -0.5 * (xtau - pc.tau0_ln_mu) * (xtau - pc.tau0_ln_mu) /
            (pc.tau0_ln_sd * pc.tau0_ln_sd) -
        std::log(pc.tau0_ln_sd) - 0.5 * kLog2Pi;
  grad[im.off_phi] = -im.N + sumsq * inv_phi2 -
                     (xphi - pc.phi0_ln_mu) / (pc.phi0_ln_sd * pc.phi0_ln_sd);
  grad[im.off_phi + 1] = tau0 * GB.dot(zB) -
                         (xtau - pc.tau0_ln_mu) / (pc.tau0_ln_sd * pc.tau0_ln_sd);

  if (!std::isfinite(lp)) {
    grad.setZero();
    return kNegInf;
  }
  return lp;
}

double PosteriorDensity::logp(const Eigen::VectorXd& q) const {
  Eigen::VectorXd g;
  return logp_grad(q, g);
}

ModelParams PosteriorDensity::unpack(const Eigen::VectorXd& q) const {
  const Impl& im = *impl_;
  const HyperParams h = im.hyper_from(q);
  ModelParams p;
  p.dc0 = q[0];
  p.dc0e_north = q[1];
  p.dc0e_south = q[2];
  Eigen::MatrixXd Le, Ls;
  if (im.phase == Phase::one) {
    if (!chol_with_escalation(corr_from_dist(im.dist_e, h.ell_1e, im.pc.jitter_rel),
                              1.0, Le) ||
        !chol_with_escalation(corr_from_dist(im.dist_s, h.ell_1as, im.pc.jitter_rel),
                              1.0, Ls))
      throw std::runtime_error("factorization failure while unpacking state");
  }
  const Eigen::MatrixXd& le = im.phase == Phase::one ? Le : im.Lce2;
  const Eigen::MatrixXd& ls = im.phase == Phase::one ? Ls : im.Lcs2;
  const Eigen::VectorXd lez2 = le.triangularView<Eigen::Lower>() * q.segment(im.off_z1e, im.E);
  const Eigen::VectorXd lsz2 = ls.triangularView<Eigen::Lower>() * q.segment(im.off_z1a, im.S);
  p.dc1e = h.omega_1e * lez2;
  p.dc1a = h.omega_1as * lsz2;
  p.dc1b = h.omega_1bs * q.segment(im.off_z1b, im.S);
  p.c_ca = (-q.segment(im.off_u, im.C).array().exp()).matrix();
  p.phi0 = std::exp(q[im.off_phi]);
  p.tau0 = std::exp(q[im.off_phi + 1]);
  p.dB = p.tau0 * q.segment(im.off_zB, im.E);
  return p;
}

HyperParams PosteriorDensity::hyper_of(const Eigen::VectorXd& q) const {
  return impl_->hyper_from(q);
}

double PosteriorDensity::transform_log_jacobian(const Eigen::VectorXd& q) const {
  const Impl& im = *impl_;
  const HyperParams h = im.hyper_from(q);
  double lj = 0.0;
  // non-centered GP scalings: |det(omega * Lc)|
  Eigen::MatrixXd Le, Ls;
  if (im.phase == Phase::one) {
    chol_with_escalation(corr_from_dist(im.dist_e, h.ell_1e, im.pc.jitter_rel), 1.0, Le);
    chol_with_escalation(corr_from_dist(im.dist_s, h.ell_1as, im.pc.jitter_rel), 1.0, Ls);
  } else {
    Le = im.Lce2;
    Ls = im.Lcs2;
  }
  lj += im.E * std::log(h.omega_1e) + Le.diagonal().array().log().sum();
  lj += im.S * std::log(h.omega_1as) + Ls.diagonal().array().log().sum();
  lj += im.S * std::log(h.omega_1bs);                 // dc1b = omega_1b z
  lj += im.E * std::log(std::exp(q[im.off_phi + 1]));  // dB = tau0 zB
  lj += q.segment(im.off_u, im.C).sum();               // c = -exp(u)
  if (im.phase == Phase::one)
    for (int i = 0; i < 8; ++i) lj += q[im.off_hyp + i];  // log transforms
  lj += q[im.off_phi] + q[im.off_phi + 1];
  return lj;
}

Eigen::VectorXd PosteriorDensity::constrained(const Eigen::VectorXd& q) const {
  const Impl& im = *impl_;
  const ModelParams p = unpack(q);
  const HyperParams h = im.hyper_from(q);
  Eigen::VectorXd out(static_cast<int>(im.names.size()));
  int k = 0;
  out[k++] = p.dc0;
  out[k++] = p.dc0e_north;
  out[k++] = p.dc0e_south;
  out.segment(k, im.E) = p.dc1e;
  k += im.E;
  out.segment(k, im.S) = p.dc1a;
  k += im.S;
  out.segment(k, im.S) = p.dc1b;
  k += im.S;
  out.segment(k, im.C) = p.c_ca;
  k += im.C;
  out.segment(k, im.E) = p.dB;
  k += im.E;
  if (im.phase == Phase::one) {
    out[k++] = h.ell_1e;
    out[k++] = h.omega_1e;
    out[k++] = h.ell_1as;
    out[k++] = h.omega_1as;
    out[k++] = h.omega_1bs;
    out[k++] = h.ell_ca1;
    out[k++] = h.omega_ca1;
    out[k++] = h.omega_ca2;
  }
  out[k++] = p.phi0;
  out[k++] = p.tau0;
  return out;
}

Eigen::VectorXd PosteriorDensity::initial_point(Rng& rng) const {
  const Impl& im = *impl_;
  Eigen::VectorXd q = Eigen::VectorXd::Zero(im.dim);
  for (int i = 0; i < 3; ++i) q[i] = 0.01 * rng.normal();
  for (int i = im.off_z1e; i < im.off_u; ++i) q[i] = 0.1 * rng.normal();
  const double u0 = std::log(std::max(1e-4, -im.c7));
  for (int i = im.off_u; i < im.off_u + im.C; ++i) q[i] = u0 + 0.05 * rng.normal();
  for (int i = im.off_zB; i < im.off_zB + im.E; ++i) q[i] = 0.1 * rng.normal();
  if (im.phase == Phase::one) {
    const double lmode = std::log(im.pc.ell_invgamma_beta / (im.pc.ell_invgamma_alpha + 1.0));
    double* x = q.data() + im.off_hyp;
    x[0] = lmode;
    x[1] = std::log(0.05);
    x[2] = lmode;
    x[3] = std::log(0.05);
    x[4] = im.pc.omega1b_ln_mu;
    x[5] = lmode;
    x[6] = std::log(0.05);
    x[7] = std::log(0.05);
    for (int i = 0; i < 8; ++i) x[i] += 0.1 * rng.normal();
  }
  q[im.off_phi] = im.pc.phi0_ln_mu + 0.1 * rng.normal();
  q[im.off_phi + 1] = im.pc.tau0_ln_mu + 0.1 * rng.normal();
  return q;
}

}  // namespace negmm
