#include "negmm/nuts.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace negmm {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kDivergenceGap = 1000.0;

struct State {
  Eigen::VectorXd q, p, grad;
  double logp = kNegInf;   // target density at q
  double joint = kNegInf;  // logp - kinetic
};

class Chain {
 public:
  Chain(const TargetDensity& target, Rng& rng, const NutsOptions& opt)
      : target_(target), rng_(rng), opt_(opt), dim_(target.dim()) {
    inv_mass_ = Eigen::VectorXd::Ones(dim_);
  }

  double eval(const Eigen::VectorXd& q, Eigen::VectorXd& grad) {
    ++n_grad_;
    return target_.logp_grad(q, grad);
  }

  double kinetic(const Eigen::VectorXd& p) const {
    return 0.5 * (p.array().square() * inv_mass_.array()).sum();
  }

  void leapfrog(State& s, double eps) {
    s.p += 0.5 * eps * s.grad;
    s.q += eps * (inv_mass_.array() * s.p.array()).matrix();
    s.logp = eval(s.q, s.grad);
    if (!std::isfinite(s.logp)) {
      s.joint = kNegInf;
      return;
    }
    s.p += 0.5 * eps * s.grad;
    s.joint = s.logp - kinetic(s.p);
  }

  bool no_uturn(const State& minus, const State& plus) const {
    const Eigen::VectorXd dq = plus.q - minus.q;
    return dq.dot((inv_mass_.array() * minus.p.array()).matrix()) >= 0.0 &&
           dq.dot((inv_mass_.array() * plus.p.array()).matrix()) >= 0.0;
  }

  struct Tree {
    State minus, plus;
    Eigen::VectorXd q_prop, grad_prop;
    double logp_prop = kNegInf;
    double n = 0.0;
    bool ok = true;            // no U-turn, no divergence
    double alpha_sum = 0.0;
    int alpha_count = 0;
    bool divergent = false;
  };

  Tree build_tree(const State& from, double log_u, int dir, int depth, double eps,
                  double joint0) {
    Tree t;
    if (depth == 0) {
      State s = from;
      leapfrog(s, dir * eps);
      t.minus = s;
      t.plus = s;
      t.q_prop = s.q;
      t.grad_prop = s.grad;
      t.logp_prop = s.logp;
      t.n = log_u <= s.joint ? 1.0 : 0.0;
      t.divergent = !(log_u < kDivergenceGap + s.joint);
      t.ok = !t.divergent;
      const double a = s.joint - joint0;
      t.alpha_sum = std::isfinite(a) ? std::min(1.0, std::exp(a)) : 0.0;
      t.alpha_count = 1;
      return t;
    }
    Tree inner = build_tree(from, log_u, dir, depth - 1, eps, joint0);
    if (!inner.ok) return inner;
    const State& edge = dir == 1 ? inner.plus : inner.minus;
    Tree outer = build_tree(edge, log_u, dir, depth - 1, eps, joint0);
    t.minus = dir == 1 ? inner.minus : outer.minus;
    t.plus = dir == 1 ? outer.plus : inner.plus;
    t.n = inner.n + outer.n;
    if (outer.n > 0.0 && t.n > 0.0 && rng_.u01() < outer.n / t.n) {
      t.q_prop = outer.q_prop;
      t.grad_prop = outer.grad_prop;
      t.logp_prop = outer.logp_prop;
    } else {
      t.q_prop = inner.q_prop;
      t.grad_prop = inner.grad_prop;
      t.logp_prop = inner.logp_prop;
    }
    t.alpha_sum = inner.alpha_sum + outer.alpha_sum;
    t.alpha_count = inner.alpha_count + outer.alpha_count;
    t.divergent = inner.divergent || outer.divergent;
    t.ok = outer.ok && !t.divergent && no_uturn(t.minus, t.plus);
    return t;
  }

  // One transition; returns the acceptance statistic for adaptation.
  double transition(State& cur, double eps, bool& divergent) {
    for (int i = 0; i < dim_; ++i)
      cur.p[i] = rng_.normal() / std::sqrt(inv_mass_[i]);
    cur.joint = cur.logp - kinetic(cur.p);
    const double log_u = cur.joint - rng_.exponential(1.0);

    State minus = cur, plus = cur;
    Eigen::VectorXd q_sample = cur.q, grad_sample = cur.grad;
    double logp_sample = cur.logp;
    double n = 1.0;
    bool ok = true;
    divergent = false;
    double alpha_sum = 0.0;
    int alpha_count = 0;

    for (int depth = 0; ok && depth < opt_.max_tree_depth; ++depth) {
      const int dir = rng_.u01() < 0.5 ? -1 : 1;
      Tree t = build_tree(dir == 1 ? plus : minus, log_u, dir, depth, eps, cur.joint);
      alpha_sum += t.alpha_sum;
      alpha_count += t.alpha_count;
      if (t.divergent) divergent = true;
      if (dir == 1)
        plus = t.plus;
      else
        minus = t.minus;
      if (t.ok && t.n > 0.0 && rng_.u01() < std::min(1.0, t.n / n)) {
        q_sample = t.q_prop;
        grad_sample = t.grad_prop;
        logp_sample = t.logp_prop;
      }
      n += t.n;
      ok = t.ok && no_uturn(minus, plus);
    }
    cur.q = q_sample;
    cur.grad = grad_sample;
    cur.logp = logp_sample;
    return alpha_count > 0 ? alpha_sum / alpha_count : 0.0;
  }

  double find_initial_step(State& cur) {
    double eps = 1.0;
    for (int i = 0; i < dim_; ++i)
      cur.p[i] = rng_.normal() / std::sqrt(inv_mass_[i]);
    cur.joint = cur.logp - kinetic(cur.p);
    State probe = cur;
    leapfrog(probe, eps);
    double ratio = probe.joint - cur.joint;
    const double dir = ratio > std::log(0.5) ? 1.0 : -1.0;
    for (int it = 0; it < 50; ++it) {
      if (dir * ratio <= -dir * std::log(2.0)) break;
      eps *= std::pow(2.0, dir);
      if (eps < 1e-10 || eps > 1e7) break;
      probe = cur;
      leapfrog(probe, eps);
      ratio = std::isfinite(probe.joint) ? probe.joint - cur.joint : kNegInf;
    }
    return eps;
  }

  NutsResult run(const Eigen::VectorXd& q0) {
    State cur;
    cur.q = q0;
    cur.p.resize(dim_);
    cur.logp = eval(cur.q, cur.grad);
    if (!std::isfinite(cur.logp))
      throw std::runtime_error("sampler initialized at a state with zero density");

    double eps = find_initial_step(cur);

    // dual averaging
    double mu = std::log(10.0 * eps);
    double log_eps = std::log(eps);
    double log_eps_bar = 0.0;
    double h_bar = 0.0;
    const double gamma = 0.05, t0 = 10.0, kappa = 0.75;
    long da_m = 0;

    // diagonal mass window
    const int win_a = std::max(1, static_cast<int>(0.15 * opt_.warmup));
    const int win_b = std::max(win_a + 1, static_cast<int>(0.75 * opt_.warmup));
    Eigen::VectorXd w_mean = Eigen::VectorXd::Zero(dim_);
    Eigen::VectorXd w_m2 = Eigen::VectorXd::Zero(dim_);
    long w_n = 0;

    NutsResult out;
    out.draws.resize(opt_.draws, dim_);

    bool divergent = false;
    for (int it = 0; it < opt_.warmup; ++it) {
      const double alpha = transition(cur, std::exp(log_eps), divergent);
      ++da_m;
      h_bar = (1.0 - 1.0 / (da_m + t0)) * h_bar +
              (opt_.target_accept - alpha) / (da_m + t0);
      log_eps = mu - std::sqrt(static_cast<double>(da_m)) / gamma * h_bar;
      const double w = std::pow(static_cast<double>(da_m), -kappa);
      log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;

      if (it >= win_a && it < win_b) {
        ++w_n;
        const Eigen::VectorXd d = cur.q - w_mean;
        w_mean += d / static_cast<double>(w_n);
        w_m2 += d.cwiseProduct(cur.q - w_mean);
      }
      if (it + 1 == win_b && w_n > 2) {
        Eigen::VectorXd var = w_m2 / static_cast<double>(w_n - 1);
        const double shrink = static_cast<double>(w_n) / (w_n + 5.0);
        var = (shrink * var.array() + (1.0 - shrink) * 1e-3).cwiseMax(1e-10);
        inv_mass_ = var;
        // restart step-size search around the current value
        eps = std::exp(log_eps_bar);
        cur.joint = cur.logp - kinetic(cur.p);
        mu = std::log(10.0 * eps);
        log_eps = std::log(eps);
        log_eps_bar = 0.0;
        h_bar = 0.0;
        da_m = 0;
      }
    }
    eps = opt_.warmup > 0 ? std::exp(log_eps_bar) : std::exp(log_eps);

    double accept_sum = 0.0;
    for (int it = 0; it < opt_.draws; ++it) {
      accept_sum += transition(cur, eps, divergent);
      if (divergent) ++out.divergences;
      out.draws.row(it) = cur.q;
    }
    out.step_size = eps;
    out.inv_mass = inv_mass_;
    out.accept_mean = opt_.draws > 0 ? accept_sum / opt_.draws : 0.0;
    out.n_grad_evals = n_grad_;
    return out;
  }

 private:
  const TargetDensity& target_;
  Rng& rng_;
  NutsOptions opt_;
  int dim_;
  Eigen::VectorXd inv_mass_;
  long n_grad_ = 0;
};

}  // namespace

NutsResult nuts_sample(const TargetDensity& target, const Eigen::VectorXd& q0,
                       const NutsOptions& opt, Rng& rng) {
  if (opt.draws < 1) throw std::invalid_argument("draws must be >= 1");
  if (opt.warmup < 1) throw std::invalid_argument("warmup must be >= 1");
  Chain chain(target, rng, opt);
  return chain.run(q0);
}

}  // namespace negmm
