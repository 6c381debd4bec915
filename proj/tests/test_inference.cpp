#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "negmm/inference.hpp"
#include "negmm/nuts.hpp"
#include "negmm/validate.hpp"

using namespace negmm;

namespace {

struct DiagGaussian final : TargetDensity {
  Eigen::VectorXd mu, sigma;
  int dim() const override { return static_cast<int>(mu.size()); }
  double logp_grad(const Eigen::VectorXd& q, Eigen::VectorXd& g) const override {
    g.resize(mu.size());
    double lp = 0.0;
    for (int i = 0; i < mu.size(); ++i) {
      const double z = (q[i] - mu[i]) / sigma[i];
      lp -= 0.5 * z * z;
      g[i] = -z / sigma[i];
    }
    return lp;
  }
};

PosteriorSummary hyper_summary(double freq, double ell1e, double om1e, double ell1a,
                               double om1a, double om1b, double ellca, double omca1,
                               double omca2) {
  PosteriorSummary s;
  s.freq = freq;
  s.names = {"ell_1e", "omega_1e", "ell_1as", "omega_1as",
             "omega_1bs", "ell_ca1", "omega_ca1", "omega_ca2"};
  s.means.resize(8);
  s.means << ell1e, om1e, ell1a, om1a, om1b, ellca, omca1, omca2;
  return s;
}

}  // namespace

TEST_CASE("nuts recovers a diagonal gaussian") {
  DiagGaussian target;
  target.mu = Eigen::VectorXd::Zero(5);
  target.sigma.resize(5);
  for (int i = 0; i < 5; ++i) {
    target.mu[i] = i - 2.0;
    target.sigma[i] = std::pow(2.0, i - 2);
  }
  NutsOptions opt;
  opt.warmup = 500;
  opt.draws = 2000;
  Rng rng(31);
  const Eigen::VectorXd q0 = Eigen::VectorXd::Constant(5, 0.5);
  const NutsResult res = nuts_sample(target, q0, opt, rng);
  REQUIRE(res.draws.rows() == 2000);
  for (int i = 0; i < 5; ++i) {
    const double mean = res.draws.col(i).mean();
    const double sd = std::sqrt(
        (res.draws.col(i).array() - mean).square().sum() / (res.draws.rows() - 1));
    CHECK(std::abs(mean - target.mu[i]) < 0.2 * target.sigma[i]);
    CHECK(sd == doctest::Approx(target.sigma[i]).epsilon(0.15));
  }
  CHECK(res.divergences == 0);
}

TEST_CASE("identical seeds reproduce bit-identical chains") {
  DiagGaussian target;
  target.mu = Eigen::VectorXd::Zero(3);
  target.sigma = Eigen::VectorXd::Ones(3);
  NutsOptions opt;
  opt.warmup = 100;
  opt.draws = 100;
  const Eigen::VectorXd q0 = Eigen::VectorXd::Zero(3);
  Rng rng1(777), rng2(777);
  const NutsResult a = nuts_sample(target, q0, opt, rng1);
  const NutsResult b = nuts_sample(target, q0, opt, rng2);
  CHECK((a.draws - b.draws).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.step_size == b.step_size);
}

TEST_CASE("split rhat and ess behave on iid and split chains") {
  Rng rng(5);
  Eigen::MatrixXd by_chain(500, 2);
  for (int i = 0; i < 500; ++i)
    for (int c = 0; c < 2; ++c) by_chain(i, c) = rng.normal();
  CHECK(split_rhat(by_chain) == doctest::Approx(1.0).epsilon(0.02));
  CHECK(effective_sample_size(by_chain) > 500);

  Eigen::MatrixXd bad = by_chain;
  bad.col(1).array() += 10.0;
  CHECK(split_rhat(bad) > 1.5);
}

TEST_CASE("sampler config validation") {
  SamplerConfig cfg;
  cfg.draws = 0;
  CHECK_THROWS(cfg.validate());
  cfg = SamplerConfig{};
  cfg.warmup = 0;
  CHECK_THROWS(cfg.validate());
  cfg = SamplerConfig{};
  cfg.target_accept = 1.5;
  CHECK_THROWS(cfg.validate());
  CHECK_NOTHROW(SamplerConfig{}.validate());
}

TEST_CASE("single-chain smoke fit on a handful of records reports rhat") {
  SyntheticSpec spec;
  spec.n_events = 3;
  spec.n_stations = 4;
  spec.min_stations_per_event = 3;
  spec.max_stations_per_event = 4;
  spec.grid = CellGrid{XY{0.0, 3600.0}, 25.0, 25.0, 4, 4};
  spec.hyper = HyperParams{30.0, 0.1, 30.0, 0.2, 0.4, 25.0, 0.003, 0.003};
  spec.freqs = {5.0};
  spec.seed = 9;
  Dataset d = generate_synthetic(spec);
  REQUIRE(d.n_records() >= 9);

  SamplerConfig cfg;
  cfg.warmup = 80;
  cfg.draws = 80;
  cfg.seed = 4;
  const PosteriorSummary s = fit_frequency(d, 0, Phase::one, cfg, PriorConfig{});
  CHECK(s.names.size() == static_cast<std::size_t>(s.rhat.size()));
  for (int i = 0; i < s.rhat.size(); ++i) CHECK(std::isfinite(s.rhat[i]));
  CHECK(s.freq == 5.0);
  CHECK(s.index_of("ell_1e") >= 0);
  CHECK(s.draws.rows() == 80);
}

TEST_CASE("phase 1 requires at least two events and stations") {
  SyntheticSpec spec;
  spec.n_events = 1;
  spec.n_stations = 3;
  spec.min_stations_per_event = 3;
  spec.max_stations_per_event = 3;
  spec.grid = CellGrid{XY{0.0, 3600.0}, 25.0, 25.0, 4, 4};
  spec.freqs = {5.0};
  Dataset d = generate_synthetic(spec);
  SamplerConfig cfg;
  cfg.warmup = 10;
  cfg.draws = 10;
  CHECK_THROWS(fit_frequency(d, 0, Phase::one, cfg, PriorConfig{}));
}

TEST_CASE("smoothing rules reproduce the documented arithmetic") {
  SUBCASE("source terms average over frequency") {
    std::vector<PosteriorSummary> fits = {
        hyper_summary(0.3, 85.0, 0.2, 30.0, 0.25, 0.4, 50.0, 0.004, 0.003),
        hyper_summary(1.0, 40.0, 0.2, 30.0, 0.25, 0.4, 60.0, 0.004, 0.003),
        hyper_summary(5.0, 40.0, 0.2, 30.0, 0.25, 0.4, 120.0, 0.004, 0.003)};
    const SmoothedHyper s = smooth_hyperparameters(fits, SmoothingRules{});
    for (double v : s.ell_1e) CHECK(v == doctest::Approx(55.0));
    // ell_ca1: average of the means below the 75 km cap
    for (double v : s.ell_ca1) CHECK(v == doctest::Approx(55.0));
  }
  SUBCASE("constant inputs smooth to themselves") {
    std::vector<PosteriorSummary> fits;
    for (double f : {0.5, 1.0, 5.0, 10.0, 20.0})
      fits.push_back(hyper_summary(f, 40.0, 0.15, 30.0, 0.25, 0.4, 50.0, 0.004, 0.003));
    const SmoothedHyper s = smooth_hyperparameters(fits, SmoothingRules{});
    for (std::size_t i = 0; i < s.freqs.size(); ++i) {
      CHECK(s.ell_1e[i] == doctest::Approx(40.0));
      CHECK(s.omega_1e[i] == doctest::Approx(0.15));
      CHECK(s.ell_1as[i] == doctest::Approx(30.0));
      CHECK(s.omega_1as[i] == doctest::Approx(0.25).epsilon(1e-6));
      CHECK(s.omega_1bs[i] == doctest::Approx(0.4));
      CHECK(s.ell_ca1[i] == doctest::Approx(50.0));
      CHECK(s.omega_ca1[i] == doctest::Approx(0.004));
      CHECK(s.omega_ca2[i] == doctest::Approx(0.003));
    }
    const HyperParams h = s.at(2.3);
    CHECK(h.ell_1e == doctest::Approx(40.0));
    CHECK(h.omega_1as == doctest::Approx(0.25).epsilon(1e-6));
  }
  SUBCASE("all cell correlation lengths above the cap fall back with a warning") {
    std::vector<PosteriorSummary> fits = {
        hyper_summary(1.0, 40.0, 0.2, 30.0, 0.25, 0.4, 80.0, 0.004, 0.003),
        hyper_summary(5.0, 40.0, 0.2, 30.0, 0.25, 0.4, 90.0, 0.004, 0.003),
        hyper_summary(10.0, 40.0, 0.2, 30.0, 0.25, 0.4, 100.0, 0.004, 0.003)};
    const SmoothedHyper s = smooth_hyperparameters(fits, SmoothingRules{});
    CHECK_FALSE(s.warnings.empty());
    for (double v : s.ell_ca1) CHECK(v == doctest::Approx(90.0));
  }
  SUBCASE("cell sds become monotone in log frequency") {
    std::vector<PosteriorSummary> fits = {
        hyper_summary(0.5, 40, 0.2, 30, 0.25, 0.4, 50, 0.001, 0.0005),
        hyper_summary(1.0, 40, 0.2, 30, 0.25, 0.4, 50, 0.004, 0.0040),
        hyper_summary(2.0, 40, 0.2, 30, 0.25, 0.4, 50, 0.003, 0.0030),
        hyper_summary(5.0, 40, 0.2, 30, 0.25, 0.4, 50, 0.008, 0.0060),
        hyper_summary(10.0, 40, 0.2, 30, 0.25, 0.4, 50, 0.007, 0.0070)};
    const SmoothedHyper s = smooth_hyperparameters(fits, SmoothingRules{});
    for (std::size_t i = 1; i < s.freqs.size(); ++i) {
      CHECK(s.omega_ca1[i] >= s.omega_ca1[i - 1] - 1e-15);
      CHECK(s.omega_ca2[i] >= s.omega_ca2[i - 1] - 1e-15);
    }
  }
  SUBCASE("fewer than three frequencies is an error") {
    std::vector<PosteriorSummary> fits = {
        hyper_summary(1.0, 40, 0.2, 30, 0.25, 0.4, 50, 0.004, 0.003),
        hyper_summary(5.0, 40, 0.2, 30, 0.25, 0.4, 50, 0.004, 0.003)};
    CHECK_THROWS(smooth_hyperparameters(fits, SmoothingRules{}));
  }
}

TEST_CASE("map estimate improves the density and reports uncertainty") {
  SyntheticSpec spec;
  spec.n_events = 6;
  spec.n_stations = 10;
  spec.min_stations_per_event = 5;
  spec.max_stations_per_event = 8;
  spec.grid = CellGrid{XY{0.0, 3600.0}, 25.0, 25.0, 4, 4};
  spec.hyper = HyperParams{30.0, 0.1, 30.0, 0.25, 0.4, 25.0, 0.003, 0.003};
  spec.freqs = {5.0};
  spec.seed = 21;
  Dataset d = generate_synthetic(spec);
  const MapResult res = map_laplace(d, 0, Phase::one, PriorConfig{}, nullptr, 300);
  CHECK(std::isfinite(res.logp));
  CHECK(res.iterations > 0);
  CHECK(res.sd.size() > 0);
  CHECK(res.sd.minCoeff() >= 0.0);
  CHECK(res.params.phi0 > 0.0);
}

TEST_CASE("phase-2 fit with hyperparameters pinned to truth recovers phi0") {
  SyntheticSpec spec;
  spec.n_events = 25;
  spec.n_stations = 50;
  spec.min_stations_per_event = 10;
  spec.max_stations_per_event = 16;
  spec.grid = CellGrid{XY{0.0, 3600.0}, 25.0, 25.0, 8, 8};
  spec.hyper = HyperParams{30.0, 0.1, 30.0, 0.3, 0.45, 25.0, 0.004, 0.003};
  spec.phi0 = 0.35;
  spec.tau0 = 0.38;
  spec.freqs = {5.0};
  spec.seed = 77;
  Dataset d = generate_synthetic(spec);

  SamplerConfig cfg;
  cfg.warmup = 250;
  cfg.draws = 250;
  cfg.seed = 3;
  const PosteriorSummary s =
      fit_frequency(d, 0, Phase::two, cfg, PriorConfig{}, &spec.hyper);
  CHECK(s.mean_of("phi0") == doctest::Approx(0.35).epsilon(0.10));
  CHECK(s.mean_of("tau0") == doctest::Approx(0.38).epsilon(0.30));
  CHECK(s.index_of("ell_1e") == -1);  // pinned hypers are not sampled
}

TEST_CASE("posterior contraction: more records per station shrink dc1b sds") {
  auto run = [](int per_event, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.n_events = 16;
    spec.n_stations = 12;
    spec.min_stations_per_event = per_event;
    spec.max_stations_per_event = per_event;
    spec.grid = CellGrid{XY{0.0, 3600.0}, 25.0, 25.0, 6, 6};
    spec.hyper = HyperParams{30.0, 0.1, 30.0, 0.25, 0.45, 25.0, 0.003, 0.003};
    spec.freqs = {5.0};
    spec.seed = seed;
    Dataset d = generate_synthetic(spec);
    SamplerConfig cfg;
    cfg.warmup = 200;
    cfg.draws = 200;
    cfg.seed = 5;
    HyperParams pinned = spec.hyper;
    const PosteriorSummary s =
        fit_frequency(d, 0, Phase::two, cfg, PriorConfig{}, &pinned);
    std::vector<double> sds;
    for (int i = 0; i < s.n_stations; ++i) sds.push_back(s.sds[s.off_dc1b() + i]);
    std::sort(sds.begin(), sds.end());
    return sds[sds.size() / 2];
  };
  // doubling the records per station strictly decreases the median dc1b sd
  const double sparse = run(6, 41);
  const double dense = run(12, 41);
  CHECK(dense < sparse);
}
