#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "negmm/model.hpp"
#include "negmm/validate.hpp"

using namespace negmm;

namespace {

// small instance per the gradient-check contract: 5 events, 10 stations,
// 20 cells
Dataset small_instance(std::uint64_t seed, double freq = 5.0) {
  SyntheticSpec spec;
  spec.n_events = 5;
  spec.n_stations = 10;
  spec.min_stations_per_event = 4;
  spec.max_stations_per_event = 7;
  spec.grid = CellGrid{XY{0.0, 3600.0}, 25.0, 25.0, 5, 4};
  spec.hyper = HyperParams{30.0, 0.2, 30.0, 0.25, 0.4, 25.0, 0.004, 0.003};
  spec.phi0 = 0.4;
  spec.tau0 = 0.35;
  spec.freqs = {freq};
  spec.seed = seed;
  return generate_synthetic(spec);
}

ModelParams zero_params(const Dataset& d) {
  ModelParams p;
  p.dc1e = Eigen::VectorXd::Zero(d.n_events());
  p.dc1a = Eigen::VectorXd::Zero(d.n_stations());
  p.dc1b = Eigen::VectorXd::Zero(d.n_stations());
  p.c_ca = Eigen::VectorXd::Zero(d.grid.ncells());
  p.dB = Eigen::VectorXd::Zero(d.n_events());
  p.phi0 = 0.4;
  p.tau0 = 0.35;
  return p;
}

}  // namespace

TEST_CASE("regional constant selector follows the magnitude/frequency mask") {
  const PriorConfig pc;
  CHECK(dc0e_selector(4.5, Region::north, 1.0, pc) == Region::north);
  CHECK(dc0e_selector(5.5, Region::north, 1.0, pc) == Region::none);
  CHECK(dc0e_selector(4.5, Region::south, 10.0, pc) == Region::none);
  CHECK(dc0e_selector(4.5, Region::none, 1.0, pc) == Region::none);
  CHECK(dc0e_selector(5.0, Region::north, 1.0, pc) == Region::none);  // M >= 5
  CHECK(dc0e_selector(4.5, Region::north, 5.0, pc) == Region::none);  // f >= 5
  CHECK(dc0e_selector(6.0, Region::north, 5.0, pc) == Region::none);
}

TEST_CASE("median adjustment is the hand sum of its terms") {
  Dataset d = small_instance(11);
  ModelParams p = zero_params(d);
  const int r = 0;
  const Record& rec = d.records[r];
  p.dc0 = 0.02;
  p.dc1e[rec.event] = 0.1;
  p.dc1a[rec.station] = -0.2;
  p.dc1b[rec.station] = 0.05;
  // craft c_ca so the path term is exactly -0.3
  const double rrup = d.segments.row_sum(r);
  for (int c : d.segments.row_cells(r)) p.c_ca[c] = -0.3 / rrup;
  const double m = median_nonergodic(d, r, p, 10.0, PriorConfig{});
  CHECK(m == doctest::Approx(-0.33).epsilon(1e-12));
}

TEST_CASE("with zero adjustments and c_ca = c7 the backbone attenuation returns") {
  Dataset d = small_instance(12);
  ModelParams p = zero_params(d);
  const double c7 = d.c7[0];
  p.c_ca.setConstant(c7);
  for (int r = 0; r < d.n_records(); ++r) {
    const double m = median_nonergodic(d, r, p, d.freqs[0], PriorConfig{});
    CHECK(m == doctest::Approx(c7 * d.records[r].r_rup).epsilon(1e-9));
  }
}

TEST_CASE("gaussian likelihood matches the hand-computed density") {
  // single record, all adjustments zero, residual 0.5, phi0 0.5
  Dataset d = small_instance(13);
  std::vector<Segment> row;
  for (std::size_t k = 0; k < d.segments.row_cells(0).size(); ++k)
    row.push_back({d.segments.row_cells(0)[k], d.segments.row_values(0)[k]});
  d.records.resize(1);
  d.residuals.conservativeResize(1, Eigen::NoChange);
  d.residuals(0, 0) = 0.5;
  SegmentMatrix seg(d.grid.ncells());
  seg.add_row(row);
  d.segments = std::move(seg);

  ModelParams p = zero_params(d);
  p.phi0 = 0.5;
  const double want = -0.5 - std::log(0.5 * std::sqrt(2.0 * M_PI));
  CHECK(log_likelihood(d, 0, p, PriorConfig{}) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("prior arithmetic matches the published constants") {
  const PriorConfig pc;
  // inverse-gamma mode beta/(alpha+1)
  CHECK(pc.ell_invgamma_beta / (pc.ell_invgamma_alpha + 1.0) ==
        doctest::Approx(50.0 / 3.0));
  CHECK(50.0 / 3.0 == doctest::Approx(16.7).epsilon(0.01));
  // lognormal medians/means quoted for the site and aleatory scales
  CHECK(std::exp(pc.omega1b_ln_mu) == doctest::Approx(0.449).epsilon(0.002));
  CHECK(std::exp(pc.phi0_ln_mu + 0.5 * pc.phi0_ln_sd * pc.phi0_ln_sd) ==
        doctest::Approx(0.27).epsilon(0.06));
  CHECK(std::exp(pc.tau0_ln_mu + 0.5 * pc.tau0_ln_sd * pc.tau0_ln_sd) ==
        doctest::Approx(0.38).epsilon(0.02));
}

TEST_CASE("positive cell coefficients are rejected with -inf") {
  Dataset d = small_instance(14);
  ModelParams p = zero_params(d);
  p.c_ca.setConstant(d.c7[0]);
  p.c_ca[3] = 0.001;
  const double lp = log_posterior(d, 0, p, HyperParams{}, Phase::one, PriorConfig{});
  CHECK(std::isinf(lp));
  CHECK(lp < 0);
}

TEST_CASE("log posterior is invariant under record permutation") {
  Dataset d = small_instance(15);
  ModelParams p = zero_params(d);
  p.c_ca.setConstant(d.c7[0]);
  p.dc0 = 0.05;
  const HyperParams h;
  const double lp1 = log_posterior(d, 0, p, h, Phase::one, PriorConfig{});

  // reverse record order
  Dataset rev = d;
  rev.records.assign(d.records.rbegin(), d.records.rend());
  SegmentMatrix seg(d.grid.ncells());
  for (int r = d.n_records() - 1; r >= 0; --r) {
    std::vector<Segment> row;
    for (std::size_t k = 0; k < d.segments.row_cells(r).size(); ++k)
      row.push_back({d.segments.row_cells(r)[k], d.segments.row_values(r)[k]});
    seg.add_row(row);
    rev.residuals.row(d.n_records() - 1 - r) = d.residuals.row(r);
  }
  rev.segments = std::move(seg);
  const double lp2 = log_posterior(rev, 0, p, h, Phase::one, PriorConfig{});
  CHECK(lp1 == doctest::Approx(lp2).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central differences on random instances") {
  int instances = 0;
  for (std::uint64_t seed = 100; instances < 6; ++seed, ++instances) {
    Dataset d = small_instance(seed);
    for (const Phase phase : {Phase::one, Phase::two}) {
      HyperParams fixed{28.0, 0.15, 35.0, 0.22, 0.38, 30.0, 0.005, 0.004};
      PosteriorDensity dens(d, 0, phase, PriorConfig{},
                            phase == Phase::two ? &fixed : nullptr);
      Rng rng(seed * 7 + static_cast<int>(phase));
      Eigen::VectorXd q = dens.initial_point(rng);
      for (int i = 0; i < q.size(); ++i) q[i] += 0.2 * rng.normal();

      Eigen::VectorXd g(dens.dim());
      const double f0 = dens.logp_grad(q, g);
      REQUIRE(std::isfinite(f0));

      double worst = 0.0;
      for (int i = 0; i < dens.dim(); ++i) {
        const double h = 1e-5 * std::max(1.0, std::abs(q[i]));
        Eigen::VectorXd qp = q, qm = q;
        qp[i] += h;
        qm[i] -= h;
        const double fp = dens.logp(qp);
        const double fm = dens.logp(qm);
        REQUIRE(std::isfinite(fp));
        REQUIRE(std::isfinite(fm));
        const double fd = (fp - fm) / (2.0 * h);
        const double err =
            std::abs(g[i] - fd) / std::max({1.0, std::abs(g[i]), std::abs(fd)});
        worst = std::max(worst, err);
      }
      CHECK(worst < 1e-5);
    }
  }
}

TEST_CASE("non-centered and centered densities differ by the transform jacobian") {
  Dataset d = small_instance(55);
  for (const Phase phase : {Phase::one, Phase::two}) {
    HyperParams fixed{28.0, 0.15, 35.0, 0.22, 0.38, 30.0, 0.005, 0.004};
    PosteriorDensity dens(d, 0, phase, PriorConfig{},
                          phase == Phase::two ? &fixed : nullptr);
    Rng rng(991 + static_cast<int>(phase));
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXd q = dens.initial_point(rng);
      for (int i = 0; i < q.size(); ++i) q[i] += 0.3 * rng.normal();
      const double lp_nc = dens.logp(q);
      REQUIRE(std::isfinite(lp_nc));
      const ModelParams p = dens.unpack(q);
      const HyperParams h = dens.hyper_of(q);
      const double lp_c = log_posterior(d, 0, p, h, phase, PriorConfig{});
      const double jac = dens.transform_log_jacobian(q);
      CHECK(lp_nc - lp_c == doctest::Approx(jac).epsilon(1e-10));
    }
  }
}

TEST_CASE("frequency lookup errors list the available frequencies") {
  Dataset d = small_instance(16);
  CHECK(d.freq_index(d.freqs[0]) == 0);
  CHECK_THROWS_WITH_AS(d.freq_index(99.0), doctest::Contains("available"),
                       std::invalid_argument);
}

TEST_CASE("missing station or event index raises") {
  Dataset d = small_instance(17);
  ModelParams p = zero_params(d);
  p.dc1e.conservativeResize(1);  // too short
  CHECK_THROWS(median_nonergodic(d, d.n_records() - 1, p, 5.0, PriorConfig{}));
}
