#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "negmm/kernels.hpp"
#include "negmm/rng.hpp"

using namespace negmm;

namespace {
std::vector<XY> random_points(int n, Rng& rng, double span = 400.0) {
  std::vector<XY> pts(n);
  for (auto& p : pts) p = XY{rng.u01() * span, 3600.0 + rng.u01() * span};
  return pts;
}
}  // namespace

TEST_CASE("exponential kernel values") {
  const KernelSpec k{KernelFamily::exponential, 1.0, 30.0, 0.0};
  const XY a{10, 10};
  CHECK(cov_exponential(k, a, a) == doctest::Approx(1.0));
  const XY b{40, 10};  // distance = ell
  CHECK(cov_exponential(k, a, b) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(cov_exponential(k, a, XY{1e7, 1e7}) == doctest::Approx(0.0));

  const KernelSpec k2{KernelFamily::exponential, 2.0, 30.0, 0.0};
  CHECK(cov_exponential(k2, a, b) ==
        doctest::Approx(4.0 * std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("cell kernel adds the nugget on identity only") {
  const KernelSpec k{KernelFamily::exponential_plus_nugget, 1.0, 40.0, 0.5};
  const XY a{0, 0};
  CHECK(cov_cell(k, a, a, true) == doctest::Approx(1.0 + 0.25));
  const XY b{40, 0};
  CHECK(cov_cell(k, a, b, false) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

  const KernelSpec pure{KernelFamily::exponential_plus_nugget, 0.0, 40.0, 0.5};
  CHECK(cov_cell(pure, a, b, false) == doctest::Approx(0.0));
  CHECK(cov_cell(pure, a, a, true) == doctest::Approx(0.25));
}

TEST_CASE("kernel symmetry is exact") {
  Rng rng(1);
  const KernelSpec k{KernelFamily::exponential, 0.7, 22.0, 0.0};
  for (int i = 0; i < 100; ++i) {
    const XY a{rng.u01() * 500, rng.u01() * 500};
    const XY b{rng.u01() * 500, rng.u01() * 500};
    CHECK(cov_exponential(k, a, b) == cov_exponential(k, b, a));
  }
}

TEST_CASE("covariance decays monotonically with distance") {
  const KernelSpec k{KernelFamily::exponential, 1.3, 35.0, 0.0};
  double prev = 1e300;
  for (double d = 0.0; d <= 300.0; d += 1.0) {
    const double v = cov_exponential(k, XY{0, 0}, XY{d, 0});
    CHECK(v < prev + 1e-15);
    if (d > 0) CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("single point gram matrix is the marginal variance") {
  const KernelSpec k{KernelFamily::exponential, 0.5, 10.0, 0.0};
  const std::vector<XY> pts{XY{3, 4}};
  const Eigen::MatrixXd m = cov_matrix(k, pts, 0.0);
  REQUIRE(m.rows() == 1);
  CHECK(m(0, 0) == doctest::Approx(0.25));

  const KernelSpec kn{KernelFamily::exponential_plus_nugget, 0.5, 10.0, 0.2};
  CHECK(cov_matrix(kn, pts, 0.0)(0, 0) == doctest::Approx(0.25 + 0.04));
}

TEST_CASE("gram matrices on random point sets are PSD before jitter") {
  Rng rng(20);
  const KernelSpec k{KernelFamily::exponential, 1.0, 50.0, 0.0};
  const auto pts = random_points(50, rng);
  const Eigen::MatrixXd m = cov_matrix(k, pts, 0.0);
  CHECK((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
}

TEST_CASE("duplicated points stay factorizable with the default jitter") {
  Rng rng(21);
  auto pts = random_points(20, rng);
  pts.push_back(pts.front());
  pts.push_back(pts.front());
  const KernelSpec k{KernelFamily::exponential, 1.0, 50.0, 0.0};
  const Eigen::MatrixXd m = cov_matrix(k, pts);  // default jitter
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("doubling omega quadruples every gram entry") {
  Rng rng(22);
  const auto pts = random_points(15, rng);
  const KernelSpec k1{KernelFamily::exponential, 0.8, 25.0, 0.0};
  const KernelSpec k2{KernelFamily::exponential, 1.6, 25.0, 0.0};
  const Eigen::MatrixXd a = cov_matrix(k1, pts, 0.0);
  const Eigen::MatrixXd b = cov_matrix(k2, pts, 0.0);
  CHECK((b - 4.0 * a).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("non-finite coordinates are rejected") {
  const KernelSpec k{KernelFamily::exponential, 1.0, 10.0, 0.0};
  const std::vector<XY> pts{XY{0, 0}, XY{std::nan(""), 1}};
  CHECK_THROWS(cov_matrix(k, pts));
}

TEST_CASE("cross covariance respects cell identities") {
  const KernelSpec k{KernelFamily::exponential_plus_nugget, 1.0, 30.0, 0.5};
  const std::vector<XY> a{XY{0, 0}, XY{30, 0}};
  const std::vector<int> ids_a{0, 1};
  const std::vector<int> ids_b{1, 7};
  const Eigen::MatrixXd m = cross_cov(k, a, a, ids_a, ids_b);
  // (0,0): coincident points, different ids -> no nugget
  CHECK(m(0, 0) == doctest::Approx(1.0));
  // (1,0): same id 1 at distance ell -> nugget applies
  CHECK(m(1, 0) == doctest::Approx(std::exp(-1.0) + 0.25).epsilon(1e-12));
  // (1,1): coincident points, ids 1 vs 7 -> plain kernel value
  CHECK(m(1, 1) == doctest::Approx(1.0));
  CHECK(m(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("kernel validation rejects bad parameters") {
  CHECK_THROWS(KernelSpec{KernelFamily::exponential, -1.0, 10.0, 0.0}.validate());
  CHECK_THROWS(KernelSpec{KernelFamily::exponential, 1.0, 0.0, 0.0}.validate());
  CHECK_THROWS(KernelSpec{KernelFamily::exponential, 1.0, 10.0, 0.5}.validate());
  CHECK_NOTHROW(
      KernelSpec{KernelFamily::exponential_plus_nugget, 1.0, 10.0, 0.5}.validate());
}
