#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <map>

#include "doctest.h"
#include "negmm/cells.hpp"
#include "negmm/rng.hpp"

using namespace negmm;

namespace {

double seg_sum(const std::vector<Segment>& segs) {
  double s = 0.0;
  for (const auto& x : segs) s += x.dr;
  return s;
}

Ray3 random_ray(const CellGrid& g, Rng& rng) {
  const double x0 = g.origin.x, x1 = g.origin.x + g.nx * g.dx;
  const double y0 = g.origin.y, y1 = g.origin.y + g.ny * g.dy;
  Ray3 r;
  r.start = XY{x0 + rng.u01() * (x1 - x0), y0 + rng.u01() * (y1 - y0)};
  r.end = XY{x0 + rng.u01() * (x1 - x0), y0 + rng.u01() * (y1 - y0)};
  r.start_depth = rng.u01() * 15.0;
  r.end_depth = 0.0;
  return r;
}

}  // namespace

TEST_CASE("grid covering expands outward to whole cells") {
  const CellGrid a = CellGrid::cover(XY{0, 0}, XY{100, 100}, 25, 25);
  CHECK(a.nx == 4);
  CHECK(a.ny == 4);
  CHECK(a.ncells() == 16);

  const CellGrid b = CellGrid::cover(XY{0, 0}, XY{101, 99}, 25, 25);
  CHECK(b.nx == 5);
  CHECK(b.ny == 4);

  const CellGrid c = CellGrid::cover(XY{10, 10}, XY{10, 10}, 25, 25);
  CHECK(c.nx == 1);
  CHECK(c.ny == 1);
  CHECK(c.contains(XY{10, 10}));

  CHECK_THROWS(CellGrid::cover(XY{0, 0}, XY{1, 1}, 0.0, 25.0));
  CHECK_THROWS(CellGrid::cover(XY{0, 0}, XY{1, 1}, 25.0, -1.0));
}

TEST_CASE("axis-aligned ray starting on a cell edge splits evenly") {
  const CellGrid g{XY{0, 0}, 25, 25, 4, 4};
  const Ray3 ray{XY{25, 10}, 0.0, XY{75, 10}, 0.0};
  const auto segs = segment_ray(g, ray);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].dr == doctest::Approx(25.0));
  CHECK(segs[1].dr == doctest::Approx(25.0));
  CHECK(segs[0].cell == g.cell_index(1, 0));
  CHECK(segs[1].cell == g.cell_index(2, 0));
}

TEST_CASE("ray inside one cell yields a single full-length segment") {
  const CellGrid g{XY{0, 0}, 25, 25, 4, 4};
  const Ray3 ray{XY{30, 30}, 8.0, XY{40, 44}, 0.0};
  const auto segs = segment_ray(g, ray);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].cell == g.cell_index(1, 1));
  CHECK(segs[0].dr == doctest::Approx(ray.length()).epsilon(1e-12));
}

TEST_CASE("segment sums reproduce ray lengths across 1000 random draws") {
  const CellGrid g{XY{-100, 3600}, 25, 25, 20, 20};
  Rng rng(1234);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Ray3 ray = random_ray(g, rng);
    const double len = ray.length();
    if (len < 1e-9) continue;
    const auto segs = segment_ray(g, ray);
    worst = std::max(worst, std::abs(seg_sum(segs) - len) / len);
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("diagonal through a cell corner keeps the length identity") {
  const CellGrid g{XY{0, 0}, 25, 25, 4, 4};
  // exact 45-degree diagonal through the corner at (50, 50)
  const Ray3 ray{XY{30, 30}, 0.0, XY{70, 70}, 0.0};
  const auto segs = segment_ray(g, ray);
  CHECK(seg_sum(segs) == doctest::Approx(ray.length()).epsilon(1e-12));

  // brute-force 1 m sampling oracle: in-cell sample counts scale to lengths
  std::map<int, double> sampled;
  const int n = static_cast<int>(ray.length() * 1000.0);
  for (int i = 0; i < n; ++i) {
    const double t = (i + 0.5) / n;
    const XY p{ray.start.x + t * (ray.end.x - ray.start.x),
               ray.start.y + t * (ray.end.y - ray.start.y)};
    const int ix = std::min(g.nx - 1, static_cast<int>((p.x - g.origin.x) / g.dx));
    const int iy = std::min(g.ny - 1, static_cast<int>((p.y - g.origin.y) / g.dy));
    sampled[g.cell_index(ix, iy)] += ray.length() / n;
  }
  for (const auto& s : segs) {
    if (s.dr < 0.5) continue;
    CHECK(std::abs(sampled[s.cell] - s.dr) / s.dr < 1e-3);
  }
}

TEST_CASE("reversed rays traverse the same cells with the same lengths") {
  const CellGrid g{XY{0, 0}, 25, 25, 8, 8};
  Rng rng(77);
  for (int i = 0; i < 200; ++i) {
    Ray3 ray = random_ray(g, rng);
    const auto fwd = segment_ray(g, ray);
    std::swap(ray.start, ray.end);
    std::swap(ray.start_depth, ray.end_depth);
    auto bwd = segment_ray(g, ray);
    REQUIRE(fwd.size() == bwd.size());
    std::map<int, double> a, b;
    for (const auto& s : fwd) a[s.cell] += s.dr;
    for (const auto& s : bwd) b[s.cell] += s.dr;
    for (const auto& [cell, dr] : a) {
      REQUIRE(b.count(cell) == 1);
      CHECK(b[cell] == doctest::Approx(dr).epsilon(1e-9));
    }
  }
}

TEST_CASE("translating grid and ray together leaves segments unchanged") {
  const CellGrid g{XY{0, 0}, 25, 25, 6, 6};
  const CellGrid g2{XY{1000, -500}, 25, 25, 6, 6};
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    Ray3 ray = random_ray(g, rng);
    Ray3 moved = ray;
    moved.start.x += 1000;
    moved.start.y -= 500;
    moved.end.x += 1000;
    moved.end.y -= 500;
    const auto a = segment_ray(g, ray);
    const auto b = segment_ray(g2, moved);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(a[k].cell == b[k].cell);
      CHECK(a[k].dr == doctest::Approx(b[k].dr).epsilon(1e-9));
    }
  }
}

TEST_CASE("a ray leaving the grid names the offending endpoint") {
  const CellGrid g{XY{0, 0}, 25, 25, 4, 4};
  const Ray3 ray{XY{50, 50}, 0.0, XY{500, 50}, 0.0};
  CHECK_THROWS_WITH_AS(segment_ray(g, ray), doctest::Contains("end"),
                       std::runtime_error);
}

TEST_CASE("coverage stats count distinct crossing rays per cell") {
  const CellGrid g{XY{0, 0}, 25, 25, 4, 4};
  SegmentMatrix m(g.ncells());
  SUBCASE("empty matrix is all zeros") {
    const auto st = coverage_stats(m);
    for (int c : st.path_count) CHECK(c == 0);
  }
  SUBCASE("one ray crossing three cells") {
    const Ray3 ray{XY{10, 10}, 0.0, XY{70, 10}, 0.0};
    m.add_row(segment_ray(g, ray));
    const auto st = coverage_stats(m);
    int crossed = 0;
    for (int c = 0; c < g.ncells(); ++c)
      if (st.path_count[c] > 0) {
        CHECK(st.path_count[c] == 1);
        ++crossed;
      }
    CHECK(crossed == 3);
  }
  SUBCASE("fan of rays matches a brute-force recount") {
    Rng rng(9);
    const XY src{40, 40};
    std::vector<std::vector<Segment>> all;
    for (int i = 0; i < 100; ++i) {
      const Ray3 ray{src, 5.0, XY{rng.u01() * 100.0, rng.u01() * 100.0}, 0.0};
      all.push_back(segment_ray(g, ray));
      m.add_row(all.back());
    }
    const auto st = coverage_stats(m);
    std::vector<int> count(g.ncells(), 0);
    std::vector<double> length(g.ncells(), 0.0);
    for (const auto& segs : all)
      for (const auto& s : segs) {
        count[s.cell] += 1;
        length[s.cell] += s.dr;
      }
    for (int c = 0; c < g.ncells(); ++c) {
      CHECK(st.path_count[c] == count[c]);
      CHECK(st.total_length[c] == doctest::Approx(length[c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("segment matrix round-trips through the triplet CSV") {
  const CellGrid g{XY{0, 0}, 25, 25, 4, 4};
  SegmentMatrix m(g.ncells());
  Rng rng(3);
  for (int i = 0; i < 20; ++i) m.add_row(segment_ray(g, random_ray(g, rng)));
  const auto tmp = std::filesystem::temp_directory_path() / "negmm_segs.csv";
  m.write_triplets_csv(tmp);
  const SegmentMatrix back = SegmentMatrix::read_triplets_csv(tmp, g.ncells());
  REQUIRE(back.rows() == m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    CHECK(back.row_sum(r) == doctest::Approx(m.row_sum(r)).epsilon(1e-15));
  std::filesystem::remove(tmp);
}

TEST_CASE("grid JSON round trip preserves the definition") {
  const CellGrid g{XY{-12.5, 3587.5}, 25, 25, 20, 18};
  const auto tmp = std::filesystem::temp_directory_path() / "negmm_grid.json";
  save_grid_json(g, tmp);
  const CellGrid back = load_grid_json(tmp);
  CHECK(back.origin.x == g.origin.x);
  CHECK(back.origin.y == g.origin.y);
  CHECK(back.nx == g.nx);
  CHECK(back.ny == g.ny);
  std::filesystem::remove(tmp);
}
