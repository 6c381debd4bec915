#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "negmm/geo.hpp"
#include "negmm/rng.hpp"

using namespace negmm;

TEST_CASE("zone parsing handles numbers and MGRS bands") {
  CHECK(UtmZone::parse("11S").number == 11);
  CHECK(UtmZone::parse("11S").north);  // band S is in the northern hemisphere
  CHECK(UtmZone::parse("11N").north);
  CHECK_FALSE(UtmZone::parse("19H").north);
  CHECK(UtmZone::parse("33").number == 33);
  CHECK_THROWS(UtmZone::parse("0A"));
  CHECK_THROWS(UtmZone::parse("61N"));
  CHECK_THROWS(UtmZone::parse(""));
}

TEST_CASE("central meridian maps to the false easting") {
  const UtmProjector proj(UtmZone::parse("11S"));
  const XY p = proj.forward(GeoPoint{0.0, proj.zone().central_meridian_deg()});
  CHECK(p.x == doctest::Approx(500.0).epsilon(1e-12));
  CHECK(p.y == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("projection matches the independent geodesy reference under 1 m") {
  const UtmProjector proj(UtmZone::parse("11S"));
  // reference values from an arbitrary-precision transverse Mercator
  // implementation (8th-order series checked against meridian-arc quadrature)
  struct Case {
    GeoPoint p;
    double e_km, n_km;
  };
  const Case cases[] = {
      {{37.0, -122.0}, 54.9629125305469, 4106.57570609595},
      {{32.72, -117.16}, 485.006426770068, 3620.25812948932},
      {{38.58, -121.49}, 108.825301183774, 4279.73956398369},
      {{36.0, -120.0}, 229.578629989643, 3988.11196234267},
  };
  for (const auto& c : cases) {
    const XY q = proj.forward(c.p);
    CHECK(std::abs(q.x - c.e_km) < 1e-3);  // 1 m in km
    CHECK(std::abs(q.y - c.n_km) < 1e-3);
  }
}

TEST_CASE("round trip over random California points stays under 1 m") {
  const UtmProjector proj(UtmZone::parse("11S"));
  Rng rng(42);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const GeoPoint p{32.0 + rng.u01() * 10.0, -125.0 + rng.u01() * 11.0};
    const GeoPoint back = proj.inverse(proj.forward(p));
    // 1 degree latitude ~ 111 km
    const double dlat = std::abs(back.lat - p.lat) * 111.0;
    const double dlon =
        std::abs(back.lon - p.lon) * 111.0 * std::cos(p.lat * M_PI / 180.0);
    worst = std::max({worst, dlat, dlon});
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("projection is monotone in longitude at fixed latitude") {
  const UtmProjector proj(UtmZone::parse("11S"));
  double prev = -1e30;
  for (double lon = -123.0; lon <= -111.0; lon += 0.25) {
    const double x = proj.forward(GeoPoint{36.5, lon}).x;
    CHECK(x > prev);
    prev = x;
  }
}

TEST_CASE("latitude outside the UTM band is rejected") {
  const UtmProjector proj(UtmZone::parse("11N"));
  CHECK_THROWS(proj.forward(GeoPoint{85.0, -117.0}));
  CHECK_THROWS(proj.forward(GeoPoint{-89.0, -117.0}));
  CHECK_THROWS(proj.forward(GeoPoint{91.0, 0.0}));
}

TEST_CASE("region polygons classify known cities") {
  const auto& polys = default_region_polygons();
  CHECK(classify_region(GeoPoint{38.58, -121.49}, polys) == "north");  // Sacramento
  CHECK(classify_region(GeoPoint{32.72, -117.16}, polys) == "south");  // San Diego
  CHECK(classify_region(GeoPoint{34.05, -118.24}, polys) == "south");  // Los Angeles
  CHECK_FALSE(classify_region(GeoPoint{0.0, 0.0}, polys).has_value());
}

TEST_CASE("classification is invariant under cyclic vertex rotation") {
  auto polys = default_region_polygons();
  const GeoPoint p{38.58, -121.49};
  for (std::size_t shift = 0; shift < polys[0].vertices.size(); ++shift) {
    auto rotated = polys;
    std::rotate(rotated[0].vertices.begin(), rotated[0].vertices.begin() + shift,
                rotated[0].vertices.end());
    CHECK(classify_region(p, rotated) == "north");
  }
}

TEST_CASE("polygon centroid lands in its own polygon") {
  const auto& polys = default_region_polygons();
  for (const auto& poly : polys) {
    double lat = 0.0, lon = 0.0;
    for (const auto& v : poly.vertices) {
      lat += v.lat;
      lon += v.lon;
    }
    lat /= poly.vertices.size();
    lon /= poly.vertices.size();
    CHECK(classify_region(GeoPoint{lat, lon}, polys) == poly.label);
  }
}

TEST_CASE("points on a polygon edge classify as inside") {
  const auto& polys = default_region_polygons();
  const auto& v = polys[0].vertices;
  const GeoPoint mid{0.5 * (v[0].lat + v[1].lat), 0.5 * (v[0].lon + v[1].lon)};
  CHECK(classify_region(mid, polys).has_value());
  CHECK(classify_region(v[0], polys).has_value());
}

TEST_CASE("polygon JSON round trip") {
  const auto tmp = std::filesystem::temp_directory_path() / "negmm_polys.json";
  save_region_polygons(default_region_polygons(), tmp);
  const auto loaded = load_region_polygons(tmp);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].label == "north");
  CHECK(loaded[0].vertices.size() == 5);
  CHECK(loaded[1].vertices[0].lat == doctest::Approx(37.9775));
  std::filesystem::remove(tmp);
}

TEST_CASE("degenerate polygons are rejected") {
  std::vector<RegionPolygon> bad = {{"tiny", {{0, 0}, {1, 1}}}};
  CHECK_THROWS(classify_region(GeoPoint{0.5, 0.5}, bad));
}
