#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "negmm/types.hpp"

namespace negmm {

// UTM zone identifier, e.g. "11S": zone number plus optional MGRS latitude
// band letter (C..M southern hemisphere, N..X northern).
struct UtmZone {
  int number = 11;
  bool north = true;

  static UtmZone parse(std::string_view id);
  double central_meridian_deg() const { return -183.0 + 6.0 * number; }
  std::string str() const;
};

// WGS84 transverse Mercator, Krueger series in the third flattening.
// Output in km. Sub-mm forward accuracy within the +-18 deg band required of
// the round-trip contract.
class UtmProjector {
 public:
  explicit UtmProjector(UtmZone zone);

  XY forward(const GeoPoint& p) const;    // throws outside +-84 deg latitude
  GeoPoint inverse(const XY& q) const;

  const UtmZone& zone() const { return zone_; }

 private:
  UtmZone zone_;
  double lon0_rad_;
  double kA_;               // k0 * rectifying radius, km
  double alpha_[7];         // forward series coefficients (1-based)
  double beta_[7];          // inverse series coefficients (1-based)
};

struct RegionPolygon {
  std::string label;
  std::vector<GeoPoint> vertices;  // closed ring, first vertex implicitly repeated
};

// First polygon containing p wins; even-odd rule, boundary points count as
// inside. nullopt when outside all polygons.
std::optional<std::string> classify_region(const GeoPoint& p,
                                           std::span<const RegionPolygon> polys);

Region region_from_label(const std::optional<std::string>& label);

// Northern/southern California polygons used by the regional magnitude-bias
// constant; shipped as the built-in default.
const std::vector<RegionPolygon>& default_region_polygons();

// JSON file: [{"label": ..., "vertices": [[lat, lon], ...]}, ...]
std::vector<RegionPolygon> load_region_polygons(const std::filesystem::path& path);
void save_region_polygons(std::span<const RegionPolygon> polys,
                          const std::filesystem::path& path);

}  // namespace negmm
