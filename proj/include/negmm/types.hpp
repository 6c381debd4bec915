#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace negmm {

// Planar projected coordinates in km (east, north).
struct XY {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const XY& a, const XY& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

// Geographic coordinates in degrees, WGS84.
struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
};

inline void validate_geo(const GeoPoint& p) {
  if (!(p.lat >= -90.0 && p.lat <= 90.0))
    throw std::invalid_argument("latitude out of range [-90, 90]: " + std::to_string(p.lat));
  if (!(p.lon >= -180.0 && p.lon <= 180.0))
    throw std::invalid_argument("longitude out of range [-180, 180]: " + std::to_string(p.lon));
}

enum class Region { none = 0, north = 1, south = 2 };

inline const char* region_name(Region r) {
  switch (r) {
    case Region::north: return "north";
    case Region::south: return "south";
    default: return "none";
  }
}

}  // namespace negmm
