#include "negmm/geo.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace negmm {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDeg = kPi / 180.0;

// WGS84
constexpr double kSemiMajorM = 6378137.0;
constexpr double kFlattening = 1.0 / 298.257223563;
constexpr double kScale = 0.9996;
constexpr double kFalseEastingKm = 500.0;

double sq(double v) { return v * v; }

}  // namespace

UtmZone UtmZone::parse(std::string_view id) {
  if (id.empty()) throw std::invalid_argument("empty UTM zone id");
  std::size_t i = 0;
  int num = 0;
  while (i < id.size() && std::isdigit(static_cast<unsigned char>(id[i]))) {
    num = num * 10 + (id[i] - '0');
    ++i;
  }
  if (num < 1 || num > 60)
    throw std::invalid_argument("UTM zone number out of range: " + std::string(id));
  bool north = true;
  if (i < id.size()) {
    const char band = static_cast<char>(std::toupper(static_cast<unsigned char>(id[i])));
    if (i + 1 != id.size() || band < 'C' || band > 'X' || band == 'I' || band == 'O')
      throw std::invalid_argument("bad UTM band letter in zone id: " + std::string(id));
    north = band >= 'N';
  }
  return UtmZone{num, north};
}

std::string UtmZone::str() const {
  return std::to_string(number) + (north ? "N" : "S");
}

UtmProjector::UtmProjector(UtmZone zone) : zone_(zone) {
  lon0_rad_ = zone.central_meridian_deg() * kDeg;
  const double n = kFlattening / (2.0 - kFlattening);
  const double n2 = n * n, n3 = n2 * n, n4 = n3 * n, n5 = n4 * n, n6 = n5 * n;
  kA_ = kSemiMajorM / (1.0 + n) * (1.0 + n2 / 4 + n4 / 64 + n6 / 256) * kScale / 1000.0;

  alpha_[1] = n / 2 - 2 * n2 / 3 + 5 * n3 / 16 + 41 * n4 / 180 - 127 * n5 / 288 + 7891 * n6 / 37800;
  alpha_[2] = 13 * n2 / 48 - 3 * n3 / 5 + 557 * n4 / 1440 + 281 * n5 / 630 - 1983433.0 * n6 / 1935360;
  alpha_[3] = 61 * n3 / 240 - 103 * n4 / 140 + 15061 * n5 / 26880 + 167603.0 * n6 / 181440;
  alpha_[4] = 49561.0 * n4 / 161280 - 179 * n5 / 168 + 6601661.0 * n6 / 7257600;
  alpha_[5] = 34729.0 * n5 / 80640 - 3418889.0 * n6 / 1995840;
  alpha_[6] = 212378941.0 * n6 / 319334400;

  beta_[1] = n / 2 - 2 * n2 / 3 + 37 * n3 / 96 - n4 / 360 - 81 * n5 / 512 + 96199.0 * n6 / 604800;
  beta_[2] = n2 / 48 + n3 / 15 - 437 * n4 / 1440 + 46 * n5 / 105 - 1118711.0 * n6 / 3870720;
  beta_[3] = 17 * n3 / 480 - 37 * n4 / 840 - 209 * n5 / 4480 + 5569.0 * n6 / 90720;
  beta_[4] = 4397.0 * n4 / 161280 - 11 * n5 / 504 - 830251.0 * n6 / 7257600;
  beta_[5] = 4583.0 * n5 / 161280 - 108847.0 * n6 / 3991680;
  beta_[6] = 20648693.0 * n6 / 638668800;
}

XY UtmProjector::forward(const GeoPoint& p) const {
  validate_geo(p);
  if (std::abs(p.lat) > 84.0)
    throw std::invalid_argument("latitude outside UTM validity band (+-84 deg): " +
                                std::to_string(p.lat));
  const double e2 = kFlattening * (2.0 - kFlattening);
  const double e = std::sqrt(e2);

  const double phi = p.lat * kDeg;
  double lam = p.lon * kDeg - lon0_rad_;
  if (lam > kPi) lam -= 2 * kPi;
  if (lam < -kPi) lam += 2 * kPi;

  // conformal latitude via tau' (Karney 2011)
  const double tau = std::tan(phi);
  const double sigma = std::sinh(e * std::atanh(e * tau / std::sqrt(1.0 + tau * tau)));
  const double taup = tau * std::sqrt(1.0 + sigma * sigma) - sigma * std::sqrt(1.0 + tau * tau);

  const double xip = std::atan2(taup, std::cos(lam));
  const double etap = std::asinh(std::sin(lam) / std::hypot(taup, std::cos(lam)));

  double xi = xip, eta = etap;
  for (int j = 1; j <= 6; ++j) {
    xi += alpha_[j] * std::sin(2 * j * xip) * std::cosh(2 * j * etap);
    eta += alpha_[j] * std::cos(2 * j * xip) * std::sinh(2 * j * etap);
  }
  // southern hemisphere carries the 10000 km false northing
  const double fn = zone_.north ? 0.0 : 10000.0;
  return XY{kA_ * eta + kFalseEastingKm, kA_ * xi + fn};
}

GeoPoint UtmProjector::inverse(const XY& q) const {
  const double e2 = kFlattening * (2.0 - kFlattening);
  const double e = std::sqrt(e2);
  const double fn = zone_.north ? 0.0 : 10000.0;

  const double xi = (q.y - fn) / kA_;
  const double eta = (q.x - kFalseEastingKm) / kA_;

  double xip = xi, etap = eta;
  for (int j = 1; j <= 6; ++j) {
    xip -= beta_[j] * std::sin(2 * j * xi) * std::cosh(2 * j * eta);
    etap -= beta_[j] * std::cos(2 * j * xi) * std::sinh(2 * j * eta);
  }

  const double taup = std::sin(xip) / std::hypot(std::sinh(etap), std::cos(xip));
  const double lam = std::atan2(std::sinh(etap), std::cos(xip));

  // invert tau -> tau' by Newton iteration
  const double e2m = 1.0 - e2;
  double tau = taup / std::sqrt(e2m);
  const double stol = 1e-13 * std::max(1.0, std::abs(taup));
  for (int it = 0; it < 8; ++it) {
    const double sigma = std::sinh(e * std::atanh(e * tau / std::sqrt(1.0 + tau * tau)));
    const double taupa =
        tau * std::sqrt(1.0 + sigma * sigma) - sigma * std::sqrt(1.0 + tau * tau);
    const double dtau = (taup - taupa) * (1.0 + e2m * tau * tau) /
                        (e2m * std::sqrt(1.0 + tau * tau) * std::sqrt(1.0 + taupa * taupa));
    tau += dtau;
    if (std::abs(dtau) < stol) break;
  }

  GeoPoint p;
  p.lat = std::atan(tau) / kDeg;
  p.lon = (lam + lon0_rad_) / kDeg;
  if (p.lon > 180.0) p.lon -= 360.0;
  if (p.lon < -180.0) p.lon += 360.0;
  return p;
}

namespace {

// Distance from point to segment in squared degrees; used for the
// boundary-counts-as-inside rule.
bool on_segment(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b) {
  const double vx = b.lon - a.lon, vy = b.lat - a.lat;
  const double wx = p.lon - a.lon, wy = p.lat - a.lat;
  const double vv = vx * vx + vy * vy;
  double t = vv > 0 ? (wx * vx + wy * vy) / vv : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = wx - t * vx, dy = wy - t * vy;
  return dx * dx + dy * dy < 1e-18;
}

bool point_in_polygon(const GeoPoint& p, const RegionPolygon& poly) {
  const auto& v = poly.vertices;
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i)
    if (on_segment(p, v[i], v[(i + 1) % n])) return true;
  bool inside = false;
  for (std::size_t i = 0; i < n; ++i) {
    const GeoPoint& a = v[i];
    const GeoPoint& b = v[(i + 1) % n];
    if ((a.lat > p.lat) != (b.lat > p.lat)) {
      const double xs = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
      if (p.lon < xs) inside = !inside;
    }
  }
  return inside;
}

}  // namespace

std::optional<std::string> classify_region(const GeoPoint& p,
                                           std::span<const RegionPolygon> polys) {
  for (const auto& poly : polys) {
    if (poly.vertices.size() < 3)
      throw std::invalid_argument("degenerate region polygon: " + poly.label);
    if (point_in_polygon(p, poly)) return poly.label;
  }
  return std::nullopt;
}

Region region_from_label(const std::optional<std::string>& label) {
  if (!label) return Region::none;
  if (*label == "north") return Region::north;
  if (*label == "south") return Region::south;
  return Region::none;
}

const std::vector<RegionPolygon>& default_region_polygons() {
  static const std::vector<RegionPolygon> polys = {
      {"north",
       {{34.5175, -121.5250},
        {39.8384, -125.2341},
        {41.3595, -124.1684},
        {41.3995, -120.7227},
        {37.9775, -116.6225}}},
      {"south",
       {{37.9775, -116.6225},
        {35.2944, -113.4142},
        {31.4772, -115.0250},
        {31.0082, -117.6898},
        {34.5175, -121.5250}}}};
  return polys;
}

std::vector<RegionPolygon> load_region_polygons(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open polygon file: " + path.string());
  nlohmann::json j;
  in >> j;
  std::vector<RegionPolygon> polys;
  for (const auto& item : j) {
    RegionPolygon poly;
    poly.label = item.at("label").get<std::string>();
    for (const auto& v : item.at("vertices")) {
      GeoPoint p{v.at(0).get<double>(), v.at(1).get<double>()};
      validate_geo(p);
      poly.vertices.push_back(p);
    }
    if (poly.vertices.size() < 3)
      throw std::runtime_error("polygon with fewer than 3 vertices: " + poly.label);
    polys.push_back(std::move(poly));
  }
  return polys;
}

void save_region_polygons(std::span<const RegionPolygon> polys,
                          const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& poly : polys) {
    nlohmann::json verts = nlohmann::json::array();
    for (const auto& v : poly.vertices) verts.push_back({v.lat, v.lon});
    j.push_back({{"label", poly.label}, {"vertices", verts}});
  }
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

}  // namespace negmm
