#include "negmm/cells.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace negmm {

std::vector<XY> CellGrid::midpoints() const {
  std::vector<XY> pts;
  pts.reserve(static_cast<std::size_t>(ncells()));
  for (int c = 0; c < ncells(); ++c) pts.push_back(midpoint(c));
  return pts;
}

CellGrid CellGrid::cover(const XY& lo, const XY& hi, double dx, double dy) {
  if (!(dx > 0.0) || !(dy > 0.0))
    throw std::invalid_argument("cell sizes must be positive");
  if (hi.x < lo.x || hi.y < lo.y)
    throw std::invalid_argument("bounding box corners out of order");
  CellGrid g;
  g.dx = dx;
  g.dy = dy;
  g.origin = XY{std::floor(lo.x / dx) * dx, std::floor(lo.y / dy) * dy};
  g.nx = std::max(1, static_cast<int>(std::ceil((hi.x - g.origin.x) / dx - 1e-12)));
  g.ny = std::max(1, static_cast<int>(std::ceil((hi.y - g.origin.y) / dy - 1e-12)));
  // guard against roundoff leaving the corner outside
  while (g.origin.x + g.nx * dx < hi.x) ++g.nx;
  while (g.origin.y + g.ny * dy < hi.y) ++g.ny;
  return g;
}

namespace {

constexpr double kPruneKm = 1e-12;

[[noreturn]] void ray_outside_error(const Ray3& ray, const XY& offending,
                                    const char* which) {
  std::ostringstream os;
  os << "ray exits grid: " << which << " endpoint (" << offending.x << ", "
     << offending.y << ") of ray (" << ray.start.x << ", " << ray.start.y
     << ") -> (" << ray.end.x << ", " << ray.end.y << ") lies outside";
  throw std::runtime_error(os.str());
}

}  // namespace

std::vector<Segment> segment_ray(const CellGrid& grid, const Ray3& ray) {
  const double tol = 1e-9 * std::max({grid.dx, grid.dy, 1.0});
  const auto inside = [&](const XY& p) {
    return p.x >= grid.origin.x - tol && p.x <= grid.origin.x + grid.nx * grid.dx + tol &&
           p.y >= grid.origin.y - tol && p.y <= grid.origin.y + grid.ny * grid.dy + tol;
  };
  if (!inside(ray.start)) ray_outside_error(ray, ray.start, "start");
  if (!inside(ray.end)) ray_outside_error(ray, ray.end, "end");

  const double len = ray.length();
  const double hx = ray.end.x - ray.start.x;
  const double hy = ray.end.y - ray.start.y;

  const auto start_index = [&](double pos, double origin, double d, int n) {
    int i = static_cast<int>(std::floor((pos - origin) / d));
    return std::clamp(i, 0, n - 1);
  };
  int ix = start_index(ray.start.x, grid.origin.x, grid.dx, grid.nx);
  int iy = start_index(ray.start.y, grid.origin.y, grid.dy, grid.ny);

  const double inf = std::numeric_limits<double>::infinity();
  const int step_x = hx > 0 ? 1 : -1;
  const int step_y = hy > 0 ? 1 : -1;
  const double t_delta_x = hx != 0.0 ? grid.dx / std::abs(hx) : inf;
  const double t_delta_y = hy != 0.0 ? grid.dy / std::abs(hy) : inf;

  // parameter t in [0,1] along the ray at the first boundary crossing per axis
  auto first_crossing = [](double pos, double origin, double d, int i, double h) {
    if (h == 0.0) return std::numeric_limits<double>::infinity();
    const double edge = h > 0 ? origin + (i + 1) * d : origin + i * d;
    return (edge - pos) / h;
  };
  double t_max_x = first_crossing(ray.start.x, grid.origin.x, grid.dx, ix, hx);
  double t_max_y = first_crossing(ray.start.y, grid.origin.y, grid.dy, iy, hy);

  std::vector<Segment> segs;
  double t_seg_start = 0.0;
  const int max_steps = grid.nx + grid.ny + 4;
  for (int step = 0; step <= max_steps; ++step) {
    const double t_next = std::min({t_max_x, t_max_y, 1.0});
    const double dr = (t_next - t_seg_start) * len;
    const bool done = t_next >= 1.0;
    if (dr >= kPruneKm) {
      segs.push_back({grid.cell_index(ix, iy), dr});
      t_seg_start = t_next;
    } else if (done && !segs.empty()) {
      segs.back().dr += dr;  // fold sub-prune tail into the last segment
      t_seg_start = t_next;
    }
    if (done) break;
    // corner crossings advance both axes in one step; the diagonal neighbor
    // would receive a zero-length segment, which pruning drops
    if (t_max_x <= t_next) {
      ix += step_x;
      t_max_x += t_delta_x;
      if (ix < 0 || ix >= grid.nx) {
        if (t_next > 1.0 - 1e-12) break;
        ray_outside_error(ray, ray.end, "end");
      }
    }
    if (t_max_y <= t_next) {
      iy += step_y;
      t_max_y += t_delta_y;
      if (iy < 0 || iy >= grid.ny) {
        if (t_next > 1.0 - 1e-12) break;
        ray_outside_error(ray, ray.end, "end");
      }
    }
  }
  if (segs.empty()) segs.push_back({grid.cell_index(ix, iy), len});
  return segs;
}

void SegmentMatrix::add_row(std::span<const Segment> segs) {
  for (const Segment& s : segs) {
    if (s.cell < 0 || s.cell >= ncells_)
      throw std::out_of_range("segment cell index out of range");
    if (s.dr < 0.0) throw std::invalid_argument("negative segment length");
    cols_.push_back(s.cell);
    vals_.push_back(s.dr);
  }
  row_ptr_.push_back(cols_.size());
}

double SegmentMatrix::row_sum(std::size_t r) const {
  double s = 0.0;
  for (double v : row_values(r)) s += v;
  return s;
}

void SegmentMatrix::write_triplets_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "record_id,cell_id,dR_km\n";
  out.precision(17);
  for (std::size_t r = 0; r < rows(); ++r) {
    const auto cells = row_cells(r);
    const auto vals = row_values(r);
    for (std::size_t k = 0; k < cells.size(); ++k)
      out << r << ',' << cells[k] << ',' << vals[k] << '\n';
  }
}

SegmentMatrix SegmentMatrix::read_triplets_csv(const std::filesystem::path& path,
                                               int ncells) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);  // header
  SegmentMatrix m(ncells);
  std::vector<Segment> row;
  std::size_t current = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t rec, p1 = line.find(','), p2 = line.find(',', p1 + 1);
    rec = std::stoull(line.substr(0, p1));
    const int cell = std::stoi(line.substr(p1 + 1, p2 - p1 - 1));
    const double dr = std::stod(line.substr(p2 + 1));
    while (current < rec) {
      m.add_row(row);
      row.clear();
      ++current;
    }
    row.push_back({cell, dr});
  }
  m.add_row(row);
  return m;
}

CoverageStats coverage_stats(const SegmentMatrix& seg) {
  CoverageStats st;
  st.path_count.assign(seg.ncells(), 0);
  st.total_length.assign(seg.ncells(), 0.0);
  for (std::size_t r = 0; r < seg.rows(); ++r) {
    const auto cells = seg.row_cells(r);
    const auto vals = seg.row_values(r);
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (vals[k] > 0.0) {
        st.path_count[cells[k]] += 1;
        st.total_length[cells[k]] += vals[k];
      }
    }
  }
  return st;
}

void write_grid_csv(const CellGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "cell_id,x_mid,y_mid\n";
  out.precision(17);
  for (int c = 0; c < grid.ncells(); ++c) {
    const XY m = grid.midpoint(c);
    out << c << ',' << m.x << ',' << m.y << '\n';
  }
}

void save_grid_json(const CellGrid& grid, const std::filesystem::path& path) {
  nlohmann::json j = {{"origin", {grid.origin.x, grid.origin.y}},
                      {"dx", grid.dx},
                      {"dy", grid.dy},
                      {"nx", grid.nx},
                      {"ny", grid.ny}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

CellGrid load_grid_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  CellGrid g;
  g.origin = XY{j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>()};
  g.dx = j.at("dx").get<double>();
  g.dy = j.at("dy").get<double>();
  g.nx = j.at("nx").get<int>();
  g.ny = j.at("ny").get<int>();
  if (!(g.dx > 0) || !(g.dy > 0) || g.nx < 1 || g.ny < 1)
    throw std::runtime_error("invalid grid definition in " + path.string());
  return g;
}

}  // namespace negmm
