#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "negmm/types.hpp"

namespace negmm {

// Regular grid of vertical prisms (unbounded in depth), indexed row-major
// from the southwest corner. Cell sizes in km.
struct CellGrid {
  XY origin;          // southwest corner
  double dx = 25.0;
  double dy = 25.0;
  int nx = 0;
  int ny = 0;

  int ncells() const { return nx * ny; }
  int cell_index(int ix, int iy) const { return iy * nx + ix; }
  XY midpoint(int cell) const {
    const int iy = cell / nx;
    const int ix = cell % nx;
    return XY{origin.x + (ix + 0.5) * dx, origin.y + (iy + 0.5) * dy};
  }
  std::vector<XY> midpoints() const;
  bool contains(const XY& p) const {
    return p.x >= origin.x && p.x <= origin.x + nx * dx && p.y >= origin.y &&
           p.y <= origin.y + ny * dy;
  }

  // Smallest whole-cell grid covering the box; degenerate boxes get one cell.
  static CellGrid cover(const XY& lo, const XY& hi, double dx, double dy);
};

// Straight ray from the closest point on the rupture to the site, with depths
// in km (positive down). Length is the 3-D Euclidean distance, which must
// equal the record's rupture distance.
struct Ray3 {
  XY start;
  double start_depth = 0.0;
  XY end;
  double end_depth = 0.0;

  double length() const {
    const double dz = end_depth - start_depth;
    const double dxy = distance(start, end);
    return std::sqrt(dxy * dxy + dz * dz);
  }
};

struct Segment {
  int cell;
  double dr;  // 3-D length inside the cell's prism, km
};

// Cell-path segmentation by incremental grid stepping. Segments are in
// traversal order; their sum telescopes to the ray length. Segments shorter
// than 1e-12 km are pruned. Throws if the horizontal footprint leaves the grid.
std::vector<Segment> segment_ray(const CellGrid& grid, const Ray3& ray);

// Sparse records-by-cells matrix of in-cell path lengths, CSR layout.
class SegmentMatrix {
 public:
  SegmentMatrix() = default;
  explicit SegmentMatrix(int ncells) : ncells_(ncells) {}

  void add_row(std::span<const Segment> segs);
  std::size_t rows() const { return row_ptr_.empty() ? 0 : row_ptr_.size() - 1; }
  int ncells() const { return ncells_; }

  std::span<const int> row_cells(std::size_t r) const {
    return {cols_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {vals_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  double row_sum(std::size_t r) const;

  void write_triplets_csv(const std::filesystem::path& path) const;
  static SegmentMatrix read_triplets_csv(const std::filesystem::path& path, int ncells);

 private:
  std::vector<std::size_t> row_ptr_{0};
  std::vector<int> cols_;
  std::vector<double> vals_;
  int ncells_ = 0;
};

struct CoverageStats {
  std::vector<int> path_count;       // rows with a nonzero entry per cell
  std::vector<double> total_length;  // summed traversed length per cell, km
};

CoverageStats coverage_stats(const SegmentMatrix& seg);

void write_grid_csv(const CellGrid& grid, const std::filesystem::path& path);
void save_grid_json(const CellGrid& grid, const std::filesystem::path& path);
CellGrid load_grid_json(const std::filesystem::path& path);

}  // namespace negmm
