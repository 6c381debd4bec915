#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "negmm/geo.hpp"
#include "negmm/model.hpp"

namespace negmm {

struct IngestOptions {
  UtmZone zone{11, true};
  std::vector<RegionPolygon> polygons;  // empty -> built-in defaults
  std::optional<CellGrid> grid;         // absent -> cover the data bbox
  double grid_dx = 25.0, grid_dy = 25.0;
  // A row whose coordinate-derived ray length disagrees with the rrup column
  // beyond this relative tolerance is inconsistent.
  double rrup_tolerance_rel = 1e-3;
  bool skip_bad_rows = false;  // log and continue instead of aborting
  std::optional<std::vector<double>> freqs;  // subset of residual columns to keep
};

struct IngestReport {
  int rows_in = 0;
  int records = 0, events = 0, stations = 0;
  int cells_crossed = 0;
  int rejected = 0;
  std::vector<std::string> reject_log;
  std::vector<std::string> warnings;
};

// Flatfile schema: event_id,station_id,mag,rrup_km,vs30,eq_lat,eq_lon,
// sta_lat,sta_lon,cls_lat,cls_lon,cls_depth_km,res_f<freq>...
// The c7 sidecar is {"freqs": [...], "c7": [...]}. Residual columns are the
// ergodic total residuals; ingestion adds c7*rrup back to form the working
// residuals.
Dataset ingest_flatfile(const std::filesystem::path& csv,
                        const std::filesystem::path& c7_json,
                        const IngestOptions& opt = {}, IngestReport* report = nullptr);

// Inverse of ingest for synthetic data: projects coordinates back to lat/lon
// and subtracts the backbone attenuation from the stored working residuals.
void write_flatfile(const Dataset& data, const std::filesystem::path& csv,
                    const std::filesystem::path& c7_json, const UtmZone& zone);

}  // namespace negmm
