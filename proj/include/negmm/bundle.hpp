#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "negmm/aleatory.hpp"
#include "negmm/geo.hpp"
#include "negmm/ifcorr.hpp"
#include "negmm/inference.hpp"
#include "negmm/predict.hpp"

namespace negmm {

// Per-frequency fitted state assembled from a posterior summary.
FrequencyFit make_frequency_fit(std::span<const std::string> event_ids,
                                std::span<const XY> event_xy,
                                std::span<const std::string> station_ids,
                                std::span<const XY> station_xy, const CellGrid& grid,
                                const PosteriorSummary& summary, const HyperParams& h,
                                double c7);

FrequencyFit make_frequency_fit(const Dataset& data, const PosteriorSummary& summary,
                                const HyperParams& h, double c7);

// Versioned on-disk model directory: grid, coordinate tables, per-frequency
// posterior summaries and draws, smoothed hyperparameters, aleatory and
// correlation models, manifest with the config hash. Loading a bundle
// reproduces predictions bit-identically.
struct ModelBundle {
  std::string config_hash;
  std::uint64_t seed = 0;
  UtmZone zone{11, true};
  PriorConfig priors;
  CellGrid grid;
  std::vector<RegionPolygon> polygons;
  std::vector<double> freqs, c7;
  std::vector<int> phase1_freq_indices;

  std::vector<std::string> event_ids, station_ids;
  std::vector<XY> event_xy, station_xy;
  std::vector<double> event_mags;
  std::vector<Region> event_regions;

  SmoothedHyper smoothed;
  std::vector<PosteriorSummary> phase1;  // aligned with phase1_freq_indices
  std::vector<PosteriorSummary> phase2;  // aligned with freqs
  bool has_aleatory = false;
  AleatoryModel aleatory;
  std::map<std::string, CorrelationModel> correlations;

  int freq_index(double f) const;  // throws listing available frequencies
  FrequencyFit frequency_fit(double f) const;

  void save(const std::filesystem::path& dir) const;
  static ModelBundle load(const std::filesystem::path& dir);
};

// FNV-1a over the canonical config text; recorded in the manifest.
std::string config_hash_hex(const std::string& canonical);

void save_summary_csv(const PosteriorSummary& s, const std::filesystem::path& path);
void save_draws_csv(const PosteriorSummary& s, const std::filesystem::path& path);
PosteriorSummary load_summary_csv(const std::filesystem::path& path, double freq,
                                  Phase phase, int n_events, int n_stations,
                                  int n_cells);
void load_draws_csv(PosteriorSummary& s, const std::filesystem::path& path);

}  // namespace negmm
