#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "negmm/bundle.hpp"
#include "negmm/ingest.hpp"
#include "negmm/validate.hpp"

namespace negmm {

struct PipelineConfig {
  std::filesystem::path flatfile;
  std::filesystem::path c7_sidecar;
  std::optional<std::filesystem::path> polygons_path;
  std::optional<std::filesystem::path> grid_path;
  std::filesystem::path out_dir;
  std::string zone = "11N";
  std::vector<double> freqs;         // empty -> all residual columns
  std::vector<double> phase1_freqs;  // empty -> every other frequency
  SamplerConfig sampler;
  PriorConfig priors;
  SmoothingRules smoothing;
  std::uint64_t seed = 1;
  int workers = 1;
  bool write_draws = true;
  std::string canonical_text;  // config JSON as given, hashed into the manifest

  static PipelineConfig from_json_file(const std::filesystem::path& path);
  void validate() const;
};

// ingest -> phase-1 fits on the frequency subset -> hyperparameter smoothing
// -> phase-2 fits on all frequencies -> aleatory post-processing ->
// inter-frequency correlation -> bundle write.
ModelBundle run_pipeline(const PipelineConfig& cfg, std::ostream& log);

// Aleatory post-processing of phase-2 fits: within-event residual sds split
// at the magnitude breakpoints, then quartic smoothing when enough
// frequencies are available.
AleatoryModel extract_aleatory(const Dataset& data,
                               std::span<const PosteriorSummary> phase2,
                               const PriorConfig& pc, double mag_lo = 5.0,
                               double mag_hi = 6.5);

// Empirical inter-frequency correlations of a term from per-frequency
// posterior means, pooled over instances.
EmpiricalCorr empirical_corr_from_fits(std::span<const PosteriorSummary> fits,
                                       const std::string& term_prefix, int offset,
                                       int count);

}  // namespace negmm
