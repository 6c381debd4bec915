#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "negmm/inference.hpp"
#include "negmm/model.hpp"

namespace negmm {

// Earthquake-grouped partition: every record of an event lands in exactly one
// fold, so held-out evaluation sees unseen events only.
struct FoldPlan {
  int k = 5;
  std::uint64_t seed = 0;
  std::vector<int> assignment;  // event index -> fold
};

FoldPlan make_folds(int n_events, int k, std::uint64_t seed);

struct SyntheticSpec {
  int n_events = 60;
  int n_stations = 150;
  int min_stations_per_event = 8;
  int max_stations_per_event = 18;
  CellGrid grid;              // default set in generate_synthetic when empty
  double margin_km = 30.0;    // keep sources/sites away from the grid edge
  HyperParams hyper;
  double dc0 = 0.0, dc0e_north = 0.0, dc0e_south = 0.0;
  double phi0 = 0.35;
  double tau0 = 0.38;
  std::vector<double> freqs{5.011872};
  std::vector<double> c7;     // per frequency; defaults to -0.01
  double mag_lo = 3.0, mag_hi = 7.5;
  double depth_min_km = 2.0, depth_max_km = 12.0;
  std::uint64_t seed = 1;
};

// Ground truth the generator drew, per frequency.
struct SyntheticTruth {
  std::vector<Eigen::VectorXd> dc1e, dc1a, dc1b, c_ca, dB;
  HyperParams hyper;
  double dc0 = 0.0, dc0e_north = 0.0, dc0e_south = 0.0;
  double phi0 = 0.0, tau0 = 0.0;
};

// Draws coefficient fields from their priors at random locations, cell
// attenuation from the zero-truncated prior (Gibbs sweeps), event and record
// noise from their normals, and assembles working residuals.
Dataset generate_synthetic(const SyntheticSpec& spec, SyntheticTruth* truth = nullptr);

struct CrossvalConfig {
  int k = 5;
  std::uint64_t seed = 0;
  int freq_index = 0;
  SamplerConfig sampler;
  PriorConfig priors;
  bool zero_dc1e = false;  // zero the source term for held-out events
};

struct FoldResult {
  int fold = 0;
  int n_test = 0;
  double rmse_nonergodic = 0.0;
  double rmse_ergodic = 0.0;
  bool failed = false;
  std::string note;
};

struct CrossvalReport {
  FoldPlan plan;
  std::vector<FoldResult> folds;
  double avg_nonergodic = 0.0;  // over non-failed folds
  double avg_ergodic = 0.0;
  int n_failed = 0;
};

// Fold fits run phase 2 with the supplied pinned hyperparameters (full-data
// smoothed values); held-out records are predicted through the closed-form
// conditioning path.
CrossvalReport crossval(const Dataset& data, const HyperParams& pinned,
                        const CrossvalConfig& cfg);

// Train-side restriction of a dataset to the events outside one fold.
Dataset subset_for_fold(const Dataset& data, const FoldPlan& plan, int fold,
                        std::vector<int>* test_records = nullptr);

}  // namespace negmm
