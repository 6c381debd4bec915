#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "negmm/cells.hpp"
#include "negmm/rng.hpp"
#include "negmm/types.hpp"

namespace negmm {

struct EventInfo {
  std::string id;
  XY xy;           // epicentral projected coordinates, km
  double mag = 0.0;
  Region region = Region::none;
};

struct StationInfo {
  std::string id;
  XY xy;
};

// One ground-motion observation. Residuals live columnar in Dataset; the
// record row caries indices into the event/station tables.
struct Record {
  int event = -1;
  int station = -1;
  double mag = 0.0;
  double r_rup = 0.0;   // km
  double vs30 = 0.0;    // m/s
  XY cls_xy;            // closest point on rupture, projected
  double cls_depth = 0.0;
};

struct Dataset {
  std::vector<EventInfo> events;
  std::vector<StationInfo> stations;
  std::vector<Record> records;
  std::vector<double> freqs;  // Hz, sorted
  std::vector<double> c7;     // backbone anelastic coefficient per frequency
  // Working residuals per (record, frequency): ergodic total residual with the
  // backbone anelastic attenuation added back (ln EAS - f_erg + c7 * R_rup).
  Eigen::MatrixXd residuals;
  SegmentMatrix segments;
  CellGrid grid;

  int n_records() const { return static_cast<int>(records.size()); }
  int n_events() const { return static_cast<int>(events.size()); }
  int n_stations() const { return static_cast<int>(stations.size()); }
  int freq_index(double f) const;  // throws listing available frequencies
  std::vector<XY> event_xy() const;
  std::vector<XY> station_xy() const;
};

// Full parameter vector of the hierarchical model at one frequency.
struct ModelParams {
  double dc0 = 0.0;
  double dc0e_north = 0.0;
  double dc0e_south = 0.0;
  Eigen::VectorXd dc1e;  // per event
  Eigen::VectorXd dc1a;  // per station, finite correlation length
  Eigen::VectorXd dc1b;  // per station, zero correlation length
  Eigen::VectorXd c_ca;  // per cell, <= 0
  Eigen::VectorXd dB;    // between-event terms
  double phi0 = 0.3;
  double tau0 = 0.3;
};

struct HyperParams {
  double ell_1e = 16.7;
  double omega_1e = 0.05;
  double ell_1as = 16.7;
  double omega_1as = 0.05;
  double omega_1bs = 0.45;
  double ell_ca1 = 16.7;
  double omega_ca1 = 0.05;
  double omega_ca2 = 0.05;
};

struct PriorConfig {
  double dc0_sd = 0.1;
  double dc0e_sd = 0.2;
  double ell_invgamma_alpha = 2.0;
  double ell_invgamma_beta = 50.0;   // mode beta/(alpha+1) = 16.7 km
  double omega_exp_rate = 20.0;
  double omega1b_ln_mu = -0.8;
  double omega1b_ln_sd = 0.3;
  double phi0_ln_mu = -1.3;
  double phi0_ln_sd = 0.3;
  double tau0_ln_mu = -1.0;
  double tau0_ln_sd = 0.3;
  double mask_mag_max = 5.0;   // regional constant applies below this magnitude
  double mask_freq_max = 5.0;  // and below this frequency, Hz
  double jitter_rel = 1e-9;
};

enum class Phase { one = 1, two = 2 };

// Regional-constant selector: north/south term for small-magnitude records at
// low frequency, none otherwise.
Region dc0e_selector(double mag, Region region, double freq, const PriorConfig& pc);

// Median non-ergodic adjustment of the working residual for one record
// (Eq. 8 assembly over the de-attenuated backbone).
double median_nonergodic(const Dataset& data, int record, const ModelParams& p,
                         double freq, const PriorConfig& pc);

// Gaussian likelihood of the working residuals about median + dB, sd phi0.
double log_likelihood(const Dataset& data, int freq_index, const ModelParams& p,
                      const PriorConfig& pc);

// Centered-parameterization log posterior density (unnormalized). GP priors
// evaluated as multivariate normal densities on the coefficient values;
// positive c_ca entries give -inf. Phase 2 treats the eight spatial
// hyperparameters as fixed constants (no prior terms).
double log_posterior(const Dataset& data, int freq_index, const ModelParams& p,
                     const HyperParams& h, Phase phase, const PriorConfig& pc);

// Unconstrained-space posterior used by the samplers: non-centered latent
// normals for the GP vectors, upper-bound transform for the cell coefficients,
// log transforms for positive scalars, all Jacobians included.
class PosteriorDensity {
 public:
  PosteriorDensity(const Dataset& data, int freq_index, Phase phase,
                   const PriorConfig& pc, const HyperParams* fixed_hyper = nullptr);
  ~PosteriorDensity();
  PosteriorDensity(const PosteriorDensity&) = delete;
  PosteriorDensity& operator=(const PosteriorDensity&) = delete;

  int dim() const;
  double freq() const;
  Phase phase() const;

  // Returns the log density and fills grad (same size as q); -inf with zero
  // gradient on numerically invalid states.
  double logp_grad(const Eigen::VectorXd& q, Eigen::VectorXd& grad) const;
  double logp(const Eigen::VectorXd& q) const;

  ModelParams unpack(const Eigen::VectorXd& q) const;
  HyperParams hyper_of(const Eigen::VectorXd& q) const;

  // log |d(constrained)/d(unconstrained)| at q; the exact discrepancy between
  // this density and the centered one at corresponding states.
  double transform_log_jacobian(const Eigen::VectorXd& q) const;

  // Names of the constrained parameters reported in summaries, aligned with
  // constrained(q).
  const std::vector<std::string>& constrained_names() const;
  Eigen::VectorXd constrained(const Eigen::VectorXd& q) const;

  Eigen::VectorXd initial_point(Rng& rng) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace negmm
