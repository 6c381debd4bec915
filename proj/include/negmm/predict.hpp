#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "negmm/cells.hpp"
#include "negmm/geo.hpp"
#include "negmm/kernels.hpp"
#include "negmm/model.hpp"

namespace negmm {

// Fitted spatially varying coefficient: posterior mean and sd at the known
// locations plus the kernel that generated it. prior_mean is zero for the
// source/site constants and c7 for the cell attenuation.
struct CoefficientField {
  std::string term;  // dc1e | dc1a | c_ca
  std::vector<XY> known;
  Eigen::VectorXd mean;  // posterior means
  Eigen::VectorXd sd;    // posterior sds (diagonal epistemic covariance)
  KernelSpec kernel;
  double prior_mean = 0.0;
  std::vector<int> cell_ids;      // identity for the nugget term (c_ca only)
  bool clamp_above_zero = false;  // truncation consistency for c_ca
};

struct Conditioned {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // symmetric PSD after repair
  int clamp_count = 0;
};

// Closed-form predictive distribution at new locations: conditional mean of
// the posterior means and conditional covariance inflated by the epistemic
// uncertainty of the known coefficients. Empty known set returns the prior.
Conditioned condition_field(const CoefficientField& field, std::span<const XY> new_pts,
                            std::span<const int> new_cell_ids = {});

struct ScenarioRequest {
  XY eq_xy;
  XY sta_xy;
  XY cls_xy;
  double cls_depth = 0.0;
  double mag = 5.0;
  double freq = 5.0;
  std::optional<std::string> station_id;  // known station for dc1b
  Region region = Region::none;           // for the dc0e mask
};

struct ScenarioPrediction {
  double median = 0.0;        // natural-log median adjustment
  double epistemic_sd = 0.0;  // natural-log units
  double tau0 = 0.0, phi0 = 0.0, total_aleatory = 0.0;
  // per-term breakdown
  double dc0_mean = 0.0, dc0_var = 0.0;
  double dc0e_mean = 0.0, dc0e_var = 0.0;
  double dc1e_mean = 0.0, dc1e_var = 0.0;
  double dc1a_mean = 0.0, dc1a_var = 0.0;
  double dc1b_mean = 0.0, dc1b_var = 0.0;
  double path_mean = 0.0, path_var = 0.0;  // attenuation term c_ca . dR
};

// Per-frequency fitted state needed for prediction.
struct FrequencyFit {
  double freq = 0.0;
  double c7 = 0.0;
  double dc0_mean = 0.0, dc0_sd = 0.0;
  double dc0e_north_mean = 0.0, dc0e_north_sd = 0.0;
  double dc0e_south_mean = 0.0, dc0e_south_sd = 0.0;
  double phi0 = 0.0, tau0 = 0.0;
  double omega_1bs = 0.0;
  CoefficientField dc1e, dc1a, cca;
  std::vector<std::string> station_ids;  // aligned with dc1b values
  Eigen::VectorXd dc1b_mean, dc1b_sd;

  int station_index(const std::string& id) const;  // -1 when unknown
};

struct AleatoryModel;

// Magnitude-dependent aleatory values are taken from the model when provided,
// otherwise from the fit's posterior phi0/tau0.
ScenarioPrediction predict_scenario(const ScenarioRequest& req, const FrequencyFit& fit,
                                    const CellGrid& grid, const PriorConfig& pc = {},
                                    const AleatoryModel* aleatory = nullptr);

// Tabular map of a coefficient field over query points: lon/lat plus
// conditioned mean and sd. Marginal sds only (no cross covariance stored).
struct CoefficientMap {
  std::vector<GeoPoint> points;
  Eigen::VectorXd mean, sd;
};

CoefficientMap export_coefficient_map(const CoefficientField& field,
                                      std::span<const XY> query,
                                      const UtmProjector& proj);

void write_coefficient_map_csv(const CoefficientMap& map,
                               const std::filesystem::path& path);
void write_coefficient_map_geojson(const CoefficientMap& map,
                                   const std::filesystem::path& path);

}  // namespace negmm
