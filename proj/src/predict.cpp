#include "negmm/predict.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "negmm/aleatory.hpp"

namespace negmm {
namespace {

// Factorize the known-point Gram matrix. Exact (jitter-free) when possible so
// that conditioning at coincident points reproduces known values; jitter is
// escalated only when the factorization needs it.
Eigen::LLT<Eigen::MatrixXd> factor_known(const CoefficientField& field) {
  Eigen::MatrixXd k = cov_matrix(field.kernel, field.known, 0.0);
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  double jitter = kJitterRel;
  while (llt.info() != Eigen::Success && jitter < 1e-2) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter * field.kernel.omega * field.kernel.omega;
    llt.compute(kj);
    jitter *= 10.0;
  }
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("known-point covariance not factorizable for term " +
                             field.term);
  return llt;
}

Eigen::MatrixXd cross_to_new(const CoefficientField& field, std::span<const XY> new_pts,
                             std::span<const int> new_ids) {
  return cross_cov(field.kernel, field.known, new_pts,
                   field.cell_ids.empty() ? std::span<const int>{} : field.cell_ids,
                   new_ids);
}

void clamp_mean(const CoefficientField& field, Eigen::VectorXd& mean, int& count) {
  count = 0;
  if (!field.clamp_above_zero) return;
  for (int i = 0; i < mean.size(); ++i)
    if (mean[i] > 0.0) {
      mean[i] = 0.0;
      ++count;
    }
}

}  // namespace

Conditioned condition_field(const CoefficientField& field, std::span<const XY> new_pts,
                            std::span<const int> new_cell_ids) {
  field.kernel.validate();
  const int n_new = static_cast<int>(new_pts.size());
  Conditioned out;
  if (n_new == 0) {
    out.mean.resize(0);
    out.cov.resize(0, 0);
    return out;
  }
  // prior variance at the new points includes the nugget: a query point stands
  // for the cell identity at that location
  Eigen::MatrixXd k_star = cov_matrix(field.kernel, new_pts, 0.0);

  if (field.known.empty()) {
    out.mean = Eigen::VectorXd::Constant(n_new, field.prior_mean);
    out.cov = std::move(k_star);
    return out;
  }
  if (field.mean.size() != static_cast<int>(field.known.size()) ||
      field.sd.size() != field.mean.size())
    throw std::invalid_argument("field mean/sd length mismatch");

  const auto llt = factor_known(field);
  const Eigen::MatrixXd k = cross_to_new(field, new_pts, new_cell_ids);
  const Eigen::MatrixXd a = llt.solve(k);  // K^-1 k, known x new

  out.mean = Eigen::VectorXd::Constant(n_new, field.prior_mean) +
             a.transpose() * (field.mean.array() - field.prior_mean).matrix();
  Eigen::MatrixXd cov = k_star - k.transpose() * a;
  cov.noalias() += a.transpose() * field.sd.array().square().matrix().asDiagonal() * a;
  cov = 0.5 * (cov + cov.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.eigenvalues().minCoeff() < 0.0) {
    const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
    cov = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
  }
  out.cov = std::move(cov);
  clamp_mean(field, out.mean, out.clamp_count);
  return out;
}

int FrequencyFit::station_index(const std::string& id) const {
  for (std::size_t i = 0; i < station_ids.size(); ++i)
    if (station_ids[i] == id) return static_cast<int>(i);
  return -1;
}

ScenarioPrediction predict_scenario(const ScenarioRequest& req, const FrequencyFit& fit,
                                    const CellGrid& grid, const PriorConfig& pc,
                                    const AleatoryModel* aleatory) {
  ScenarioPrediction out;
  out.dc0_mean = fit.dc0_mean;
  out.dc0_var = fit.dc0_sd * fit.dc0_sd;

  switch (dc0e_selector(req.mag, req.region, req.freq, pc)) {
    case Region::north:
      out.dc0e_mean = fit.dc0e_north_mean;
      out.dc0e_var = fit.dc0e_north_sd * fit.dc0e_north_sd;
      break;
    case Region::south:
      out.dc0e_mean = fit.dc0e_south_mean;
      out.dc0e_var = fit.dc0e_south_sd * fit.dc0e_south_sd;
      break;
    case Region::none:
      break;
  }

  {
    const XY pts[1] = {req.eq_xy};
    const Conditioned c = condition_field(fit.dc1e, pts);
    out.dc1e_mean = c.mean[0];
    out.dc1e_var = std::max(0.0, c.cov(0, 0));
  }
  {
    const XY pts[1] = {req.sta_xy};
    const Conditioned c = condition_field(fit.dc1a, pts);
    out.dc1a_mean = c.mean[0];
    out.dc1a_var = std::max(0.0, c.cov(0, 0));
  }
  if (req.station_id) {
    const int s = fit.station_index(*req.station_id);
    if (s >= 0) {
      out.dc1b_mean = fit.dc1b_mean[s];
      out.dc1b_var = fit.dc1b_sd[s] * fit.dc1b_sd[s];
    } else {
      out.dc1b_mean = 0.0;
      out.dc1b_var = fit.omega_1bs * fit.omega_1bs;
    }
  } else {
    out.dc1b_mean = 0.0;
    out.dc1b_var = fit.omega_1bs * fit.omega_1bs;
  }

  // attenuation along the new ray; cells are fitted locations, so their
  // posterior means and sds apply directly
  const Ray3 ray{req.cls_xy, req.cls_depth, req.sta_xy, 0.0};
  const auto segs = segment_ray(grid, ray);
  double path_mean = 0.0, path_var = 0.0;
  for (const Segment& s : segs) {
    const double m = std::min(0.0, fit.cca.mean[s.cell]);
    path_mean += m * s.dr;
    path_var += s.dr * s.dr * fit.cca.sd[s.cell] * fit.cca.sd[s.cell];
  }
  out.path_mean = path_mean;
  out.path_var = path_var;

  out.median = out.dc0_mean + out.dc0e_mean + out.dc1e_mean + out.dc1a_mean +
               out.dc1b_mean + out.path_mean;
  out.epistemic_sd = std::sqrt(out.dc0_var + out.dc0e_var + out.dc1e_var +
                               out.dc1a_var + out.dc1b_var + out.path_var);
  if (aleatory) {
    out.phi0 = aleatory->phi0(req.mag, req.freq);
    out.tau0 = aleatory->tau0(req.mag, req.freq);
  } else {
    out.phi0 = fit.phi0;
    out.tau0 = fit.tau0;
  }
  out.total_aleatory = std::sqrt(out.phi0 * out.phi0 + out.tau0 * out.tau0);
  return out;
}

CoefficientMap export_coefficient_map(const CoefficientField& field,
                                      std::span<const XY> query,
                                      const UtmProjector& proj) {
  CoefficientMap map;
  const int n = static_cast<int>(query.size());
  map.mean.resize(n);
  map.sd.resize(n);
  map.points.reserve(n);
  for (const XY& p : query) map.points.push_back(proj.inverse(p));
  if (n == 0) return map;

  if (field.known.empty()) {
    map.mean.setConstant(field.prior_mean);
    double pv = field.kernel.omega * field.kernel.omega;
    if (field.kernel.family == KernelFamily::exponential_plus_nugget)
      pv += field.kernel.omega_nugget * field.kernel.omega_nugget;
    map.sd.setConstant(std::sqrt(pv));
    return map;
  }

  const auto llt = factor_known(field);
  const Eigen::MatrixXd k = cross_to_new(field, query, {});
  const Eigen::MatrixXd a = llt.solve(k);
  const Eigen::VectorXd psi = field.sd.array().square().matrix();
  double prior_var = field.kernel.omega * field.kernel.omega;
  if (field.kernel.family == KernelFamily::exponential_plus_nugget)
    prior_var += field.kernel.omega_nugget * field.kernel.omega_nugget;

  int clamps = 0;
  for (int j = 0; j < n; ++j) {
    double m = field.prior_mean +
               a.col(j).dot((field.mean.array() - field.prior_mean).matrix());
    if (field.clamp_above_zero && m > 0.0) {
      m = 0.0;
      ++clamps;
    }
    double v = prior_var - k.col(j).dot(a.col(j)) +
               a.col(j).dot(psi.cwiseProduct(a.col(j)));
    map.mean[j] = m;
    map.sd[j] = std::sqrt(std::max(0.0, v));
  }
  (void)clamps;
  return map;
}

void write_coefficient_map_csv(const CoefficientMap& map,
                               const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "lon,lat,mean,sd\n";
  out.precision(17);
  for (std::size_t i = 0; i < map.points.size(); ++i)
    out << map.points[i].lon << ',' << map.points[i].lat << ',' << map.mean[i] << ','
        << map.sd[i] << '\n';
}

void write_coefficient_map_geojson(const CoefficientMap& map,
                                   const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "{\"type\":\"FeatureCollection\",\"features\":[";
  for (std::size_t i = 0; i < map.points.size(); ++i) {
    if (i) out << ',';
    out << "{\"type\":\"Feature\",\"geometry\":{\"type\":\"Point\",\"coordinates\":["
        << map.points[i].lon << ',' << map.points[i].lat
        << "]},\"properties\":{\"mean\":" << map.mean[i] << ",\"sd\":" << map.sd[i]
        << "}}";
  }
  out << "]}\n";
}

}  // namespace negmm
