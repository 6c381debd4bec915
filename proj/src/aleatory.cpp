#include "negmm/aleatory.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace negmm {
namespace {

double poly_eval(const std::array<double, 5>& c, double lf) {
  // Horner in ln f
  return ((((c[4] * lf) + c[3]) * lf + c[2]) * lf + c[1]) * lf + c[0];
}

std::array<double, 5> quartic_fit(std::span<const double> lf,
                                  std::span<const double> y) {
  const int n = static_cast<int>(lf.size());
  Eigen::MatrixXd a(n, 5);
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) {
    double p = 1.0;
    for (int k = 0; k < 5; ++k) {
      a(i, k) = p;
      p *= lf[i];
    }
    rhs[i] = y[i];
  }
  const Eigen::VectorXd c = a.colPivHouseholderQr().solve(rhs);
  return {c[0], c[1], c[2], c[3], c[4]};
}

}  // namespace

double AleatoryModel::tau0(double, double freq) const {
  return poly_eval(tau0_poly, std::log(freq));
}

double AleatoryModel::phi0_m1(double freq) const {
  return poly_eval(phi0_m1_poly, std::log(freq));
}

double AleatoryModel::phi0_m2(double freq) const {
  return poly_eval(phi0_m2_poly, std::log(freq));
}

double AleatoryModel::phi0(double mag, double freq) const {
  const double m1 = phi0_m1(freq);
  const double m2 = phi0_m2(freq);
  if (mag <= mag_lo) return m1;
  if (mag >= mag_hi) return m2;
  return m1 + (m2 - m1) * (mag - mag_lo) / (mag_hi - mag_lo);
}

double AleatoryModel::total_sigma(double mag, double freq) const {
  const double t = tau0(mag, freq);
  const double p = phi0(mag, freq);
  return std::sqrt(t * t + p * p);
}

AleatoryModel smooth_aleatory(std::span<const double> freqs,
                              std::span<const double> tau0,
                              std::span<const double> phi0_m1,
                              std::span<const double> phi0_m2, double mag_lo,
                              double mag_hi) {
  const std::size_t n = freqs.size();
  if (n < 5)
    throw std::invalid_argument("quartic smoothing needs at least 5 frequencies");
  if (tau0.size() != n || phi0_m1.size() != n || phi0_m2.size() != n)
    throw std::invalid_argument("aleatory series length mismatch");
  if (!(mag_hi > mag_lo))
    throw std::invalid_argument("magnitude breakpoints out of order");

  AleatoryModel m;
  m.freqs.assign(freqs.begin(), freqs.end());
  m.tau0_raw.assign(tau0.begin(), tau0.end());
  m.phi0_m1_raw.assign(phi0_m1.begin(), phi0_m1.end());
  m.phi0_m2_raw.assign(phi0_m2.begin(), phi0_m2.end());
  m.mag_lo = mag_lo;
  m.mag_hi = mag_hi;

  std::vector<double> lf(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(freqs[i] > 0.0)) throw std::invalid_argument("non-positive frequency");
    lf[i] = std::log(freqs[i]);
  }
  m.tau0_poly = quartic_fit(lf, tau0);
  m.phi0_m1_poly = quartic_fit(lf, phi0_m1);
  m.phi0_m2_poly = quartic_fit(lf, phi0_m2);

  for (std::size_t i = 0; i < n; ++i) {
    if (m.tau0(5.0, freqs[i]) <= 0.0 || m.phi0_m1(freqs[i]) <= 0.0 ||
        m.phi0_m2(freqs[i]) <= 0.0) {
      m.warnings.push_back("smoothed aleatory value non-positive at " +
                           std::to_string(freqs[i]) + " Hz");
    }
    if (m.phi0_m2_raw[i] > m.phi0_m1_raw[i]) {
      m.warnings.push_back("phi0_m2 exceeds phi0_m1 at " + std::to_string(freqs[i]) +
                           " Hz");
    }
  }
  return m;
}

void save_aleatory_json(const AleatoryModel& m, const std::filesystem::path& path) {
  nlohmann::json j;
  j["freqs"] = m.freqs;
  j["tau0_raw"] = m.tau0_raw;
  j["phi0_m1_raw"] = m.phi0_m1_raw;
  j["phi0_m2_raw"] = m.phi0_m2_raw;
  j["tau0_poly"] = m.tau0_poly;
  j["phi0_m1_poly"] = m.phi0_m1_poly;
  j["phi0_m2_poly"] = m.phi0_m2_poly;
  j["mag_breakpoints"] = {m.mag_lo, m.mag_hi};
  j["warnings"] = m.warnings;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

AleatoryModel load_aleatory_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  AleatoryModel m;
  m.freqs = j.at("freqs").get<std::vector<double>>();
  m.tau0_raw = j.at("tau0_raw").get<std::vector<double>>();
  m.phi0_m1_raw = j.at("phi0_m1_raw").get<std::vector<double>>();
  m.phi0_m2_raw = j.at("phi0_m2_raw").get<std::vector<double>>();
  m.tau0_poly = j.at("tau0_poly").get<std::array<double, 5>>();
  m.phi0_m1_poly = j.at("phi0_m1_poly").get<std::array<double, 5>>();
  m.phi0_m2_poly = j.at("phi0_m2_poly").get<std::array<double, 5>>();
  m.mag_lo = j.at("mag_breakpoints").at(0).get<double>();
  m.mag_hi = j.at("mag_breakpoints").at(1).get<double>();
  if (j.contains("warnings"))
    m.warnings = j.at("warnings").get<std::vector<std::string>>();
  return m;
}

}  // namespace negmm
