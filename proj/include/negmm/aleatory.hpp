#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace negmm {

// Magnitude-dependent aleatory standard deviations. tau0 is constant in
// magnitude; phi0 interpolates linearly between a small-magnitude and a
// large-magnitude level. All three are smoothed across frequency with a
// quartic polynomial in ln f.
struct AleatoryModel {
  std::vector<double> freqs;
  std::vector<double> tau0_raw, phi0_m1_raw, phi0_m2_raw;
  std::array<double, 5> tau0_poly{};    // coefficients in powers of ln f
  std::array<double, 5> phi0_m1_poly{};
  std::array<double, 5> phi0_m2_poly{};
  double mag_lo = 5.0;
  double mag_hi = 6.5;
  std::vector<std::string> warnings;

  double tau0(double mag, double freq) const;  // magnitude independent
  double phi0(double mag, double freq) const;
  double total_sigma(double mag, double freq) const;
  double phi0_m1(double freq) const;
  double phi0_m2(double freq) const;
};

// Ordinary least squares quartic in ln f per parameter; needs >= 5 frequencies.
AleatoryModel smooth_aleatory(std::span<const double> freqs,
                              std::span<const double> tau0,
                              std::span<const double> phi0_m1,
                              std::span<const double> phi0_m2,
                              double mag_lo = 5.0, double mag_hi = 6.5);

void save_aleatory_json(const AleatoryModel& m, const std::filesystem::path& path);
AleatoryModel load_aleatory_json(const std::filesystem::path& path);

}  // namespace negmm
