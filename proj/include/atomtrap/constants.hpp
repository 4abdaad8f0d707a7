#pragma once

#include <numbers>

namespace atomtrap {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// MHz (ordinary frequency) -> angular rad/s and back.
constexpr double mhz_to_angular(double mhz) { return kTwoPi * mhz * 1e6; }
constexpr double angular_to_mhz(double omega) { return omega / (kTwoPi * 1e6); }

struct PhysicalConstants {
  double kB = 1.380649e-23;          // J/K
  double hbar = 1.054571817e-34;     // J s
  double c = 2.99792458e8;           // m/s
  double mass = 1.443160648e-25;     // 87Rb, kg
  double gamma = kTwoPi * 6.0e6;     // natural linewidth, rad/s
  double lambda0 = 780e-9;           // fluorescence wavelength, m
  double excited_lifetime = 27e-9;   // 5P3/2, s
  double lambda_d1 = 794.978851e-9;  // m
  double lambda_d2 = 780.241209e-9;  // m
  double excited_hfs = kTwoPi * 266.65e6;  // F'=3 - F'=2 splitting, rad/s
  double doppler_temperature = 146e-6;     // K

  // All values positive and Gamma * tau within 2% of unity.
  bool consistent() const;
};

inline const PhysicalConstants& constants() {
  static const PhysicalConstants k{};
  return k;
}

// Energy in kelvin-equivalent (E / kB) to joules.
inline double kelvin_to_joule(double kelvin) { return kelvin * constants().kB; }

}  // namespace atomtrap
