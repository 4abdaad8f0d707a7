#include "atomtrap/trap.hpp"

#include <cmath>

#include "atomtrap/error.hpp"

namespace atomtrap {
namespace {

struct Line {
  double wavelength;
  double weight;  // relative line strength, D2 : D1 = 2 : 1
};

constexpr double kD2Weight = 2.0 / 3.0;
constexpr double kD1Weight = 1.0 / 3.0;

void check_trap_args(double power, double waist, double trap_wavelength) {
  const auto& k = constants();
  if (!(power >= 0.0) || !std::isfinite(power)) throw DomainError("trap power must be >= 0");
  if (!(waist > 0.0) || !std::isfinite(waist)) throw DomainError("trap waist must be > 0");
  if (!(trap_wavelength > k.lambda_d1) || !std::isfinite(trap_wavelength))
    throw DomainError("trap wavelength must be red-detuned from both D lines (> 794.98 nm)");
}

double peak_intensity(double power, double waist) {
  return 2.0 * power / (std::numbers::pi * waist * waist);  // W/m^2
}

// Sum over D1, D2 of weight * 3 pi c^2 Gamma / (2 omega_i^3) * f(Delta_i).
template <class F>
double sum_lines(double trap_wavelength, F&& per_line) {
  const auto& k = constants();
  const double omega = kTwoPi * k.c / trap_wavelength;
  double total = 0.0;
  for (Line line : {Line{k.lambda_d2, kD2Weight}, Line{k.lambda_d1, kD1Weight}}) {
    const double omega_i = kTwoPi * k.c / line.wavelength;
    const double detuning = omega - omega_i;
    const double prefactor = 3.0 * std::numbers::pi * k.c * k.c / (2.0 * omega_i * omega_i * omega_i);
    total += line.weight * prefactor * per_line(detuning);
  }
  return total;
}

}  // namespace

double trap_depth(double power, double waist, double trap_wavelength) {
  check_trap_args(power, waist, trap_wavelength);
  const double gamma = constants().gamma;
  const double coeff = sum_lines(trap_wavelength, [gamma](double d) { return gamma / d; });
  const double potential = coeff * peak_intensity(power, waist);  // J, negative (attractive)
  return -potential / constants().kB * 1e3;
}

double photon_scattering_rate(double power, double waist, double trap_wavelength) {
  check_trap_args(power, waist, trap_wavelength);
  const double gamma = constants().gamma;
  const double coeff = sum_lines(trap_wavelength, [gamma](double d) { return (gamma / d) * (gamma / d); });
  return coeff * peak_intensity(power, waist) / constants().hbar;
}

double rabi_from_intensity(double intensity, double line_strength, double saturation_intensity) {
  if (!(intensity >= 0.0)) throw DomainError("intensity must be >= 0");
  if (!(line_strength >= 0.0)) throw DomainError("line strength must be >= 0");
  if (!(saturation_intensity > 0.0)) throw DomainError("saturation intensity must be > 0");
  return constants().gamma * std::sqrt(6.0 * intensity * line_strength / (2.0 * saturation_intensity));
}

double effective_cooling_detuning(double trap_depth_mk, const ExperimentParams& params) {
  if (!(trap_depth_mk >= 0.0)) throw DomainError("trap depth must be >= 0");
  return params.delta_cool - params.stark_coefficient * trap_depth_mk;
}

double effective_rabi(double trap_depth_mk, const ExperimentParams& params) {
  const double delta = effective_cooling_detuning(trap_depth_mk, params);
  return std::hypot(params.omega3, delta);
}

LightShiftCalibration calibrate_light_shift(RabiAnchor first, RabiAnchor second, double delta_cool) {
  // W_i^2 = Omega^2 + (D - eta U_i)^2. Subtracting the two equations leaves
  // a quadratic in eta: (U2^2 - U1^2) eta^2 - 2 D (U2 - U1) eta - (W2^2 - W1^2) = 0.
  const double u1 = first.trap_depth_mk, u2 = second.trap_depth_mk;
  const double w1 = first.effective_rabi, w2 = second.effective_rabi;
  if (!(u1 >= 0.0 && u2 > u1)) throw DomainError("calibration anchors must have 0 <= U1 < U2");
  const double a = u2 * u2 - u1 * u1;
  const double b = -2.0 * delta_cool * (u2 - u1);
  const double c = -(w2 * w2 - w1 * w1);
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) throw DomainError("calibration anchors admit no real light-shift coefficient");
  const double eta = (-b + std::sqrt(disc)) / (2.0 * a);
  const double detuning = delta_cool - eta * u1;
  const double omega_sq = w1 * w1 - detuning * detuning;
  if (!(eta > 0.0) || omega_sq < 0.0) throw DomainError("calibration anchors are inconsistent");
  return {std::sqrt(omega_sq), eta};
}

RabiAnchor reference_anchor_shallow() { return {0.38, mhz_to_angular(47.5)}; }
RabiAnchor reference_anchor_deep() { return {0.81, mhz_to_angular(62.5)}; }

}  // namespace atomtrap
