#pragma once

#include "atomtrap/params.hpp"

namespace atomtrap {

// Far-off-resonance dipole trap of a focused Gaussian beam, two-line
// (D1 + D2) rotating-wave form for linear polarization.
//
// Peak depth in mK (U / kB). power in W, waist and wavelength in m. Throws
// DomainError unless the trap light is red of both D lines.
double trap_depth(double power, double waist, double trap_wavelength);

// Peak photon scattering rate (1/s) of the trap light, same model.
double photon_scattering_rate(double power, double waist, double trap_wavelength);

// Omega = Gamma * sqrt(6 I s_f / (2 I_sat)): six beams of single-beam
// intensity I, unpolarized. Returns rad/s.
double rabi_from_intensity(double intensity, double line_strength, double saturation_intensity = 1.669);

// sqrt(Omega_3^2 + Delta_eff^2) with Delta_eff = Delta_CL - eta U.
double effective_rabi(double trap_depth_mk, const ExperimentParams& params);

// Cooling-laser detuning from the light-shifted c-d transition.
double effective_cooling_detuning(double trap_depth_mk, const ExperimentParams& params);

struct RabiAnchor {
  double trap_depth_mk;
  double effective_rabi;  // rad/s
};

struct LightShiftCalibration {
  double omega;             // bare c-d Rabi frequency, rad/s
  double stark_coefficient; // rad/s per mK
};

// Solves sqrt(Omega^2 + (Delta - eta U_i)^2) = Omega_eff,i for (Omega, eta)
// from two anchors. Throws DomainError if the anchors admit no solution
// with eta > 0 and real Omega.
LightShiftCalibration calibrate_light_shift(RabiAnchor first, RabiAnchor second, double delta_cool);

// The two effective Rabi frequencies quoted for U = 0.38 and 0.81 mK.
RabiAnchor reference_anchor_shallow();
RabiAnchor reference_anchor_deep();

}  // namespace atomtrap
