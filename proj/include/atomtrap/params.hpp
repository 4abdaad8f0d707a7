#pragma once

#include <vector>

#include <Eigen/Dense>

#include "atomtrap/constants.hpp"

namespace atomtrap {

// One cooling beam: unit propagation direction and its share of the
// scattered light.
struct Beam {
  Eigen::Vector3d direction;
  double weight = 0.0;
};

struct BeamGeometry {
  std::vector<Beam> beams;
  Eigen::Vector3d detection_axis = Eigen::Vector3d::UnitZ();

  // g_j = |k_j - k_det| / k = 2 sin(theta_j / 2), the Doppler sensitivity of
  // light scattered from beam j into the detector.
  std::vector<double> doppler_factors() const;
  std::vector<double> weights() const;

  // Three orthogonal counter-propagating pairs, equal weights, detection
  // along the body diagonal.
  static BeamGeometry orthogonal_molasses();

  void validate() const;
};

// Every knob of the experiment. Frequencies are angular (rad/s), rates in
// 1/s, intensities in mW/cm^2, trap depth in mK (energy / kB).
//
// Detunings are those of the lasers from the unperturbed (free atom)
// transitions; the trap light shift stark_coefficient * trap_depth_mk is
// subtracted when the rotating-frame Hamiltonian is built.
struct ExperimentParams {
  ExperimentParams();

  // [laser]
  double intensity_cool = 103.0;   // I_CL, single beam
  double intensity_repump = 12.0;  // I_RL, single beam
  double saturation_intensity = 1.669;
  // Effective line-strength factors for the couplings b-a (repump),
  // c-a and c-d (cooling). The c-d factor and the light-shift coefficient
  // are calibrated against the 47.5 / 62.5 MHz effective Rabi frequencies;
  // c-a keeps the 87Rb F=2 -> F'=2 : F'=3 strength ratio 5/14.
  double line_strength_repump = 1.0;
  double line_strength_cool_f2 = 0.013154514501666168;
  double line_strength_cool_f3 = 0.03683264060466527;
  double delta_repump = 0.0;
  double delta_cool = mhz_to_angular(-31.0);
  double stark_coefficient = mhz_to_angular(36.42493515816693);  // rad/s per mK
  double excited_hfs = constants().excited_hfs;

  // Rabi frequencies of b<->a, c<->a, c<->d. Derived from the intensities
  // unless set explicitly.
  double omega1 = 0.0;
  double omega2 = 0.0;
  double omega3 = 0.0;

  // [trap]
  double trap_depth_mk = 0.38;
  double trap_power = 44e-3;       // W
  double trap_waist = 3.5e-6;      // m
  double trap_wavelength = 856e-9; // m
  double load_rate = 0.2;
  double loss_rate = 1.0 / 2.2;
  double hyperfine_flip_rate = 0.1;  // stored only

  // [detection]
  double background_rate = 450.0;  // telegraph level without atom, cps
  double atom_rate = 2250.0;       // telegraph level with one atom, cps
  double dark_rate_per_detector = 300.0;
  double detection_efficiency = 1e-3;
  double gate_threshold = 1200.0;  // cps
  double telegraph_bin = 0.1;      // s

  // [geometry]
  BeamGeometry beam_geometry = BeamGeometry::orthogonal_molasses();

  // Recompute omega1..3 from intensities and line strengths.
  void update_rabi_from_intensities();

  // Throws DomainError naming the first violated invariant.
  void validate() const;
};

}  // namespace atomtrap
