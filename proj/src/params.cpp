#include "atomtrap/params.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "atomtrap/error.hpp"
#include "atomtrap/trap.hpp"

namespace atomtrap {

std::vector<double> BeamGeometry::doppler_factors() const {
  std::vector<double> g;
  g.reserve(beams.size());
  for (const auto& b : beams) g.push_back((b.direction - detection_axis).norm());
  return g;
}

std::vector<double> BeamGeometry::weights() const {
  std::vector<double> w;
  w.reserve(beams.size());
  for (const auto& b : beams) w.push_back(b.weight);
  return w;
}

BeamGeometry BeamGeometry::orthogonal_molasses() {
  BeamGeometry g;
  const double w = 1.0 / 6.0;
  for (int axis = 0; axis < 3; ++axis) {
    Eigen::Vector3d e = Eigen::Vector3d::Zero();
    e[axis] = 1.0;
    g.beams.push_back({e, w});
    g.beams.push_back({-e, w});
  }
  g.detection_axis = Eigen::Vector3d::Ones().normalized();
  return g;
}

void BeamGeometry::validate() const {
  if (beams.empty()) throw DomainError("beam geometry: no beams");
  double sum = 0.0;
  for (std::size_t i = 0; i < beams.size(); ++i) {
    const auto& b = beams[i];
    if (std::abs(b.direction.norm() - 1.0) > 1e-12)
      throw DomainError("beam geometry: beam " + std::to_string(i + 1) + " direction is not a unit vector");
    if (!(b.weight >= 0.0)) throw DomainError("beam geometry: negative weight");
    sum += b.weight;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw DomainError("beam geometry: weights do not sum to 1");
  if (std::abs(detection_axis.norm() - 1.0) > 1e-12)
    throw DomainError("beam geometry: detection axis is not a unit vector");
}

ExperimentParams::ExperimentParams() { update_rabi_from_intensities(); }

void ExperimentParams::update_rabi_from_intensities() {
  omega1 = rabi_from_intensity(intensity_repump, line_strength_repump, saturation_intensity);
  omega2 = rabi_from_intensity(intensity_cool, line_strength_cool_f2, saturation_intensity);
  omega3 = rabi_from_intensity(intensity_cool, line_strength_cool_f3, saturation_intensity);
}

void ExperimentParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw DomainError(std::string("invalid parameter: ") + what);
  };
  for (double v : {omega1, omega2, omega3, delta_repump, delta_cool, stark_coefficient, excited_hfs,
                   trap_depth_mk, trap_power, trap_waist, trap_wavelength})
    require(std::isfinite(v), "non-finite value");
  require(omega1 >= 0 && omega2 >= 0 && omega3 >= 0, "Rabi frequencies must be >= 0");
  require(intensity_cool >= 0 && intensity_repump >= 0, "intensities must be >= 0");
  require(saturation_intensity > 0, "saturation intensity must be > 0");
  require(line_strength_repump >= 0 && line_strength_cool_f2 >= 0 && line_strength_cool_f3 >= 0,
          "line strengths must be >= 0");
  require(trap_depth_mk >= 0, "trap depth must be >= 0");
  require(load_rate >= 0 && loss_rate >= 0 && hyperfine_flip_rate >= 0, "rates must be >= 0");
  require(background_rate >= 0 && atom_rate >= 0 && dark_rate_per_detector >= 0, "count rates must be >= 0");
  require(detection_efficiency >= 0 && detection_efficiency <= 1, "detection efficiency must lie in [0, 1]");
  require(gate_threshold >= 0, "gate threshold must be >= 0");
  require(telegraph_bin > 0, "telegraph bin must be > 0");
  beam_geometry.validate();
}

}  // namespace atomtrap
