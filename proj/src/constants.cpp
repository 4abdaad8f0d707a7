#include "atomtrap/constants.hpp"

#include <cmath>
#include <initializer_list>

namespace atomtrap {

bool PhysicalConstants::consistent() const {
  for (double v : {kB, hbar, c, mass, gamma, lambda0, excited_lifetime, lambda_d1, lambda_d2,
                   excited_hfs, doppler_temperature}) {
    if (!(v > 0.0)) return false;
  }
  return std::abs(gamma * excited_lifetime - 1.0) <= 0.02;
}

}  // namespace atomtrap
