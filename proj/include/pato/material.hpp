#pragma once

#include <cmath>
#include <stdexcept>

namespace pato {

/// Isotropic elastic/thermal material plus the strength values the crack
/// indices normalize by. Units: MPa, W/(m K), mm.
struct MaterialSpec {
  double E0 = 2.0e5;
  double nu = 0.3;
  double k0 = 11.0;
  double Emin = 2.0e-1;  // void stiffness floor, default 1e-6 * E0
  double kmin = 1.1e-5;
  double p = 3.0;        // SIMP penalization exponent
  double sigmaYield = 1000.0;
  double sigmaUTS = 1350.0;
  double epsUTS = 0.1;
};

inline void validate_material(const MaterialSpec& m) {
  if (!(m.E0 > 0.0) || !(m.Emin > 0.0) || m.Emin >= m.E0)
    throw std::invalid_argument("material: need 0 < Emin < E0");
  if (!(m.k0 > 0.0) || !(m.kmin > 0.0) || m.kmin >= m.k0)
    throw std::invalid_argument("material: need 0 < kmin < k0");
  if (!(m.nu > -1.0) || !(m.nu < 0.5)) throw std::invalid_argument("material: nu out of range");
  if (!(m.p >= 1.0)) throw std::invalid_argument("material: SIMP exponent must be >= 1");
  if (!(m.sigmaYield > 0.0) || !(m.sigmaUTS > 0.0) || !(m.epsUTS > 0.0))
    throw std::invalid_argument("material: strength values must be positive");
}

/// Modified SIMP: lo + rho^p (hi - lo), so rho = 0 keeps a small positive floor.
inline double simp_interpolate(double rho, double p, double lo, double hi) {
  return lo + std::pow(rho, p) * (hi - lo);
}

inline double simp_derivative(double rho, double p, double lo, double hi) {
  return p * std::pow(rho, p - 1.0) * (hi - lo);
}

}  // namespace pato
