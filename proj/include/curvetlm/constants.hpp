#pragma once

#include <cmath>
#include <numbers>

namespace curvetlm::constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double c0 = 299792458.0;           // m/s
inline constexpr double mu0 = 1.25663706212e-6;     // H/m
inline constexpr double eps0 = 1.0 / (mu0 * c0 * c0);  // F/m
inline const double z0 = std::sqrt(mu0 / eps0);     // free-space wave impedance, ohm
inline constexpr double sqrt2 = std::numbers::sqrt2;

}  // namespace curvetlm::constants
