#pragma once

#include <algorithm>
#include <cmath>

#include "obsmae/core/error.hpp"

namespace obsmae::verify {

inline constexpr double kEpsilonWater = 0.622;  // Rd / Rv

/// Saturation vapour pressure over water in hPa (Magnus form, WMO coefficients). t_c in degrees Celsius.
inline double saturation_vapor_pressure(double t_c) { return 6.112 * std::exp(17.62 * t_c / (243.12 + t_c)); }

/// Vapour partial pressure in hPa from specific humidity (kg/kg) and pressure (hPa).
inline double vapor_pressure(double q_kgkg, double p_hpa) {
  return q_kgkg * p_hpa / (kEpsilonWater + (1.0 - kEpsilonWater) * q_kgkg);
}

/// Relative humidity in percent from specific humidity in g/kg, temperature in K and pressure in hPa.
/// Clipped to [0, 150].
inline double relative_humidity(double q_gkg, double t_k, double p_hpa) {
  require(q_gkg >= 0.0 && std::isfinite(q_gkg), "relative_humidity: specific humidity must be >= 0");
  require(t_k >= 150.0 && t_k <= 350.0, "relative_humidity: temperature outside 150-350 K");
  require(p_hpa > 0.0 && std::isfinite(p_hpa), "relative_humidity: pressure must be positive");
  const double e = vapor_pressure(q_gkg * 1e-3, p_hpa);
  const double es = saturation_vapor_pressure(t_k - 273.15);
  return std::clamp(100.0 * e / es, 0.0, 150.0);
}

}  // namespace obsmae::verify
