#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "obsmae/core/error.hpp"

namespace obsmae::core {

/// Equirectangular global grid. Row 0 is the northernmost row; columns wrap in longitude.
struct GridSpec {
  double resolution_deg = 0.16;
  std::size_t n_lat = 1125;
  std::size_t n_lon = 2249;
  std::size_t window = 144;
  std::size_t patch = 16;
  double lat_origin = 90.0 - 0.08;  // centre of row 0
  double lon_origin = -180.0 + 0.08;

  void validate() const {
    require(resolution_deg > 0.0, "grid: resolution_deg must be positive");
    require(patch > 0 && window > 0, "grid: window and patch must be positive");
    require(window % patch == 0, "grid: window " + std::to_string(window) +
                                     " not divisible by patch " + std::to_string(patch));
    require(n_lat >= window && n_lon >= window, "grid: n_lat and n_lon must be >= window");
  }

  double lat_of(std::size_t row) const { return lat_origin - static_cast<double>(row) * resolution_deg; }
  double lon_of(std::size_t col) const { return lon_origin + static_cast<double>(col) * resolution_deg; }

  std::size_t row_of(double lat) const {
    const double r = std::round((lat_origin - lat) / resolution_deg);
    require(r >= 0.0 && r < static_cast<double>(n_lat), "grid: latitude outside grid extent");
    return static_cast<std::size_t>(r);
  }

  std::size_t col_of(double lon) const {
    double d = std::fmod(lon - lon_origin, 360.0);
    if (d < 0.0) d += 360.0;
    auto c = static_cast<long long>(std::llround(d / resolution_deg));
    c %= static_cast<long long>(n_lon);
    return static_cast<std::size_t>(c);
  }

  std::size_t wrap_col(long long col) const {
    const auto n = static_cast<long long>(n_lon);
    return static_cast<std::size_t>(((col % n) + n) % n);
  }

  std::size_t cells() const { return n_lat * n_lon; }
  std::size_t tokens_per_side() const { return window / patch; }

  /// Grid of the same shape covering the globe with square cells sized to n_lat.
  static GridSpec global(std::size_t n_lat, std::size_t n_lon, std::size_t window, std::size_t patch) {
    GridSpec g;
    g.resolution_deg = 180.0 / static_cast<double>(n_lat);
    g.n_lat = n_lat;
    g.n_lon = n_lon;
    g.window = window;
    g.patch = patch;
    g.lat_origin = 90.0 - g.resolution_deg / 2.0;
    g.lon_origin = -180.0 + g.resolution_deg / 2.0;
    return g;
  }
};

}  // namespace obsmae::core
