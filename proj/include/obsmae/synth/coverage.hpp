#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "obsmae/core/cube.hpp"
#include "obsmae/core/grid.hpp"
#include "obsmae/core/random.hpp"

namespace obsmae::synth {

enum class CoverageKind { GeoDisk, LeoSwath, Full };

inline CoverageKind coverage_kind_from(const std::string& s) {
  if (s == "geo_disk") return CoverageKind::GeoDisk;
  if (s == "leo_swath") return CoverageKind::LeoSwath;
  if (s == "full") return CoverageKind::Full;
  throw Error("unknown coverage kind '" + s + "'");
}

struct CoverageParams {
  double sub_satellite_lon = 0.0;
  double swath_step_deg = 30.0;
  /// NaN draws the swath phase from the seed.
  double swath_start_lon = std::numeric_limits<double>::quiet_NaN();
};

/// Observed-cell mask (T, H, W) over a time span.
struct CoverageMask {
  CoverageKind kind = CoverageKind::Full;
  std::size_t t = 0, h = 0, w = 0;
  std::vector<std::uint8_t> observed;
  std::vector<double> swath_centre_lon;  // LEO only, one per frame, in [-180, 180)

  bool at(std::size_t ti, std::size_t y, std::size_t x) const { return observed[(ti * h + y) * w + x] != 0; }

  double frame_fraction(std::size_t ti) const {
    std::size_t n = 0;
    for (std::size_t i = ti * h * w; i < (ti + 1) * h * w; ++i) n += observed[i];
    return static_cast<double>(n) / static_cast<double>(h * w);
  }
};

namespace detail {

inline double wrap180(double lon) {
  double d = std::fmod(lon + 180.0, 360.0);
  if (d < 0.0) d += 360.0;
  return d - 180.0;
}

inline double great_circle_deg(double lat1, double lon1, double lat2, double lon2) {
  constexpr double r = std::numbers::pi / 180.0;
  const double c = std::sin(lat1 * r) * std::sin(lat2 * r) +
                   std::cos(lat1 * r) * std::cos(lat2 * r) * std::cos((lon1 - lon2) * r);
  return std::acos(std::clamp(c, -1.0, 1.0)) / r;
}

}  // namespace detail

inline constexpr double kCoverageTolerance = 0.05;

inline CoverageMask make_coverage(CoverageKind kind, double coverage_target, const core::GridSpec& g,
                                  const std::vector<core::Hour>& times, const CoverageParams& params,
                                  std::uint64_t seed) {
  require(coverage_target > 0.0 && coverage_target <= 1.0, "coverage_target must be in (0, 1]");
  CoverageMask m;
  m.kind = kind;
  m.t = times.size();
  m.h = g.n_lat;
  m.w = g.n_lon;
  m.observed.assign(m.t * m.h * m.w, 0);
  const std::size_t plane = m.h * m.w;

  switch (kind) {
    case CoverageKind::Full:
      std::fill(m.observed.begin(), m.observed.end(), 1);
      break;
    case CoverageKind::GeoDisk: {
      std::vector<double> dist(plane);
      for (std::size_t y = 0; y < m.h; ++y)
        for (std::size_t x = 0; x < m.w; ++x)
          dist[y * m.w + x] = detail::great_circle_deg(0.0, params.sub_satellite_lon, g.lat_of(y), g.lon_of(x));
      std::vector<double> sorted = dist;
      const auto k = static_cast<std::size_t>(std::llround(coverage_target * static_cast<double>(plane)));
      require(k >= 1, "geo_disk: coverage target rounds to zero cells on this grid");
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(k - 1), sorted.end());
      const double radius = sorted[k - 1];
      std::size_t n = 0;
      for (std::size_t i = 0; i < plane; ++i)
        if (dist[i] <= radius) {
          ++n;
          for (std::size_t ti = 0; ti < m.t; ++ti) m.observed[ti * plane + i] = 1;
        }
      const double achieved = static_cast<double>(n) / static_cast<double>(plane);
      if (std::abs(achieved - coverage_target) > kCoverageTolerance)
        throw Error("geo_disk: coverage " + std::to_string(coverage_target) + " unreachable on this grid (disk gives " +
                    std::to_string(achieved) + ")");
      break;
    }
    case CoverageKind::LeoSwath: {
      require(params.swath_step_deg > 0.0 && params.swath_step_deg < 180.0,
              "leo_swath: swath_step_deg must be in (0, 180)");
      double start = params.swath_start_lon;
      if (std::isnan(start)) {
        auto rng = core::make_rng(seed, {0x5a7a});
        start = std::uniform_real_distribution<double>(-180.0, 180.0)(rng);
      }
      const auto cols = static_cast<std::size_t>(std::llround(coverage_target * static_cast<double>(m.w)));
      require(cols >= 1, "leo_swath: coverage target rounds to zero columns on this grid");
      std::vector<std::pair<double, std::size_t>> order(m.w);
      for (std::size_t ti = 0; ti < m.t; ++ti) {
        const double centre = detail::wrap180(start + params.swath_step_deg * static_cast<double>(times[ti]));
        m.swath_centre_lon.push_back(centre);
        for (std::size_t x = 0; x < m.w; ++x)
          order[x] = {std::abs(detail::wrap180(g.lon_of(x) - centre)), x};
        std::sort(order.begin(), order.end());
        for (std::size_t k = 0; k < cols; ++k)
          for (std::size_t y = 0; y < m.h; ++y) m.observed[(ti * m.h + y) * m.w + order[k].second] = 1;
      }
      break;
    }
  }
  return m;
}

/// Marks cells outside the mask invalid. Cube must span the mask's frames and grid.
inline core::ObservationCube apply_coverage(const core::ObservationCube& cube, const CoverageMask& mask) {
  const auto& s = cube.shape();
  require(s.h == mask.h && s.w == mask.w, "apply_coverage: mask grid differs from cube");
  require(s.t == mask.t || mask.kind == CoverageKind::Full, "apply_coverage: mask frames differ from cube");
  core::ObservationCube out = cube;
  if (mask.kind == CoverageKind::Full) return out;
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t t = 0; t < s.t; ++t)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x)
          if (!mask.at(t, y, x)) out.invalidate(c, t, y, x);
  return out;
}

inline core::ObservationCube apply_coverage(const core::ObservationCube& cube, CoverageKind kind,
                                            double coverage_target, const core::GridSpec& g,
                                            const CoverageParams& params, std::uint64_t seed) {
  return apply_coverage(cube, make_coverage(kind, coverage_target, g, cube.times(), params, seed));
}

}  // namespace obsmae::synth
