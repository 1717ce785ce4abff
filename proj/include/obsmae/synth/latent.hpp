#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "obsmae/core/cube.hpp"
#include "obsmae/core/error.hpp"
#include "obsmae/core/grid.hpp"
#include "obsmae/core/random.hpp"

namespace obsmae::synth {

using core::GridSpec;
using core::Hour;

/// Hidden "true" atmosphere the simulator observes. Arrays are C-order (level, t, y, x) and (y, x).
struct LatentState {
  GridSpec grid;
  std::vector<double> pressures;  // hPa, increasing (top of atmosphere first)
  std::vector<Hour> times;
  std::vector<float> temperature;  // K
  std::vector<float> humidity;     // g/kg
  std::vector<float> elevation;    // m
  std::vector<std::uint8_t> land;  // 1 = land
  std::uint64_t seed = 0;

  std::size_t levels() const { return pressures.size(); }
  std::size_t frames() const { return times.size(); }
  std::size_t plane() const { return grid.n_lat * grid.n_lon; }
  std::size_t at(std::size_t level, std::size_t t, std::size_t y, std::size_t x) const {
    return ((level * frames() + t) * grid.n_lat + y) * grid.n_lon + x;
  }
};

/// Knobs of the latent generator; defaults give smooth synoptic-scale structure.
struct LatentOptions {
  std::size_t modes = 24;
  double max_zonal_wavenumber = 6.0;
  double max_meridional_wavenumber = 5.0;
  double zonal_speed_deg_per_hour = 1.5;  // at the surface
  double speed_shear_deg_per_hour = 1.0;  // added at the model top
  double temperature_anomaly_k = 4.0;
  double humidity_log_anomaly = 0.4;
};

/// Log-spaced levels between 100 and 1000 hPa (one level = 500 hPa).
inline std::vector<double> default_pressures(std::size_t levels) {
  if (levels == 1) return {500.0};
  std::vector<double> p(levels);
  for (std::size_t i = 0; i < levels; ++i)
    p[i] = 100.0 * std::pow(10.0, static_cast<double>(i) / static_cast<double>(levels - 1));
  return p;
}

namespace detail {

/// Band-limited random field as a sum of travelling cosine modes, zero mean and roughly unit variance.
class SpectralField {
 public:
  SpectralField(std::uint64_t seed, std::uint64_t stream, const LatentOptions& opt) {
    auto rng = core::make_rng(seed, {stream});
    std::uniform_int_distribution<int> zonal(1, static_cast<int>(opt.max_zonal_wavenumber));
    std::uniform_real_distribution<double> merid(0.5, opt.max_meridional_wavenumber);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    double power = 0.0;
    for (std::size_t k = 0; k < opt.modes; ++k) {
      Mode m;
      m.n = zonal(rng);
      m.m = merid(rng);
      m.phase = phase(rng);
      m.amp = std::pow(m.n * m.n + m.m * m.m, -0.75);
      power += 0.5 * m.amp * m.amp;
      modes_.push_back(m);
    }
    for (auto& m : modes_) m.amp /= std::sqrt(power);
  }

  /// Evaluate on the whole grid with the pattern shifted east by shift_deg.
  void evaluate(const GridSpec& g, double shift_deg, float* out, double scale, bool accumulate) const {
    const std::size_t H = g.n_lat, W = g.n_lon;
    std::vector<double> cy(H), sy(H), cx(W), sx(W), acc(H * W, 0.0);
    for (const auto& m : modes_) {
      for (std::size_t y = 0; y < H; ++y) {
        const double phi = (g.lat_of(y) + 90.0) * std::numbers::pi / 180.0;
        cy[y] = std::cos(m.m * phi + m.phase);
        sy[y] = std::sin(m.m * phi + m.phase);
      }
      for (std::size_t x = 0; x < W; ++x) {
        const double lam = (g.lon_of(x) - shift_deg) * std::numbers::pi / 180.0;
        cx[x] = std::cos(m.n * lam);
        sx[x] = std::sin(m.n * lam);
      }
      for (std::size_t y = 0; y < H; ++y) {
        const double a = m.amp * cy[y], b = m.amp * sy[y];
        double* row = acc.data() + y * W;
        for (std::size_t x = 0; x < W; ++x) row[x] += a * cx[x] - b * sx[x];
      }
    }
    for (std::size_t i = 0; i < H * W; ++i) {
      const double v = scale * acc[i];
      out[i] = accumulate ? static_cast<float>(out[i] + v) : static_cast<float>(v);
    }
  }

 private:
  struct Mode {
    int n = 1;
    double m = 1.0, phase = 0.0, amp = 1.0;
  };
  std::vector<Mode> modes_;
};

inline double height_km(double p_hpa) { return 7.0 * std::log(1000.0 / p_hpa); }

inline double reference_temperature(double lat_deg, double p_hpa) {
  const double s = std::sin(lat_deg * std::numbers::pi / 180.0);
  const double surface = 300.0 - 45.0 * s * s;
  return std::max(surface - 6.5 * height_km(p_hpa), 212.0);
}

inline double reference_humidity(double lat_deg, double p_hpa) {
  const double surface = 17.0 * std::exp(-(lat_deg / 35.0) * (lat_deg / 35.0)) + 1.0;
  return surface * std::exp(-height_km(p_hpa) / 2.2);
}

}  // namespace detail

/// Latent atmosphere for hours [start, start + T) on explicit pressure levels. Frames of the same
/// hour are identical across calls with different start, so chunked generation is seamless.
inline LatentState generate_latent(std::uint64_t seed, const GridSpec& grid, std::size_t T,
                                   const std::vector<double>& pressures, Hour start = 0,
                                   const LatentOptions& opt = {}) {
  require(T >= 1, "generate_latent: T must be >= 1");
  require(!pressures.empty(), "generate_latent: levels must be >= 1");
  grid.validate();
  for (std::size_t i = 1; i < pressures.size(); ++i)
    require(pressures[i] > pressures[i - 1], "generate_latent: pressures must increase");

  LatentState s;
  s.grid = grid;
  s.pressures = pressures;
  s.times = core::hour_range(start, T);
  s.seed = seed;
  const std::size_t L = pressures.size(), P = s.plane();
  s.temperature.assign(L * T * P, 0.0f);
  s.humidity.assign(L * T * P, 0.0f);

  const detail::SpectralField n1(seed, 1, opt), n2(seed, 2, opt), n3(seed, 3, opt), relief(seed, 4, opt);

  std::vector<float> a(P), b(P), c(P);
  for (std::size_t l = 0; l < L; ++l) {
    const double frac = L == 1 ? 0.0 : static_cast<double>(L - 1 - l) / static_cast<double>(L - 1);
    const double speed = opt.zonal_speed_deg_per_hour + opt.speed_shear_deg_per_hour * frac;
    const double theta = 0.5 * std::numbers::pi * frac;
    for (std::size_t t = 0; t < T; ++t) {
      const double shift = speed * static_cast<double>(s.times[t]);
      n1.evaluate(grid, shift, a.data(), 1.0, false);
      n2.evaluate(grid, shift, b.data(), 1.0, false);
      n3.evaluate(grid, shift, c.data(), 1.0, false);
      for (std::size_t y = 0; y < grid.n_lat; ++y) {
        const double lat = grid.lat_of(y);
        const double tref = detail::reference_temperature(lat, pressures[l]);
        const double qref = detail::reference_humidity(lat, pressures[l]);
        for (std::size_t x = 0; x < grid.n_lon; ++x) {
          const std::size_t i = y * grid.n_lon + x;
          const double anom = std::cos(theta) * a[i] + std::sin(theta) * b[i];
          const double qanom = 0.6 * anom + 0.8 * c[i];
          s.temperature[s.at(l, t, y, x)] = static_cast<float>(tref + opt.temperature_anomaly_k * anom);
          s.humidity[s.at(l, t, y, x)] =
              static_cast<float>(std::max(0.0, qref * std::exp(opt.humidity_log_anomaly * qanom)));
        }
      }
    }
  }

  s.elevation.assign(P, 0.0f);
  s.land.assign(P, 0);
  std::vector<float> r(P);
  relief.evaluate(grid, 0.0, r.data(), 1.0, false);
  for (std::size_t i = 0; i < P; ++i) {
    const bool is_land = r[i] > 0.3f;
    s.land[i] = is_land ? 1 : 0;
    s.elevation[i] = is_land ? 2500.0f * (r[i] - 0.3f) : 0.0f;
  }
  return s;
}

inline LatentState generate_latent(std::uint64_t seed, const GridSpec& grid, std::size_t T, std::size_t levels,
                                   Hour start = 0, const LatentOptions& opt = {}) {
  require(levels >= 1, "generate_latent: levels must be >= 1");
  return generate_latent(seed, grid, T, default_pressures(levels), start, opt);
}

}  // namespace obsmae::synth
