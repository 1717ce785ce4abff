#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "obsmae/core/cube.hpp"
#include "obsmae/core/error.hpp"
#include "obsmae/core/grid.hpp"
#include "obsmae/verify/humidity.hpp"
#include "obsmae/verify/significance.hpp"

namespace obsmae::verify {

/// Standard reporting levels, surface to top (hPa).
inline constexpr std::array<double, 15> kStandardLevels = {925, 850, 700, 500, 400, 300, 250, 200,
                                                           150, 100, 70,  50,  30,  20,  10};

/// One balloon ascent: observed profiles on its own pressure levels.
struct Sounding {
  std::string station;
  double lat = 0.0, lon = 0.0;
  core::Hour hour = 0;
  std::vector<double> pressure;     // hPa
  std::vector<double> temperature;  // K
  std::vector<double> humidity;     // g/kg (NaN when not reported)
  std::vector<double> rh;           // %
};

/// Reads the repository's sounding CSV (station,lat,lon,hour,pressure_hpa,temperature_k,
/// specific_humidity_gkg,rh_pct). Rows of one ascent are grouped by (station, hour).
inline std::vector<Sounding> load_soundings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open soundings file " + path.string());
  std::string line;
  std::getline(in, line);
  require(line.rfind("station,lat,lon,hour,pressure_hpa,temperature_k", 0) == 0,
          "soundings: unexpected header in " + path.string());
  std::map<std::pair<std::string, core::Hour>, Sounding> by_key;
  std::vector<std::pair<std::string, core::Hour>> order;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[8];
    int n = 0;
    while (n < 8 && std::getline(ss, f[n], ',')) ++n;
    require(n == 8, "soundings: " + path.string() + " line " + std::to_string(lineno) + " needs 8 fields");
    try {
      const core::Hour hour = std::stoll(f[3]);
      auto key = std::make_pair(f[0], hour);
      auto it = by_key.find(key);
      if (it == by_key.end()) {
        Sounding s;
        s.station = f[0];
        s.lat = std::stod(f[1]);
        s.lon = std::stod(f[2]);
        s.hour = hour;
        it = by_key.emplace(key, std::move(s)).first;
        order.push_back(key);
      }
      it->second.pressure.push_back(std::stod(f[4]));
      it->second.temperature.push_back(std::stod(f[5]));
      it->second.humidity.push_back(f[6].empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[6]));
      it->second.rh.push_back(f[7].empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[7]));
    } catch (const std::invalid_argument&) {
      throw Error("soundings: " + path.string() + " line " + std::to_string(lineno) + " is not numeric");
    }
  }
  std::vector<Sounding> out;
  for (const auto& k : order) out.push_back(std::move(by_key.at(k)));
  return out;
}

/// Linear interpolation in log-pressure of a column given on strictly monotone levels.
/// Returns NaN outside the column.
inline double interp_log_pressure(const std::vector<double>& levels, const std::vector<double>& values, double p) {
  require(levels.size() == values.size() && !levels.empty(), "interp_log_pressure: level/value size mismatch");
  if (levels.size() == 1) return std::abs(levels[0] - p) <= 1e-9 * p ? values[0] : std::nan("");
  const bool increasing = levels[1] > levels[0];
  for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
    double lo = levels[i], hi = levels[i + 1];
    require(increasing ? hi > lo : hi < lo, "interp_log_pressure: levels must be strictly monotone");
    const double a = std::min(lo, hi), b = std::max(lo, hi);
    if (p < a * (1 - 1e-12) || p > b * (1 + 1e-12)) continue;
    const double f = (std::log(p) - std::log(lo)) / (std::log(hi) - std::log(lo));
    return values[i] + f * (values[i + 1] - values[i]);
  }
  return std::nan("");
}

/// Observed vs model profile at one station and time, on the station's levels that the model spans.
struct SoundingMatch {
  std::string station;
  core::Hour hour = 0;
  std::vector<double> pressure;
  std::vector<double> obs_t, obs_rh;
  std::vector<double> model_t, model_rh;  // model_rh empty when the model has no humidity profile
  std::size_t row = 0, col = 0;
  long long hour_offset = 0;
};

/// Model columns: a PROFILE cube (channels = levels) and its levels; optional humidity twin.
struct ProfileField {
  const core::ObservationCube* temperature = nullptr;
  const core::ObservationCube* humidity = nullptr;  // g/kg, same levels and grid
  std::vector<double> levels;                       // hPa per channel
};

/// Nearest grid cell, nearest model hour within the tolerance, log-pressure interpolation to
/// the station levels. Soundings with nothing to compare are skipped.
inline std::vector<SoundingMatch> match_soundings(const std::vector<Sounding>& soundings, const ProfileField& model,
                                                  const core::GridSpec& grid, long long tolerance_hours = 1) {
  require(model.temperature != nullptr, "match_soundings: no model temperature profile");
  const auto& T = *model.temperature;
  require(T.shape().c == model.levels.size(), "match_soundings: levels differ from profile channels");
  require(T.shape().h == grid.n_lat && T.shape().w == grid.n_lon, "match_soundings: profile does not span the grid");
  if (model.humidity)
    require(model.humidity->shape().c == T.shape().c && model.humidity->times() == T.times(),
            "match_soundings: humidity profile differs from temperature profile");
  std::vector<SoundingMatch> out;
  for (const auto& s : soundings) {
    long long best = std::numeric_limits<long long>::max();
    std::size_t tk = 0;
    for (std::size_t k = 0; k < T.times().size(); ++k) {
      const long long off = T.times()[k] - s.hour;
      if (std::llabs(off) < std::llabs(best)) {
        best = off;
        tk = k;
      }
    }
    if (std::llabs(best) > tolerance_hours) continue;
    if (s.lat > grid.lat_of(0) + grid.resolution_deg / 2 || s.lat < grid.lat_of(grid.n_lat - 1) - grid.resolution_deg / 2)
      continue;
    const std::size_t row = grid.row_of(std::clamp(s.lat, grid.lat_of(grid.n_lat - 1), grid.lat_of(0)));
    const std::size_t col = grid.col_of(s.lon);
    std::vector<double> mt(model.levels.size()), mq(model.levels.size());
    bool dense = true;
    for (std::size_t l = 0; l < model.levels.size(); ++l) {
      dense &= T.valid(l, tk, row, col);
      mt[l] = T.value(l, tk, row, col);
      if (model.humidity) {
        dense &= model.humidity->valid(l, tk, row, col);
        mq[l] = model.humidity->value(l, tk, row, col);
      }
    }
    if (!dense) continue;
    SoundingMatch m;
    m.station = s.station;
    m.hour = s.hour;
    m.row = row;
    m.col = col;
    m.hour_offset = best;
    for (std::size_t i = 0; i < s.pressure.size(); ++i) {
      const double p = s.pressure[i];
      const double t = interp_log_pressure(model.levels, mt, p);
      if (!std::isfinite(t) || !std::isfinite(s.temperature[i])) continue;
      double rh = std::nan("");
      if (model.humidity) {
        const double q = std::max(0.0, interp_log_pressure(model.levels, mq, p));
        if (!std::isfinite(s.rh[i])) continue;
        rh = relative_humidity(q, std::clamp(t, 150.0, 350.0), p);
      }
      if (!m.pressure.empty())
        require(m.pressure.back() != p, "match_soundings: station " + s.station + " repeats level " + std::to_string(p));
      m.pressure.push_back(p);
      m.obs_t.push_back(s.temperature[i]);
      m.model_t.push_back(t);
      if (model.humidity) {
        m.obs_rh.push_back(s.rh[i]);
        m.model_rh.push_back(rh);
      }
    }
    if (!m.pressure.empty()) out.push_back(std::move(m));
  }
  return out;
}

struct LevelStats {
  double mae = 0.0, bias = 0.0, r = 0.0;
  std::size_t n = 0;
};

/// One row of the sounding table: a standard level, or the average row (level NaN).
struct SoundingRow {
  double level = 0.0;
  LevelStats temperature;
  LevelStats rh;
  bool has_rh = false;
};

namespace detail {

inline LevelStats pooled(const std::vector<double>& obs, const std::vector<double>& mod) {
  LevelStats s;
  s.n = obs.size();
  if (s.n == 0) return s;
  double so = 0, sm = 0;
  for (std::size_t i = 0; i < s.n; ++i) {
    s.bias += mod[i] - obs[i];
    s.mae += std::abs(mod[i] - obs[i]);
    so += obs[i];
    sm += mod[i];
  }
  const auto n = static_cast<double>(s.n);
  s.bias /= n;
  s.mae /= n;
  const double mo = so / n, mm = sm / n;
  double cov = 0, vo = 0, vm = 0;
  for (std::size_t i = 0; i < s.n; ++i) {
    cov += (obs[i] - mo) * (mod[i] - mm);
    vo += (obs[i] - mo) * (obs[i] - mo);
    vm += (mod[i] - mm) * (mod[i] - mm);
  }
  if (vo == 0.0 && vm == 0.0 && s.mae == 0.0)
    s.r = 1.0;  // identical constant series
  else if (vo == 0.0 || vm == 0.0)
    s.r = std::nan("");
  else
    s.r = cov / std::sqrt(vo * vm);
  return s;
}

}  // namespace detail

/// Per-level MAE, bias (model - obs) and Pearson R pooled over matches, plus an average row
/// over the reported levels. Levels with fewer than two pairs are omitted.
inline std::vector<SoundingRow> sounding_stats(const std::vector<SoundingMatch>& matches,
                                               const std::vector<double>& levels = {kStandardLevels.begin(),
                                                                                   kStandardLevels.end()}) {
  std::vector<SoundingRow> rows;
  SoundingRow avg;
  avg.level = std::nan("");
  std::size_t reported = 0;
  bool any_rh = false;
  for (const auto& m : matches) any_rh |= !m.model_rh.empty();
  for (double lev : levels) {
    std::vector<double> ot, mt, orh, mrh;
    for (const auto& m : matches)
      for (std::size_t i = 0; i < m.pressure.size(); ++i)
        if (std::abs(m.pressure[i] - lev) <= 1e-6 * lev) {
          ot.push_back(m.obs_t[i]);
          mt.push_back(m.model_t[i]);
          if (!m.model_rh.empty()) {
            orh.push_back(m.obs_rh[i]);
            mrh.push_back(m.model_rh[i]);
          }
        }
    if (ot.size() < 2) continue;
    SoundingRow r;
    r.level = lev;
    r.temperature = detail::pooled(ot, mt);
    r.has_rh = any_rh && orh.size() >= 2;
    if (r.has_rh) r.rh = detail::pooled(orh, mrh);
    ++reported;
    avg.temperature.mae += r.temperature.mae;
    avg.temperature.bias += r.temperature.bias;
    avg.temperature.r += r.temperature.r;
    avg.temperature.n += r.temperature.n;
    if (r.has_rh) {
      avg.has_rh = true;
      avg.rh.mae += r.rh.mae;
      avg.rh.bias += r.rh.bias;
      avg.rh.r += r.rh.r;
      avg.rh.n += r.rh.n;
    }
    rows.push_back(r);
  }
  if (reported == 0) return rows;
  std::size_t rh_rows = 0;
  for (const auto& r : rows) rh_rows += r.has_rh;
  const auto k = static_cast<double>(reported);
  avg.temperature.mae /= k;
  avg.temperature.bias /= k;
  avg.temperature.r /= k;
  if (rh_rows) {
    avg.rh.mae /= static_cast<double>(rh_rows);
    avg.rh.bias /= static_cast<double>(rh_rows);
    avg.rh.r /= static_cast<double>(rh_rows);
  }
  rows.push_back(avg);
  return rows;
}

/// Model-minus-observation errors keyed for pairing in significance tests.
inline std::vector<KeyedError> keyed_errors(const std::vector<SoundingMatch>& matches, bool humidity = false) {
  std::vector<KeyedError> out;
  for (const auto& m : matches)
    for (std::size_t i = 0; i < m.pressure.size(); ++i) {
      if (humidity && m.model_rh.empty()) continue;
      out.push_back({m.station, m.hour, m.pressure[i],
                     humidity ? m.model_rh[i] - m.obs_rh[i] : m.model_t[i] - m.obs_t[i]});
    }
  return out;
}

}  // namespace obsmae::verify
