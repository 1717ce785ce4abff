#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "obsmae/core/random.hpp"
#include "obsmae/data/datastore.hpp"

namespace obsmae::data {

struct SamplerOptions {
  std::size_t window_hours = 12;
  double min_valid_fraction = 0.05;
  std::size_t attempt_cap = 1000;
  /// Inclusive range of admissible window start hours; defaults to the whole dataset.
  std::optional<Hour> first_start;
  std::optional<Hour> last_start;
  std::vector<std::string> modalities;  // empty = all
};

/// True when some modality has a patch-sized block whose cells are all valid in at least one
/// (channel-complete) frame.
inline bool has_valid_patch(const MultiModalSample& s, std::size_t patch) {
  for (const auto& c : s.cubes) {
    const auto& sh = c.shape();
    for (std::size_t t = 0; t < sh.t; ++t)
      for (std::size_t py = 0; py + patch <= sh.h; py += patch)
        for (std::size_t px = 0; px + patch <= sh.w; px += patch) {
          bool ok = true;
          for (std::size_t ch = 0; ch < sh.c && ok; ++ch)
            for (std::size_t y = py; y < py + patch && ok; ++y)
              for (std::size_t x = px; x < px + patch && ok; ++x) ok = c.valid(ch, t, y, x);
          if (ok) return true;
        }
  }
  return false;
}

/// Draws one window origin uniformly over admissible starts and latitudes, all longitudes.
inline WindowOrigin draw_origin(const Dataset& ds, core::Rng& rng, const SamplerOptions& opt) {
  const auto& m = ds.manifest();
  const Hour lo = opt.first_start.value_or(m.start_hour);
  const Hour hi = opt.last_start.value_or(m.end_hour - static_cast<Hour>(opt.window_hours) + 1);
  require(lo <= hi, "sample_windows: no admissible window start in the requested time range");
  std::uniform_int_distribution<Hour> t(lo, hi);
  std::uniform_int_distribution<std::size_t> lat(0, m.grid.n_lat - m.grid.window);
  std::uniform_int_distribution<std::size_t> lon(0, m.grid.n_lon - 1);
  WindowOrigin o;
  o.t0 = t(rng);
  o.lat0 = lat(rng);
  o.lon0 = lon(rng);
  return o;
}

/// Rejection-samples n windows whose overall valid fraction reaches the threshold.
inline std::vector<MultiModalSample> sample_windows(const Dataset& ds, std::size_t n, core::Rng& rng,
                                                    const SamplerOptions& opt) {
  std::vector<MultiModalSample> out;
  std::size_t attempts = 0;
  while (out.size() < n) {
    if (attempts++ >= opt.attempt_cap)
      throw Error("sample_windows: gave up after " + std::to_string(opt.attempt_cap) + " attempts (" +
                  std::to_string(out.size()) + " of " + std::to_string(n) + " windows accepted)");
    const auto o = draw_origin(ds, rng, opt);
    auto s = ds.read_window(o.t0, o.lat0, o.lon0, opt.window_hours, opt.modalities);
    if (opt.min_valid_fraction > 0.0) {
      if (s.valid_fraction() < opt.min_valid_fraction) continue;
      if (!has_valid_patch(s, ds.grid().patch)) continue;
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<MultiModalSample> sample_windows(const Dataset& ds, std::size_t n, core::Rng& rng,
                                                    double min_valid_fraction) {
  SamplerOptions opt;
  opt.min_valid_fraction = min_valid_fraction;
  return sample_windows(ds, n, rng, opt);
}

}  // namespace obsmae::data
