#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "obsmae/core/norm.hpp"
#include "obsmae/data/datastore.hpp"

namespace obsmae::data {

/// Per-channel mean and population std over valid cells of stored chunks whose hours fall in
/// [first, last]. Reads one chunk at a time; two passes for a stable variance.
inline core::NormalizationStats compute_dataset_stats(const Dataset& ds, std::optional<Hour> first = std::nullopt,
                                                      std::optional<Hour> last = std::nullopt,
                                                      const std::vector<std::string>& only = {}) {
  const auto& m = ds.manifest();
  const Hour lo = first.value_or(m.start_hour), hi = last.value_or(m.end_hour);
  require(lo <= hi, "stats: empty hour range");
  core::NormalizationStats out;
  for (const auto& spec : m.modalities) {
    if (!only.empty() && std::find(only.begin(), only.end(), spec.name) == only.end()) continue;
    std::vector<std::pair<Hour, Hour>> spans;
    for (const auto& f : m.files) {
      if (f.modality != spec.name) continue;
      if (!spec.temporal) {
        spans.push_back({0, 0});
        continue;
      }
      const Hour a = std::max(lo, f.start), b = std::min(hi, f.start + static_cast<Hour>(f.frames) - 1);
      if (a <= b) spans.push_back({a, b});
    }
    const std::size_t C = spec.channels;
    std::vector<long double> sum(C, 0.0L), ss(C, 0.0L);
    std::vector<std::size_t> n(C, 0);
    auto pass = [&](bool second, const std::vector<double>& mean) {
      for (const auto& [a, b] : spans) {
        const auto cube = ds.read_full(spec.name, a, b);
        const std::size_t plane = cube.shape().t * cube.shape().h * cube.shape().w;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) {
            if (!cube.valid_mask()[i]) continue;
            if (second) {
              const long double d = cube.values()[i] - mean[c];
              ss[c] += d * d;
            } else {
              sum[c] += cube.values()[i];
              ++n[c];
            }
          }
      }
    };
    pass(false, {});
    std::vector<double> mean(C);
    for (std::size_t c = 0; c < C; ++c) {
      if (n[c] < 2)
        throw Error("stats: modality " + spec.name + " channel " + std::to_string(c) + " has fewer than 2 valid cells");
      mean[c] = static_cast<double>(sum[c] / static_cast<long double>(n[c]));
    }
    pass(true, mean);
    core::ModalityStats ms;
    for (std::size_t c = 0; c < C; ++c) {
      const double sd = static_cast<double>(std::sqrt(ss[c] / static_cast<long double>(n[c])));
      if (!(sd > 0.0))
        throw Error("stats: modality " + spec.name + " channel " + std::to_string(c) + " has zero variance");
      ms.channels.push_back({mean[c], sd});
    }
    out.set(spec.name, std::move(ms));
  }
  return out;
}

}  // namespace obsmae::data
