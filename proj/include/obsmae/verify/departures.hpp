#pragma once

#include <cmath>
#include <cstdio>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "obsmae/core/cube.hpp"
#include "obsmae/core/error.hpp"
#include "obsmae/core/modality.hpp"

namespace obsmae::verify {

struct ErrorStats {
  double bias = 0.0;  // mean(pred - obs)
  double mae = 0.0;
  std::size_t count = 0;
};

/// Running sums of pred - obs per (modality, channel); pools any number of windows.
class DepartureAccumulator {
 public:
  /// Statistics over cells valid in obs; pred must be co-registered and dense there.
  void add(const core::ObservationCube& pred, const core::ObservationCube& obs) {
    require(pred.modality() == obs.modality(), "departures: modality mismatch (" + pred.modality() + " vs " +
                                                   obs.modality() + ")");
    const auto& s = obs.shape();
    const auto& p = pred.shape();
    require(p.c == s.c && p.t == s.t && p.h == s.h && p.w == s.w,
            "departures: " + obs.modality() + " prediction and observation shapes differ");
    auto& rows = sums_[obs.modality()];
    if (rows.empty()) {
      rows.resize(s.c);
      order_.push_back(obs.modality());
    }
    require(rows.size() == s.c, "departures: " + obs.modality() + " channel count changed between windows");
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t t = 0; t < s.t; ++t)
        for (std::size_t y = 0; y < s.h; ++y)
          for (std::size_t x = 0; x < s.w; ++x) {
            if (!obs.valid(c, t, y, x)) continue;
            require(pred.valid(c, t, y, x), "departures: prediction missing where " + obs.modality() + " is observed");
            const double d = static_cast<double>(pred.value(c, t, y, x)) - obs.value(c, t, y, x);
            rows[c].sum += d;
            rows[c].abs += std::abs(d);
            ++rows[c].n;
          }
  }

  void add(const std::vector<core::ObservationCube>& pred, const std::vector<core::ObservationCube>& obs) {
    require(pred.size() == obs.size(), "departures: prediction and observation lists differ in length");
    for (std::size_t i = 0; i < pred.size(); ++i) add(pred[i], obs[i]);
  }

  /// nullopt-like: count 0 means no valid cell.
  ErrorStats stats(const std::string& modality, std::size_t channel) const {
    auto it = sums_.find(modality);
    if (it == sums_.end() || channel >= it->second.size()) return {};
    const auto& r = it->second[channel];
    if (r.n == 0) return {};
    return {r.sum / static_cast<double>(r.n), r.abs / static_cast<double>(r.n), r.n};
  }

  const std::vector<std::string>& modalities() const { return order_; }
  std::size_t channels(const std::string& modality) const {
    auto it = sums_.find(modality);
    return it == sums_.end() ? 0 : it->second.size();
  }

 private:
  struct Sum {
    double sum = 0.0, abs = 0.0;
    std::size_t n = 0;
  };
  std::map<std::string, std::vector<Sum>> sums_;
  std::vector<std::string> order_;
};

/// One report row: a channel (or, for PROFILE, a pressure level) with analysis and background columns.
struct DepartureRow {
  std::string modality;
  std::size_t channel = 0;
  std::string label;  // channel name or "<p> hPa"
  std::string units;
  ErrorStats analysis;
  ErrorStats background;
};

struct DepartureReport {
  std::vector<DepartureRow> rows;
  std::vector<std::string> warnings;  // rows omitted for lack of valid cells
};

inline std::string channel_label(const core::ModalitySpec* spec, std::size_t c) {
  if (spec && spec->kind == core::ModalityKind::Profile && c < spec->levels.size()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g hPa", spec->levels[c]);
    return buf;
  }
  if (spec && c < spec->channel_labels.size() && !spec->channel_labels[c].name.empty())
    return spec->channel_labels[c].name;
  return std::to_string(c + 1);
}

inline std::string channel_units(const core::ModalitySpec* spec, std::size_t c) {
  if (spec && c < spec->channel_labels.size()) return spec->channel_labels[c].units;
  if (spec && spec->kind == core::ModalityKind::Profile)
    return spec->variable == core::ProfileVariable::Temperature ? "K" : "g/kg";
  return "";
}

/// Combines analysis (horizon 0) and background (horizon 1) accumulators into table rows.
inline DepartureReport departure_report(const DepartureAccumulator& analysis, const DepartureAccumulator& background,
                                        const std::vector<core::ModalitySpec>& specs = {}) {
  DepartureReport rep;
  for (const auto& m : analysis.modalities()) {
    const core::ModalitySpec* spec = nullptr;
    for (const auto& s : specs)
      if (s.name == m) spec = &s;
    for (std::size_t c = 0; c < analysis.channels(m); ++c) {
      DepartureRow row;
      row.modality = m;
      row.channel = c;
      row.label = channel_label(spec, c);
      row.units = channel_units(spec, c);
      row.analysis = analysis.stats(m, c);
      row.background = background.stats(m, c);
      if (row.analysis.count == 0 || row.background.count == 0) {
        rep.warnings.push_back("departures: " + m + " channel " + row.label + " has no valid observations; row omitted");
        continue;
      }
      rep.rows.push_back(std::move(row));
    }
  }
  return rep;
}

/// Single-set convenience: statistics of pred against obs per channel.
inline std::vector<std::pair<std::string, std::vector<ErrorStats>>> departures(
    const std::vector<core::ObservationCube>& pred, const std::vector<core::ObservationCube>& obs) {
  DepartureAccumulator acc;
  acc.add(pred, obs);
  std::vector<std::pair<std::string, std::vector<ErrorStats>>> out;
  for (const auto& m : acc.modalities()) {
    std::vector<ErrorStats> rows;
    for (std::size_t c = 0; c < acc.channels(m); ++c) rows.push_back(acc.stats(m, c));
    out.push_back({m, rows});
  }
  return out;
}

}  // namespace obsmae::verify
