#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "obsmae/core/error.hpp"

namespace obsmae::verify {

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W-)
  double p_value = 1.0;
  std::size_t n = 0;       // non-zero differences used
  bool exact = false;
};

namespace detail {

/// Average ranks (1-based) of |d| with ties sharing the mean rank; returns whether ties occurred.
inline bool average_ranks(const std::vector<double>& a, std::vector<double>& ranks) {
  std::vector<std::size_t> idx(a.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
  ranks.assign(a.size(), 0.0);
  bool ties = false;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && a[idx[j + 1]] == a[idx[i]]) ++j;
    if (j > i) ties = true;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ties;
}

/// P(W+ <= w) under the null for n untied ranks, by counting subsets of {1..n} with sum <= w.
inline double exact_cdf(std::size_t n, double w) {
  const std::size_t max = n * (n + 1) / 2;
  std::vector<double> count(max + 1, 0.0);
  count[0] = 1.0;
  for (std::size_t r = 1; r <= n; ++r)
    for (std::size_t s = max; s >= r; --s) count[s] += count[s - r];
  const double total = std::ldexp(1.0, static_cast<int>(n));
  double acc = 0.0;
  for (std::size_t s = 0; s <= max && static_cast<double>(s) <= w + 1e-9; ++s) acc += count[s];
  return acc / total;
}

}  // namespace detail

/// Two-sided Wilcoxon signed-rank test on paired differences. Zero differences are discarded.
/// Exact null distribution when at most 50 non-zero differences remain and none are tied;
/// otherwise the normal approximation with tie-corrected variance and no continuity correction.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& diffs) {
  std::vector<double> d;
  for (double x : diffs) {
    require(std::isfinite(x), "wilcoxon: non-finite difference");
    if (x != 0.0) d.push_back(x);
  }
  WilcoxonResult res;
  res.n = d.size();
  if (d.empty()) return res;  // every difference zero: no evidence of a shift
  std::vector<double> mag(d.size()), ranks;
  for (std::size_t i = 0; i < d.size(); ++i) mag[i] = std::abs(d[i]);
  const bool ties = detail::average_ranks(mag, ranks);
  double wplus = 0.0, wminus = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? wplus : wminus) += ranks[i];
  res.statistic = std::min(wplus, wminus);
  const auto n = static_cast<double>(d.size());
  if (d.size() <= 50 && !ties) {
    res.exact = true;
    res.p_value = std::min(1.0, 2.0 * detail::exact_cdf(d.size(), res.statistic));
    return res;
  }
  const double mean = n * (n + 1.0) / 4.0;
  double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
  std::map<double, std::size_t> groups;
  for (double r : ranks) ++groups[r];
  for (const auto& [r, t] : groups) {
    const auto tt = static_cast<double>(t);
    var -= (tt * tt * tt - tt) / 48.0;
  }
  if (!(var > 0.0)) return res;
  const double z = (res.statistic - mean) / std::sqrt(var);
  res.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  return res;
}

/// One paired error sample keyed by (station, time, level).
struct KeyedError {
  std::string station;
  long long hour = 0;
  double level = 0.0;
  double error = 0.0;
};

struct LevelSignificance {
  double level = 0.0;
  std::size_t pairs = 0;
  double p_value = 1.0;
  bool significant = false;  // p <= alpha
};

inline constexpr std::size_t kMinSignificancePairs = 8;

/// Per-level two-sided Wilcoxon test on |error_a| - |error_b| over samples paired by
/// (station, time, level). Levels are reported in descending pressure.
inline std::vector<LevelSignificance> significance(const std::vector<KeyedError>& a, const std::vector<KeyedError>& b,
                                                   double alpha = 0.05) {
  using Key = std::tuple<std::string, long long, double>;
  std::map<Key, double> bmap;
  for (const auto& e : b) bmap[{e.station, e.hour, e.level}] = e.error;
  std::map<double, std::vector<double>, std::greater<>> by_level;
  for (const auto& e : a) {
    auto it = bmap.find({e.station, e.hour, e.level});
    if (it == bmap.end()) continue;
    by_level[e.level].push_back(std::abs(e.error) - std::abs(it->second));
  }
  require(!by_level.empty(), "significance: no paired samples");
  std::vector<LevelSignificance> out;
  for (const auto& [level, diffs] : by_level) {
    if (diffs.size() < kMinSignificancePairs) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%g", level);
      throw Error("significance: level " + std::string(buf) + " hPa has " + std::to_string(diffs.size()) +
                  " pairs, need at least " + std::to_string(kMinSignificancePairs));
    }
    const auto w = wilcoxon_signed_rank(diffs);
    out.push_back({level, diffs.size(), w.p_value, w.p_value <= alpha});
  }
  return out;
}

}  // namespace obsmae::verify
