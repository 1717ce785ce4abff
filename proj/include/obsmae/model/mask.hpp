#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "obsmae/core/error.hpp"
#include "obsmae/core/random.hpp"
#include "obsmae/model/tokens.hpp"

namespace obsmae::model {

/// Visible-token selection for one sample. Indices refer to rows of each modality's TokenSet.
struct MaskPlan {
  std::size_t budget = 0;
  double alpha = 1.0;
  std::vector<std::string> modalities;
  std::vector<double> proportions;               // Dirichlet draw (empty for deterministic plans)
  std::vector<std::size_t> counts;               // K_m
  std::vector<std::vector<std::size_t>> visible;  // sorted token rows per modality

  std::size_t total_visible() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

  std::size_t position(const std::string& modality) const {
    for (std::size_t m = 0; m < modalities.size(); ++m)
      if (modalities[m] == modality) return m;
    throw Error("mask plan has no modality '" + modality + "'");
  }

  bool is_visible(std::size_t m, std::size_t row) const {
    return std::binary_search(visible[m].begin(), visible[m].end(), row);
  }
};

/// Hamilton apportionment of `total` by `weights`; ties go to the lower index.
inline std::vector<std::size_t> largest_remainder(std::size_t total, const std::vector<double>& weights) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> out(weights.size(), 0);
  if (weights.empty() || total == 0) return out;
  std::vector<double> w = weights;
  if (!(wsum > 0.0)) std::fill(w.begin(), w.end(), 1.0);
  const double ws = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<std::pair<double, std::size_t>> frac;
  std::size_t given = 0;
  for (std::size_t m = 0; m < w.size(); ++m) {
    const double q = static_cast<double>(total) * w[m] / ws;
    out[m] = static_cast<std::size_t>(std::floor(q));
    given += out[m];
    frac.push_back({q - std::floor(q), m});
  }
  std::stable_sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; given < total; ++k, ++given) ++out[frac[k % frac.size()].second];
  return out;
}

/// Splits `budget` over modalities with Dirichlet(alpha) proportions, clips each share to the
/// modality's valid tokens and hands the surplus to modalities with spare valid tokens, then picks
/// visible tokens uniformly without replacement among valid ones.
inline MaskPlan sample_mask_plan(const std::vector<TokenSet>& tokens, std::size_t budget, double alpha,
                                 core::Rng& rng) {
  require(budget >= 1, "sample_mask_plan: budget K must be >= 1");
  require(alpha > 0.0, "sample_mask_plan: alpha must be positive");
  const std::size_t M = tokens.size();
  std::vector<std::size_t> avail(M);
  std::size_t total_valid = 0;
  for (std::size_t m = 0; m < M; ++m) {
    avail[m] = tokens[m].valid_count();
    total_valid += avail[m];
  }
  require(total_valid > 0, "sample_mask_plan: no valid tokens in any modality");

  MaskPlan plan;
  plan.budget = budget;
  plan.alpha = alpha;
  for (const auto& t : tokens) plan.modalities.push_back(t.modality);

  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(M, 0.0);
  double psum = 0.0;
  while (!(psum > 0.0)) {
    psum = 0.0;
    for (auto& x : p) psum += (x = gamma(rng));
  }
  for (auto& x : p) x /= psum;
  plan.proportions = p;

  const std::size_t target = std::min(budget, total_valid);
  auto counts = largest_remainder(target, p);
  for (;;) {
    std::size_t surplus = 0;
    for (std::size_t m = 0; m < M; ++m)
      if (counts[m] > avail[m]) {
        surplus += counts[m] - avail[m];
        counts[m] = avail[m];
      }
    if (surplus == 0) break;
    std::vector<double> w(M, 0.0);
    bool spare = false;
    for (std::size_t m = 0; m < M; ++m)
      if (counts[m] < avail[m]) {
        w[m] = p[m] > 0.0 ? p[m] : 1e-12;
        spare = true;
      }
    if (!spare) break;
    const auto extra = largest_remainder(surplus, w);
    for (std::size_t m = 0; m < M; ++m) counts[m] += extra[m];
  }
  plan.counts = counts;

  plan.visible.resize(M);
  for (std::size_t m = 0; m < M; ++m) {
    std::vector<std::size_t> pool;
    for (std::size_t r = 0; r < tokens[m].size(); ++r)
      if (tokens[m].valid[r]) pool.push_back(r);
    // Partial Fisher-Yates.
    for (std::size_t k = 0; k < counts[m]; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    plan.visible[m].assign(pool.begin(), pool.begin() + static_cast<long>(counts[m]));
    std::sort(plan.visible[m].begin(), plan.visible[m].end());
  }
  return plan;
}

/// Deterministic plan: all valid tokens of the listed modalities visible, optionally hiding
/// every token of the given frames.
inline MaskPlan visible_plan(const std::vector<TokenSet>& tokens, const std::vector<std::string>& visible_modalities,
                             const std::vector<std::size_t>& hidden_frames = {}) {
  MaskPlan plan;
  plan.visible.resize(tokens.size());
  for (std::size_t m = 0; m < tokens.size(); ++m) {
    const auto& ts = tokens[m];
    plan.modalities.push_back(ts.modality);
    const bool listed =
        std::find(visible_modalities.begin(), visible_modalities.end(), ts.modality) != visible_modalities.end();
    if (listed)
      for (std::size_t r = 0; r < ts.size(); ++r) {
        if (!ts.valid[r]) continue;
        if (ts.temporal && std::find(hidden_frames.begin(), hidden_frames.end(), ts.index[r].t) != hidden_frames.end())
          continue;
        plan.visible[m].push_back(r);
      }
    plan.counts.push_back(plan.visible[m].size());
  }
  plan.budget = plan.total_visible();
  return plan;
}

}  // namespace obsmae::model
