#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "obsmae/core/norm.hpp"
#include "obsmae/data/datastore.hpp"
#include "obsmae/infer/infer.hpp"
#include "obsmae/model/model.hpp"

namespace obsmae::verify {

enum class SensitivityMode { DropOne, KeepOne };

inline std::string to_string(SensitivityMode m) { return m == SensitivityMode::DropOne ? "drop_one" : "keep_one"; }

inline SensitivityMode sensitivity_mode_from(const std::string& s) {
  if (s == "drop_one") return SensitivityMode::DropOne;
  if (s == "keep_one") return SensitivityMode::KeepOne;
  throw Error("unknown sensitivity mode '" + s + "' (expected drop_one or keep_one)");
}

enum class Surface { Land, Ocean };
inline std::string to_string(Surface s) { return s == Surface::Land ? "land" : "ocean"; }

/// MAE columns are in units of the target channel's standard deviation, pooled over channels.
struct SensitivityRow {
  SensitivityMode mode = SensitivityMode::DropOne;
  std::string perturbed;  // "baseline" for the reference rows
  std::string target;
  Surface surface = Surface::Land;
  double mae_perturbed = 0.0;
  double mae_baseline = 0.0;
  double relative_mae = 1.0;
  std::size_t cells = 0;
  std::size_t windows = 0;
  bool undefined = false;  // baseline MAE of zero
};

struct SensitivityReport {
  std::vector<SensitivityRow> rows;
  std::vector<std::string> notes;  // windows skipped for empty visible sets

  const SensitivityRow* find(const std::string& perturbed, const std::string& target, Surface s) const {
    for (const auto& r : rows)
      if (r.perturbed == perturbed && r.target == target && r.surface == s) return &r;
    return nullptr;
  }
};

namespace detail {

/// Land flag per window cell from the STATIC modality's land-sea channel.
inline std::vector<std::uint8_t> land_mask(const data::MultiModalSample& s, const model::ModelParams& mp) {
  for (const auto& spec : mp.modalities) {
    if (spec.kind != core::ModalityKind::Static || spec.channels < 2) continue;
    for (const auto& c : s.cubes) {
      if (c.modality() != spec.name) continue;
      std::vector<std::uint8_t> land(c.shape().h * c.shape().w, 0);
      for (std::size_t y = 0; y < c.shape().h; ++y)
        for (std::size_t x = 0; x < c.shape().w; ++x) {
          require(c.valid(1, 0, y, x), "sensitivity: land-sea mask has missing cells");
          land[y * c.shape().w + x] = c.value(1, 0, y, x) > 0.5f ? 1 : 0;
        }
      return land;
    }
  }
  throw Error("sensitivity: needs a STATIC modality with a land-sea mask channel (channel 2) in the samples");
}

struct SurfaceSums {
  double abs[2] = {0.0, 0.0};
  std::size_t n[2] = {0, 0};
};

inline std::vector<SurfaceSums> window_errors(const std::vector<core::ObservationCube>& pred,
                                              const data::MultiModalSample& obs, const std::vector<std::uint8_t>& land,
                                              const core::NormalizationStats& stats,
                                              const std::vector<std::size_t>& targets) {
  std::vector<SurfaceSums> out(targets.size());
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto& o = obs.cubes[targets[k]];
    const auto& p = pred[targets[k]];
    const auto& st = stats.at(o.modality());
    const auto& s = o.shape();
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t t = 0; t < s.t; ++t)
        for (std::size_t y = 0; y < s.h; ++y)
          for (std::size_t x = 0; x < s.w; ++x) {
            if (!o.valid(c, t, y, x)) continue;
            const int cls = land[y * s.w + x] ? 0 : 1;
            out[k].abs[cls] += std::abs(static_cast<double>(p.value(c, t, y, x)) - o.value(c, t, y, x)) /
                               st.channels[c].std;
            ++out[k].n[cls];
          }
  }
  return out;
}

}  // namespace detail

/// Reconstruction error of every temporal target modality when one modality is removed
/// (drop_one) or kept alone (keep_one), relative to the all-visible baseline on the same windows,
/// split by land and ocean. A window where a perturbation leaves nothing visible is skipped for
/// that perturbation; a perturbation with no usable window is an error.
inline SensitivityReport sensitivity(const std::vector<data::MultiModalSample>& windows, const model::ModelParams& mp,
                                     const core::NormalizationStats& stats, SensitivityMode mode) {
  require(!windows.empty(), "sensitivity: no evaluation windows");
  const auto names = infer::modality_names(windows.front());
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < names.size(); ++i)
    for (const auto& m : mp.modalities)
      if (m.name == names[i] && m.temporal) targets.push_back(i);
  require(!targets.empty(), "sensitivity: samples hold no temporal modality");

  const std::size_t P = names.size();
  // [perturbation][target] sums for perturbed and for the matching baseline windows.
  std::vector<std::vector<detail::SurfaceSums>> pert(P, std::vector<detail::SurfaceSums>(targets.size()));
  std::vector<std::vector<detail::SurfaceSums>> base(P, std::vector<detail::SurfaceSums>(targets.size()));
  std::vector<detail::SurfaceSums> base_all(targets.size());
  std::vector<std::size_t> used(P, 0);
  SensitivityReport rep;

  auto accumulate = [](std::vector<detail::SurfaceSums>& into, const std::vector<detail::SurfaceSums>& w) {
    for (std::size_t k = 0; k < w.size(); ++k)
      for (int c = 0; c < 2; ++c) {
        into[k].abs[c] += w[k].abs[c];
        into[k].n[c] += w[k].n[c];
      }
  };

  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    const auto& w = windows[wi];
    require(infer::modality_names(w) == names, "sensitivity: windows hold different modality sets");
    const auto land = detail::land_mask(w, mp);
    const auto tokens = model::tokenize(w, &stats, mp);
    const auto baseline = detail::window_errors(infer::gap_fill(w, mp, stats, names), w, land, stats, targets);
    accumulate(base_all, baseline);
    for (std::size_t p = 0; p < P; ++p) {
      std::vector<std::string> visible;
      if (mode == SensitivityMode::KeepOne)
        visible = {names[p]};
      else
        for (std::size_t q = 0; q < P; ++q)
          if (q != p) visible.push_back(names[q]);
      if (model::visible_plan(tokens, visible).total_visible() == 0) {
        rep.notes.push_back(to_string(mode) + " " + names[p] + ": window (t0=" + std::to_string(w.origin.t0) +
                            ", lat0=" + std::to_string(w.origin.lat0) + ", lon0=" + std::to_string(w.origin.lon0) +
                            ") skipped, nothing visible");
        continue;
      }
      const auto pred = infer::gap_fill(w, mp, stats, visible);
      accumulate(pert[p], detail::window_errors(pred, w, land, stats, targets));
      accumulate(base[p], baseline);
      ++used[p];
    }
  }

  for (std::size_t k = 0; k < targets.size(); ++k)
    for (int c = 0; c < 2; ++c) {
      if (base_all[k].n[c] == 0) continue;
      SensitivityRow r;
      r.mode = mode;
      r.perturbed = "baseline";
      r.target = names[targets[k]];
      r.surface = c == 0 ? Surface::Land : Surface::Ocean;
      r.mae_perturbed = r.mae_baseline = base_all[k].abs[c] / static_cast<double>(base_all[k].n[c]);
      r.cells = base_all[k].n[c];
      r.windows = windows.size();
      r.undefined = r.mae_baseline == 0.0;
      r.relative_mae = r.undefined ? std::nan("") : 1.0;
      rep.rows.push_back(r);
    }
  for (std::size_t p = 0; p < P; ++p) {
    if (used[p] == 0)
      throw Error("sensitivity: " + to_string(mode) + " of '" + names[p] +
                  "' leaves an empty visible set in every window");
    for (std::size_t k = 0; k < targets.size(); ++k)
      for (int c = 0; c < 2; ++c) {
        if (pert[p][k].n[c] == 0) continue;
        SensitivityRow r;
        r.mode = mode;
        r.perturbed = names[p];
        r.target = names[targets[k]];
        r.surface = c == 0 ? Surface::Land : Surface::Ocean;
        r.mae_perturbed = pert[p][k].abs[c] / static_cast<double>(pert[p][k].n[c]);
        r.mae_baseline = base[p][k].abs[c] / static_cast<double>(base[p][k].n[c]);
        r.cells = pert[p][k].n[c];
        r.windows = used[p];
        r.undefined = r.mae_baseline == 0.0;
        r.relative_mae = r.undefined ? std::nan("") : r.mae_perturbed / r.mae_baseline;
        rep.rows.push_back(r);
      }
  }
  return rep;
}

}  // namespace obsmae::verify
