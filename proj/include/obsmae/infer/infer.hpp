#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "obsmae/core/norm.hpp"
#include "obsmae/data/datastore.hpp"
#include "obsmae/infer/blend.hpp"
#include "obsmae/model/mask.hpp"
#include "obsmae/model/model.hpp"
#include "obsmae/train/stage.hpp"

namespace obsmae::infer {

using core::ObservationCube;

namespace detail {

inline std::vector<ObservationCube> run(const data::MultiModalSample& sample, const model::ModelParams& mp,
                                        const core::NormalizationStats& stats,
                                        const std::vector<model::TokenSet>& tokens, const model::MaskPlan& plan) {
  require(plan.total_visible() > 0, "gap_fill: empty visible set (no valid tokens in the visible modalities)");
  const auto net = mp.network<float>();
  const auto pred = net.forward(mp.values, tokens, plan, nullptr);
  std::vector<ObservationCube> out;
  for (std::size_t m = 0; m < tokens.size(); ++m)
    out.push_back(core::denormalize(model::unpatchify(pred[m], tokens[m], sample.cubes[m].times()),
                                    stats.at(tokens[m].modality)));
  return out;
}

}  // namespace detail

/// Dense reconstruction of every sample modality, in physical units, from all valid tokens of
/// the visible modalities.
inline std::vector<ObservationCube> gap_fill(const data::MultiModalSample& sample, const model::ModelParams& mp,
                                             const core::NormalizationStats& stats,
                                             const std::vector<std::string>& visible_modalities) {
  require(!visible_modalities.empty(), "gap_fill: empty visible set");
  for (const auto& v : visible_modalities) {
    bool found = false;
    for (const auto& c : sample.cubes) found |= c.modality() == v;
    require(found, "gap_fill: visible modality '" + v + "' is not in the sample");
  }
  const auto tokens = model::tokenize(sample, &stats, mp);
  return detail::run(sample, mp, stats, tokens, model::visible_plan(tokens, visible_modalities));
}

inline std::vector<std::string> modality_names(const data::MultiModalSample& s) {
  std::vector<std::string> out;
  for (const auto& c : s.cubes) out.push_back(c.modality());
  return out;
}

/// Plan for the background/analysis contract: horizon 1 hides every token of the last frame.
inline model::MaskPlan background_plan(const std::vector<model::TokenSet>& tokens, std::size_t frames, int horizon) {
  require(horizon == 0 || horizon == 1, "background_forecast: horizon must be 0 or 1");
  std::vector<std::string> all;
  for (const auto& t : tokens) all.push_back(t.modality);
  if (horizon == 0) return model::visible_plan(tokens, all);
  return model::visible_plan(tokens, all, {frames - 1});
}

/// Last-frame fields (one single-frame cube per temporal modality). horizon 1 forecasts the
/// last frame with it hidden; horizon 0 is the analysis with it visible.
inline std::vector<ObservationCube> background_forecast(const data::MultiModalSample& sample,
                                                        const model::ModelParams& mp,
                                                        const core::NormalizationStats& stats, int horizon) {
  auto is_temporal = [&](const std::string& name) {
    for (const auto& m : mp.modalities)
      if (m.name == name) return m.temporal;
    throw Error("background_forecast: modality '" + name + "' is not part of the model");
  };
  std::size_t frames = 0;
  bool any_temporal = false;
  for (const auto& c : sample.cubes)
    if (is_temporal(c.modality())) {
      any_temporal = true;
      frames = std::max(frames, c.shape().t);
    }
  require(any_temporal, "background_forecast: sample holds only static modalities");
  require(frames == mp.config.window_hours, "background_forecast: sample has " + std::to_string(frames) +
                                                " frames, model expects " + std::to_string(mp.config.window_hours));
  auto tokens = model::tokenize(sample, &stats, mp);
  const auto plan = background_plan(tokens, frames, horizon);
  if (horizon == 1)
    // Hidden frame content never enters the network; clear it so no code path can read it.
    for (auto& ts : tokens)
      if (ts.temporal)
        for (std::size_t r = 0; r < ts.size(); ++r)
          if (ts.index[r].t == frames - 1) ts.patches.row(static_cast<Eigen::Index>(r)).setZero();
  const auto dense = detail::run(sample, mp, stats, tokens, plan);
  std::vector<ObservationCube> out;
  for (const auto& c : dense) {
    if (!is_temporal(c.modality())) continue;
    const auto& s = c.shape();
    ObservationCube last(c.modality(), {s.c, 1, s.h, s.w}, {c.times().back()});
    for (std::size_t ch = 0; ch < s.c; ++ch)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) last.set(ch, 0, y, x, c.value(ch, s.t - 1, y, x));
    out.push_back(std::move(last));
  }
  return out;
}

struct MosaicOptions {
  std::size_t stride = 0;                       // 0 = half the window
  std::vector<std::string> visible;             // empty = all modalities
  std::size_t workers = 1;
};

/// Global dense fields for hours [t0, t0 + window_hours): gap_fill on every tile of a sliding
/// window (longitude wraps) and Hann blending. Returns one cube per temporal modality.
inline std::vector<ObservationCube> mosaic_timeblock(const data::Dataset& ds, const model::ModelParams& mp,
                                                     const core::NormalizationStats& stats, core::Hour t0,
                                                     const MosaicOptions& opt = {}) {
  const auto W = static_cast<core::Hour>(mp.config.window_hours);
  require(t0 % W == 0, "mosaic_timeblock: t0 = " + std::to_string(t0) + " is not aligned to a " + std::to_string(W) +
                           "-hour block");
  const auto& g = ds.grid();
  require(g.window == mp.config.window, "mosaic_timeblock: dataset window differs from the model");
  const std::size_t stride = opt.stride ? opt.stride : g.window / 2;
  const auto origins = tile_origins(g, stride);
  std::vector<std::string> mods;
  for (const auto& m : mp.modalities) mods.push_back(m.name);
  const auto visible = opt.visible.empty() ? mods : opt.visible;

  std::vector<std::vector<ObservationCube>> per_tile(origins.size());
  train::detail::parallel_for(origins.size(), opt.workers, [&](std::size_t i) {
    const auto sample = ds.read_window(t0, origins[i].first, origins[i].second, mp.config.window_hours, mods);
    per_tile[i] = gap_fill(sample, mp, stats, visible);
  });

  std::vector<ObservationCube> out;
  for (std::size_t m = 0; m < mods.size(); ++m) {
    if (!mp.modalities[m].temporal) continue;
    std::vector<PlacedTile> tiles;
    for (std::size_t i = 0; i < origins.size(); ++i)
      tiles.push_back({std::move(per_tile[i][m]), origins[i].first, origins[i].second});
    out.push_back(hann_blend(tiles, g));
  }
  return out;
}

}  // namespace obsmae::infer
