#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "obsmae/core/norm.hpp"
#include "obsmae/data/datastore.hpp"
#include "obsmae/data/sampler.hpp"
#include "obsmae/model/loss.hpp"
#include "obsmae/model/model.hpp"
#include "obsmae/train/stage.hpp"

namespace obsmae::train {

/// Masked-token MSE of the model and of the climatology predictor (per-channel training
/// mean, i.e. zero in normalised units) on the same windows and masks.
struct EvalResult {
  double model_mse = 0.0;
  double climatology_mse = 0.0;
  std::size_t windows = 0;
  std::size_t cells = 0;
  double skill_ratio() const { return model_mse / climatology_mse; }
};

struct EvalOptions {
  std::size_t windows = 32;
  std::uint64_t seed = 0;
  double min_valid_fraction = 0.05;
  std::vector<std::string> modalities;  // empty = all of the model's modalities
  std::optional<core::Hour> first_start, last_start;
};

inline EvalResult evaluate_masked(const model::ModelParams& mp, const data::Dataset& ds,
                                  const core::NormalizationStats& stats, const EvalOptions& eo) {
  data::SamplerOptions opt;
  opt.window_hours = mp.config.window_hours;
  opt.min_valid_fraction = eo.min_valid_fraction;
  opt.first_start = eo.first_start;
  opt.last_start = eo.last_start;
  opt.modalities = eo.modalities;
  if (opt.modalities.empty())
    for (const auto& m : mp.modalities) opt.modalities.push_back(m.name);
  auto rng = core::make_rng(eo.seed, {4});
  const auto net = mp.network<float>();
  double sse_model = 0.0, sse_clim = 0.0;
  EvalResult r;
  for (std::size_t i = 0; i < eo.windows; ++i) {
    const auto w = detail::prepare_window(ds, stats, mp, opt, rng);
    const auto pred = net.forward(mp.values, w.tokens, w.plan, nullptr);
    const auto lm = model::masked_mse_loss<float>(pred, w.tokens, w.plan, false);
    std::vector<model::Mat<float>> zeros;
    for (const auto& p : pred) zeros.push_back(model::Mat<float>::Zero(p.rows(), p.cols()));
    const auto lc = model::masked_mse_loss<float>(zeros, w.tokens, w.plan, false);
    sse_model += lm.value * static_cast<double>(lm.cells);
    sse_clim += lc.value * static_cast<double>(lc.cells);
    r.cells += lm.cells;
    ++r.windows;
  }
  r.model_mse = sse_model / static_cast<double>(r.cells);
  r.climatology_mse = sse_clim / static_cast<double>(r.cells);
  return r;
}

/// Validation-range evaluation using the same time split as training.
inline EvalResult evaluate_validation(const model::ModelParams& mp, const data::Dataset& ds,
                                      const core::NormalizationStats& stats, double validation_fraction,
                                      EvalOptions eo) {
  const auto split = split_by_time(ds.manifest(), mp.config.window_hours, validation_fraction);
  require(split.has_validation, "evaluate_validation: validation_fraction must be positive");
  eo.first_start = split.val_first;
  eo.last_start = split.val_last;
  return evaluate_masked(mp, ds, stats, eo);
}

}  // namespace obsmae::train
