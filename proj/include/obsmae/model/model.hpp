#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "obsmae/core/modality.hpp"
#include "obsmae/core/norm.hpp"
#include "obsmae/data/datastore.hpp"
#include "obsmae/model/loss.hpp"
#include "obsmae/model/network.hpp"

namespace obsmae::model {

/// Learnable state plus everything needed to rebuild the architecture around it.
struct ModelParams {
  ModelConfig config;
  std::vector<core::ModalitySpec> modalities;
  ParamSet<float> values;
  std::vector<std::string> stages;  // completed training stages, in order

  bool has_stage(const std::string& s) const { return std::find(stages.begin(), stages.end(), s) != stages.end(); }

  std::vector<ModalityLayout> layouts() const {
    std::vector<ModalityLayout> out;
    for (const auto& m : modalities) out.push_back(ModalityLayout::from(m));
    return out;
  }

  template <class S = float>
  Network<S> network() const {
    return Network<S>(config, layouts());
  }

  static ModelParams initialise(const ModelConfig& cfg, const std::vector<core::ModalitySpec>& modalities) {
    ModelParams mp;
    mp.config = cfg;
    mp.modalities = modalities;
    mp.values = mp.network<float>().init_params(cfg.init_seed);
    return mp;
  }
};

/// Normalises each cube of the sample (when stats are given) and cuts it into tokens, in sample order.
inline std::vector<TokenSet> tokenize(const data::MultiModalSample& sample, const core::NormalizationStats* stats,
                                      const ModelParams& mp) {
  std::vector<TokenSet> out;
  for (const auto& cube : sample.cubes) {
    bool temporal = true;
    for (const auto& m : mp.modalities)
      if (m.name == cube.modality()) temporal = m.temporal;
    out.push_back(patchify(stats ? core::normalize(cube, stats->at(cube.modality())) : cube, mp.config.patch, temporal));
  }
  return out;
}

/// Dense per-modality predictions in normalised units, one cube per sample modality.
inline std::vector<core::ObservationCube> forward(const data::MultiModalSample& sample, const MaskPlan& plan,
                                                  const ModelParams& mp, const core::NormalizationStats* stats) {
  const auto net = mp.network<float>();
  const auto tokens = tokenize(sample, stats, mp);
  const auto pred = net.forward(mp.values, tokens, plan, nullptr);
  std::vector<core::ObservationCube> out;
  for (std::size_t m = 0; m < tokens.size(); ++m)
    out.push_back(unpatchify(pred[m], tokens[m], sample.cubes[m].times()));
  return out;
}

}  // namespace obsmae::model
