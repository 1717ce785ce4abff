#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsmae/core/cube.hpp"
#include "obsmae/core/error.hpp"

namespace obsmae::core {

struct ChannelStats {
  double mean = 0.0;
  double std = 1.0;
};

/// Per-channel Gaussian standardisation for one modality.
struct ModalityStats {
  std::vector<ChannelStats> channels;
};

/// Frozen training-split statistics keyed by modality name.
class NormalizationStats {
 public:
  void set(const std::string& modality, ModalityStats s) { by_modality_[modality] = std::move(s); }

  const ModalityStats& at(const std::string& modality) const {
    auto it = by_modality_.find(modality);
    if (it == by_modality_.end()) throw Error("no normalization stats for modality '" + modality + "'");
    return it->second;
  }
  bool contains(const std::string& modality) const { return by_modality_.count(modality) != 0; }
  const std::map<std::string, ModalityStats>& all() const { return by_modality_; }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, ms] : by_modality_) {
      auto arr = nlohmann::json::array();
      for (const auto& c : ms.channels) arr.push_back({{"mean", c.mean}, {"std", c.std}});
      j[name] = arr;
    }
    return j;
  }

  static NormalizationStats from_json(const nlohmann::json& j) {
    NormalizationStats out;
    for (const auto& [name, arr] : j.items()) {
      ModalityStats ms;
      for (const auto& c : arr) {
        ChannelStats cs{c.at("mean").get<double>(), c.at("std").get<double>()};
        require(cs.std > 0.0, "stats for " + name + ": std must be positive");
        ms.channels.push_back(cs);
      }
      out.set(name, std::move(ms));
    }
    return out;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write stats file " + path.string());
    f << to_json().dump(2) << "\n";
  }

  static NormalizationStats load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open stats file " + path.string());
    return from_json(nlohmann::json::parse(f));
  }

 private:
  std::map<std::string, ModalityStats> by_modality_;
};

/// Mean and population std per channel over valid cells of every cube.
inline ModalityStats compute_norm_stats(std::span<const ObservationCube> cubes) {
  require(!cubes.empty(), "compute_norm_stats: no cubes");
  const std::size_t channels = cubes.front().shape().c;
  const std::string& name = cubes.front().modality();
  ModalityStats out;
  for (std::size_t c = 0; c < channels; ++c) {
    // Accumulate in long double so the result does not depend on cell order in practice.
    long double sum = 0.0L;
    std::size_t n = 0;
    for (const auto& cube : cubes) {
      require(cube.shape().c == channels, "compute_norm_stats: channel count differs between cubes");
      const std::size_t plane = cube.shape().t * cube.shape().h * cube.shape().w;
      for (std::size_t i = c * plane; i < (c + 1) * plane; ++i)
        if (cube.valid_mask()[i]) {
          sum += cube.values()[i];
          ++n;
        }
    }
    if (n < 2)
      throw Error("compute_norm_stats: modality " + name + " channel " + std::to_string(c) +
                  " has fewer than 2 valid cells");
    const long double mean = sum / static_cast<long double>(n);
    long double ss = 0.0L;
    for (const auto& cube : cubes) {
      const std::size_t plane = cube.shape().t * cube.shape().h * cube.shape().w;
      for (std::size_t i = c * plane; i < (c + 1) * plane; ++i)
        if (cube.valid_mask()[i]) {
          const long double d = cube.values()[i] - mean;
          ss += d * d;
        }
    }
    const double sd = static_cast<double>(std::sqrt(ss / static_cast<long double>(n)));
    if (!(sd > 0.0))
      throw Error("compute_norm_stats: modality " + name + " channel " + std::to_string(c) +
                  " has zero variance");
    out.channels.push_back({static_cast<double>(mean), sd});
  }
  return out;
}

inline ObservationCube normalize(const ObservationCube& cube, const ModalityStats& stats) {
  require(stats.channels.size() == cube.shape().c,
          "normalize: " + cube.modality() + " has " + std::to_string(cube.shape().c) + " channels, stats have " +
              std::to_string(stats.channels.size()));
  ObservationCube out = cube;
  const std::size_t plane = cube.shape().t * cube.shape().h * cube.shape().w;
  for (std::size_t c = 0; c < cube.shape().c; ++c) {
    const double mu = stats.channels[c].mean, sd = stats.channels[c].std;
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i)
      if (out.valid_mask()[i]) out.values()[i] = static_cast<float>((out.values()[i] - mu) / sd);
  }
  return out;
}

inline ObservationCube denormalize(const ObservationCube& cube, const ModalityStats& stats) {
  require(stats.channels.size() == cube.shape().c,
          "denormalize: " + cube.modality() + " has " + std::to_string(cube.shape().c) +
              " channels, stats have " + std::to_string(stats.channels.size()));
  ObservationCube out = cube;
  const std::size_t plane = cube.shape().t * cube.shape().h * cube.shape().w;
  for (std::size_t c = 0; c < cube.shape().c; ++c) {
    const double mu = stats.channels[c].mean, sd = stats.channels[c].std;
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i)
      if (out.valid_mask()[i]) out.values()[i] = static_cast<float>(out.values()[i] * sd + mu);
  }
  return out;
}

}  // namespace obsmae::core
