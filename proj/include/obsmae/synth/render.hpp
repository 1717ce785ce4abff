#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "obsmae/core/cube.hpp"
#include "obsmae/core/modality.hpp"
#include "obsmae/core/random.hpp"
#include "obsmae/synth/latent.hpp"

namespace obsmae::synth {

using core::ModalityKind;
using core::ModalitySpec;
using core::ObservationCube;

/// Sounder-like weighting functions: channel c peaks at a level spread evenly over the column,
/// with a water-vapour sensitivity at the peak. Rows sum to 1 over the temperature block.
inline std::vector<std::vector<double>> default_channel_weights(std::size_t channels, std::size_t levels) {
  std::vector<std::vector<double>> w(channels, std::vector<double>(2 * levels, 0.0));
  for (std::size_t c = 0; c < channels; ++c) {
    const double peak = channels == 1 ? 0.5 * static_cast<double>(levels - 1)
                                      : static_cast<double>(c) * static_cast<double>(levels - 1) /
                                            static_cast<double>(channels - 1);
    double total = 0.0;
    for (std::size_t l = 0; l < levels; ++l) {
      const double d = (static_cast<double>(l) - peak) / 1.5;
      w[c][l] = std::exp(-0.5 * d * d);
      total += w[c][l];
    }
    for (std::size_t l = 0; l < levels; ++l) w[c][l] /= total;
    w[c][levels + static_cast<std::size_t>(std::lround(peak))] = -1.5;  // K per g/kg
  }
  return w;
}

namespace detail {

inline std::size_t match_level(const LatentState& latent, double p, const std::string& modality) {
  for (std::size_t l = 0; l < latent.levels(); ++l)
    if (std::abs(latent.pressures[l] - p) <= 1e-6 * p) return l;
  throw Error("render_modality: " + modality + " level " + std::to_string(p) + " hPa not in latent levels");
}

}  // namespace detail

/// Synthetic observation operator: values for every cell of the latent grid and time span,
/// all valid (coverage is applied separately).
inline ObservationCube render_modality(const LatentState& latent, const ModalitySpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto& g = latent.grid;
  const std::size_t T = spec.temporal ? latent.frames() : 1;
  const std::size_t L = latent.levels();
  std::vector<core::Hour> times(latent.times.begin(), latent.times.begin() + static_cast<long>(T));
  ObservationCube cube(spec.name, {spec.channels, T, g.n_lat, g.n_lon}, times);

  // Noise is drawn per (channel, hour) so the result does not depend on how hours are chunked.
  std::normal_distribution<double> noise(0.0, 1.0);
  auto frame_rng = [&](std::size_t c, std::size_t t) {
    noise.reset();
    return core::make_rng(seed, {core::fnv1a(spec.name), c, static_cast<std::uint64_t>(latent.times[t])});
  };
  const double sigma = spec.render.noise_sigma;

  if (spec.kind == ModalityKind::Static) {
    require(spec.channels <= 2, "render_modality: STATIC supports elevation and land-sea mask only");
    for (std::size_t y = 0; y < g.n_lat; ++y)
      for (std::size_t x = 0; x < g.n_lon; ++x) {
        const std::size_t i = y * g.n_lon + x;
        cube.set(0, 0, y, x, latent.elevation[i]);
        if (spec.channels == 2) cube.set(1, 0, y, x, static_cast<float>(latent.land[i]));
      }
    return cube;
  }

  if (spec.kind == ModalityKind::Profile) {
    require(spec.levels.size() <= L, "render_modality: " + spec.name + " requests " +
                                         std::to_string(spec.levels.size()) + " levels, latent has " +
                                         std::to_string(L));
    const auto& field =
        spec.variable == core::ProfileVariable::Temperature ? latent.temperature : latent.humidity;
    for (std::size_t c = 0; c < spec.channels; ++c) {
      const std::size_t l = detail::match_level(latent, spec.levels[c], spec.name);
      for (std::size_t t = 0; t < T; ++t) {
        auto rng = frame_rng(c, t);
        for (std::size_t y = 0; y < g.n_lat; ++y)
          for (std::size_t x = 0; x < g.n_lon; ++x) {
            double v = field[latent.at(l, t, y, x)];
            if (sigma > 0.0) v += sigma * noise(rng);
            if (spec.variable == core::ProfileVariable::Humidity) v = std::max(v, 0.0);
            cube.set(c, t, y, x, static_cast<float>(v));
          }
      }
    }
    return cube;
  }

  const auto weights = spec.render.weights.empty() ? default_channel_weights(spec.channels, L) : spec.render.weights;
  require(weights.size() == spec.channels, "render_modality: " + spec.name + " weight rows differ from channels");
  for (const auto& row : weights)
    require(row.size() == 2 * L, "render_modality: " + spec.name + " weights need 2*levels columns");

  const double s = spec.render.nonlinearity_scale;
  constexpr double kRef = 250.0;
  for (std::size_t c = 0; c < spec.channels; ++c) {
    double wsum = 0.0;
    for (std::size_t l = 0; l < 2 * L; ++l) wsum += std::abs(weights[c][l]);
    for (std::size_t t = 0; t < T; ++t) {
      auto rng = frame_rng(c, t);
      for (std::size_t y = 0; y < g.n_lat; ++y)
        for (std::size_t x = 0; x < g.n_lon; ++x) {
          double lin = 0.0;
          for (std::size_t l = 0; l < L; ++l) {
            lin += weights[c][l] * latent.temperature[latent.at(l, t, y, x)];
            lin += weights[c][L + l] * latent.humidity[latent.at(l, t, y, x)];
          }
          // Zero-weight channels are pure noise around the reference.
          double v = wsum > 0.0 ? kRef + s * std::tanh((lin - kRef) / s) : kRef;
          if (sigma > 0.0) v += sigma * noise(rng);
          cube.set(c, t, y, x, static_cast<float>(v));
        }
    }
  }
  return cube;
}

}  // namespace obsmae::synth
