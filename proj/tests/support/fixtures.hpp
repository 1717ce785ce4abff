#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "obsmae/core/cube.hpp"
#include "obsmae/core/modality.hpp"
#include "obsmae/core/random.hpp"
#include "obsmae/model/params.hpp"
#include "obsmae/synth/pipeline.hpp"

namespace obsmae::testing {

/// Smooth random cube with an optional fraction of invalid patch-aligned blocks.
inline core::ObservationCube random_cube(const std::string& name, core::Shape4 s, std::uint64_t seed,
                                         double invalid_fraction = 0.0, std::size_t block = 16) {
  auto rng = core::make_rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  core::ObservationCube c(name, s, core::hour_range(1000, s.t));
  std::vector<double> phase(s.c);
  for (auto& p : phase) p = n(rng);
  for (std::size_t ch = 0; ch < s.c; ++ch)
    for (std::size_t t = 0; t < s.t; ++t)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x)
          c.set(ch, t, y, x,
                static_cast<float>(std::sin(0.1 * x + 0.05 * t + phase[ch]) * std::cos(0.13 * y - phase[ch]) +
                                   0.1 * n(rng)));
  if (invalid_fraction > 0.0)
    for (std::size_t t = 0; t < s.t; ++t)
      for (std::size_t by = 0; by < s.h / block; ++by)
        for (std::size_t bx = 0; bx < s.w / block; ++bx)
          if (u(rng) < invalid_fraction)
            for (std::size_t ch = 0; ch < s.c; ++ch)
              for (std::size_t y = by * block; y < (by + 1) * block; ++y)
                for (std::size_t x = bx * block; x < (bx + 1) * block; ++x) c.invalidate(ch, t, y, x);
  return c;
}

inline core::ModalitySpec simple_spec(const std::string& name, core::ModalityKind kind, std::size_t channels) {
  core::ModalitySpec m;
  m.name = name;
  m.kind = kind;
  m.channels = channels;
  m.temporal = kind != core::ModalityKind::Static;
  if (kind == core::ModalityKind::Profile)
    for (std::size_t i = 0; i < channels; ++i) m.levels.push_back(100.0 * static_cast<double>(i + 1));
  return m;
}

/// Worst relative disagreement between analytic gradients and central differences, over up to
/// `per_param` entries of every parameter tensor. Entries where both magnitudes are below
/// `floor` count as agreeing.
inline double max_gradient_error(model::ParamSet<double>& params, const model::ParamSet<double>& analytic,
                                 const std::function<double()>& loss, std::size_t per_param, double h = 1e-5,
                                 double floor = 1e-9, std::string* worst = nullptr) {
  double worst_err = 0.0;
  auto rng = core::make_rng(99);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i];
    const auto n = static_cast<std::size_t>(w.size());
    for (std::size_t k = 0; k < std::min(per_param, n); ++k) {
      const std::size_t e = n <= per_param ? k : std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      const double orig = w.data()[e];
      w.data()[e] = orig + h;
      const double lp = loss();
      w.data()[e] = orig - h;
      const double lm = loss();
      w.data()[e] = orig;
      const double num = (lp - lm) / (2.0 * h);
      const double ana = analytic[i].data()[e];
      const double scale = std::max(std::abs(num), std::abs(ana));
      if (scale < floor) continue;
      const double err = std::abs(num - ana) / scale;
      if (err > worst_err) {
        worst_err = err;
        if (worst) *worst = params.name(i) + "[" + std::to_string(e) + "] analytic=" + std::to_string(ana) +
                            " numeric=" + std::to_string(num);
      }
    }
  }
  return worst_err;
}

/// Small multi-modal synthetic setup on a coarse global grid with the tiny model's window.
inline synth::SynthConfig tiny_synth_config(std::size_t hours = 48, std::uint64_t seed = 1, bool with_profile = true) {
  synth::SynthConfig c;
  c.grid = core::GridSpec::global(64, 128, 48, 16);
  c.hours = hours;
  c.seed = seed;
  c.latent_levels = 6;
  auto geo = simple_spec("geo", core::ModalityKind::Geo, 3);
  geo.coverage_target = 0.6;
  geo.render.coverage = "geo_disk";
  geo.render.noise_sigma = 0.1;
  auto leo = simple_spec("leo", core::ModalityKind::Leo, 2);
  leo.coverage_target = 0.3;
  leo.render.coverage = "leo_swath";
  leo.render.noise_sigma = 0.1;
  c.modalities = {geo, leo};
  if (with_profile) {
    core::ModalitySpec prof;
    prof.name = "prof";
    prof.kind = core::ModalityKind::Profile;
    prof.channels = 3;
    prof.levels = {300.0, 500.0, 850.0};
    prof.coverage_target = 0.3;
    prof.render.coverage = "leo_swath";
    c.modalities.push_back(prof);
  }
  auto elev = simple_spec("elev", core::ModalityKind::Static, 2);
  c.modalities.push_back(elev);
  return c;
}

/// Empty scratch directory in the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("obsmae_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace obsmae::testing
