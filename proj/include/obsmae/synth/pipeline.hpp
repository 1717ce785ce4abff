#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsmae/core/json_io.hpp"
#include "obsmae/data/datastore.hpp"
#include "obsmae/synth/coverage.hpp"
#include "obsmae/synth/latent.hpp"
#include "obsmae/synth/render.hpp"
#include "obsmae/verify/humidity.hpp"
#include "obsmae/verify/soundings.hpp"

namespace obsmae::synth {

namespace fs = std::filesystem;
using nlohmann::json;

struct SoundingOptions {
  std::size_t stations = 0;  // 0 = no soundings file
  std::size_t every_hours = 12;
};

/// Everything that determines a synthetic dataset.
struct SynthConfig {
  GridSpec grid;
  std::vector<core::ModalitySpec> modalities;
  std::size_t hours = 48;
  Hour start_hour = 0;
  std::uint64_t seed = 0;
  std::size_t chunk_hours = 24;
  std::size_t latent_levels = 8;
  LatentOptions latent;
  bool truth = false;  // also write a noise-free, fully covered copy under truth/
  SoundingOptions soundings;

  /// Latent pressure levels: the generated column, every PROFILE level and, when soundings are
  /// requested, the standard reporting levels.
  std::vector<double> pressures() const {
    std::vector<double> p = default_pressures(latent_levels);
    if (soundings.stations > 0) p.insert(p.end(), verify::kStandardLevels.begin(), verify::kStandardLevels.end());
    for (const auto& m : modalities)
      if (m.kind == core::ModalityKind::Profile) p.insert(p.end(), m.levels.begin(), m.levels.end());
    std::sort(p.begin(), p.end());
    std::vector<double> out;
    for (double v : p)
      if (out.empty() || std::abs(v - out.back()) > 1e-6 * v) out.push_back(v);
    return out;
  }

  void validate() const {
    grid.validate();
    require(!modalities.empty(), "synth: no modalities configured");
    require(hours >= 1, "synth: hours must be >= 1");
    require(chunk_hours >= 1, "synth: chunk_hours must be >= 1");
    require(latent_levels >= 1, "synth: latent_levels must be >= 1");
    for (const auto& m : modalities) {
      m.validate();
      coverage_kind_from(m.render.coverage);
    }
  }

  json to_json() const {
    json mods = json::array();
    for (const auto& m : modalities) mods.push_back(core::to_json(m));
    return {{"grid", core::to_json(grid)},
            {"modalities", mods},
            {"hours", hours},
            {"start_hour", start_hour},
            {"seed", seed},
            {"chunk_hours", chunk_hours},
            {"latent_levels", latent_levels},
            {"latent",
             {{"modes", latent.modes},
              {"max_zonal_wavenumber", latent.max_zonal_wavenumber},
              {"max_meridional_wavenumber", latent.max_meridional_wavenumber},
              {"zonal_speed_deg_per_hour", latent.zonal_speed_deg_per_hour},
              {"speed_shear_deg_per_hour", latent.speed_shear_deg_per_hour},
              {"temperature_anomaly_k", latent.temperature_anomaly_k},
              {"humidity_log_anomaly", latent.humidity_log_anomaly}}},
            {"truth", truth},
            {"soundings", {{"stations", soundings.stations}, {"every_hours", soundings.every_hours}}}};
  }

  static SynthConfig from_json(const json& j) {
    SynthConfig c;
    c.grid = core::grid_from_json(j.at("grid"));
    for (const auto& m : j.at("modalities")) c.modalities.push_back(core::modality_from_json(m));
    c.hours = j.value("hours", c.hours);
    if (j.contains("days")) c.hours = 24 * j.at("days").get<std::size_t>();
    c.start_hour = j.value("start_hour", c.start_hour);
    c.seed = j.value("seed", c.seed);
    c.chunk_hours = j.value("chunk_hours", c.chunk_hours);
    c.latent_levels = j.value("latent_levels", c.latent_levels);
    if (j.contains("latent")) {
      const auto& l = j.at("latent");
      c.latent.modes = l.value("modes", c.latent.modes);
      c.latent.max_zonal_wavenumber = l.value("max_zonal_wavenumber", c.latent.max_zonal_wavenumber);
      c.latent.max_meridional_wavenumber = l.value("max_meridional_wavenumber", c.latent.max_meridional_wavenumber);
      c.latent.zonal_speed_deg_per_hour = l.value("zonal_speed_deg_per_hour", c.latent.zonal_speed_deg_per_hour);
      c.latent.speed_shear_deg_per_hour = l.value("speed_shear_deg_per_hour", c.latent.speed_shear_deg_per_hour);
      c.latent.temperature_anomaly_k = l.value("temperature_anomaly_k", c.latent.temperature_anomaly_k);
      c.latent.humidity_log_anomaly = l.value("humidity_log_anomaly", c.latent.humidity_log_anomaly);
    }
    c.truth = j.value("truth", c.truth);
    if (j.contains("soundings")) {
      c.soundings.stations = j.at("soundings").value("stations", c.soundings.stations);
      c.soundings.every_hours = j.at("soundings").value("every_hours", c.soundings.every_hours);
    }
    c.validate();
    return c;
  }
};

struct SynthOutputs {
  fs::path manifest;
  fs::path truth_manifest;  // empty unless requested
  fs::path soundings;       // empty unless requested
};

inline constexpr const char* kSoundingHeader =
    "station,lat,lon,hour,pressure_hpa,temperature_k,specific_humidity_gkg,rh_pct";

namespace detail {

struct Station {
  std::size_t row = 0, col = 0;
};

inline std::vector<Station> place_stations(const SynthConfig& cfg) {
  auto rng = core::make_rng(cfg.seed, {0x50d5});
  std::uniform_int_distribution<std::size_t> row(0, cfg.grid.n_lat - 1), col(0, cfg.grid.n_lon - 1);
  std::vector<Station> out(cfg.soundings.stations);
  for (auto& s : out) s = {row(rng), col(rng)};
  return out;
}

inline std::size_t match_level_index(const LatentState& lat, double p) {
  for (std::size_t l = 0; l < lat.levels(); ++l)
    if (std::abs(lat.pressures[l] - p) <= 1e-6 * p) return l;
  throw Error("synth: sounding level " + std::to_string(p) + " hPa missing from the latent column");
}

/// Ascents at every station on the standard levels, at hours that are multiples of `every`.
inline void write_soundings(std::ofstream& out, const LatentState& lat, const std::vector<Station>& stations,
                            std::size_t every) {
  out << std::setprecision(9);
  for (std::size_t t = 0; t < lat.frames(); ++t) {
    if (lat.times[t] % static_cast<Hour>(every) != 0) continue;
    for (std::size_t s = 0; s < stations.size(); ++s) {
      const auto& st = stations[s];
      for (double p : verify::kStandardLevels) {
        const std::size_t l = match_level_index(lat, p);
        const double T = lat.temperature[lat.at(l, t, st.row, st.col)];
        const double q = lat.humidity[lat.at(l, t, st.row, st.col)];
        out << "S" << std::setw(3) << std::setfill('0') << s << std::setfill(' ') << ',' << lat.grid.lat_of(st.row)
            << ',' << lat.grid.lon_of(st.col) << ',' << lat.times[t] << ',' << p << ',' << T << ','
            << q << ',' << verify::relative_humidity(q, T, p) << '\n';
      }
    }
  }
}

}  // namespace detail

/// Generates the dataset chunk by chunk (bounded memory) into out_dir/manifest.json.
inline SynthOutputs synthesize(const SynthConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  SynthOutputs res;
  data::DatasetWriter writer(out_dir, cfg.grid, cfg.modalities, cfg.chunk_hours);

  std::vector<core::ModalitySpec> truth_specs;
  for (auto m : cfg.modalities) {
    m.render.noise_sigma = 0.0;
    m.render.coverage = "full";
    m.coverage_target = 1.0;
    truth_specs.push_back(m);
  }
  std::optional<data::DatasetWriter> truth;
  if (cfg.truth) truth.emplace(out_dir / "truth", cfg.grid, truth_specs, cfg.chunk_hours);

  std::ofstream sound;
  std::vector<detail::Station> stations;
  if (cfg.soundings.stations > 0) {
    require(cfg.soundings.every_hours >= 1, "synth: soundings.every_hours must be >= 1");
    res.soundings = out_dir / "soundings.csv";
    sound.open(res.soundings, std::ios::trunc);
    if (!sound) throw IoError("cannot write " + res.soundings.string());
    sound << kSoundingHeader << '\n';
    stations = detail::place_stations(cfg);
  }

  const auto pressures = cfg.pressures();
  bool static_done = false;
  for (std::size_t off = 0; off < cfg.hours; off += cfg.chunk_hours) {
    const std::size_t n = std::min(cfg.chunk_hours, cfg.hours - off);
    const Hour h0 = cfg.start_hour + static_cast<Hour>(off);
    const auto lat = generate_latent(cfg.seed, cfg.grid, n, pressures, h0, cfg.latent);
    for (std::size_t k = 0; k < cfg.modalities.size(); ++k) {
      const auto& m = cfg.modalities[k];
      if (!m.temporal && static_done) continue;
      const auto clean = render_modality(lat, m, cfg.seed);
      CoverageParams cp;
      cp.sub_satellite_lon = m.sub_satellite_lon;
      cp.swath_step_deg = m.render.swath_step_deg;
      cp.swath_start_lon = m.render.swath_start_lon;
      const auto kind = coverage_kind_from(m.render.coverage);
      writer.write(apply_coverage(clean, kind, m.coverage_target, cfg.grid, cp, cfg.seed ^ core::fnv1a(m.name)));
      if (truth) truth->write(render_modality(lat, truth_specs[k], cfg.seed));
    }
    static_done = true;
    if (sound.is_open()) detail::write_soundings(sound, lat, stations, cfg.soundings.every_hours);
  }
  writer.finish();
  res.manifest = out_dir / data::kManifestName;
  if (truth) {
    truth->finish();
    res.truth_manifest = out_dir / "truth" / data::kManifestName;
  }
  return res;
}

}  // namespace obsmae::synth
