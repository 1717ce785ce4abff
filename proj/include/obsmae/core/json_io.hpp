#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsmae/core/error.hpp"
#include "obsmae/core/grid.hpp"
#include "obsmae/core/modality.hpp"

namespace obsmae::core {

using nlohmann::json;

inline json to_json(const GridSpec& g) {
  return {{"resolution_deg", g.resolution_deg}, {"n_lat", g.n_lat},         {"n_lon", g.n_lon},
          {"window", g.window},                 {"patch", g.patch},         {"lat_origin", g.lat_origin},
          {"lon_origin", g.lon_origin}};
}

inline GridSpec grid_from_json(const json& j) {
  GridSpec g;
  if (j.contains("global_n_lat")) {
    g = GridSpec::global(j.at("global_n_lat").get<std::size_t>(), j.at("global_n_lon").get<std::size_t>(),
                         j.value("window", g.window), j.value("patch", g.patch));
  } else {
    g.resolution_deg = j.value("resolution_deg", g.resolution_deg);
    g.n_lat = j.value("n_lat", g.n_lat);
    g.n_lon = j.value("n_lon", g.n_lon);
    g.window = j.value("window", g.window);
    g.patch = j.value("patch", g.patch);
    g.lat_origin = j.value("lat_origin", 90.0 - g.resolution_deg / 2.0);
    g.lon_origin = j.value("lon_origin", -180.0 + g.resolution_deg / 2.0);
  }
  g.validate();
  return g;
}

inline json to_json(const ModalitySpec& m) {
  json labels = json::array();
  for (const auto& l : m.channel_labels) labels.push_back({{"name", l.name}, {"units", l.units}});
  json j = {{"name", m.name},
            {"kind", to_string(m.kind)},
            {"channels", m.channels},
            {"temporal", m.temporal},
            {"channel_labels", labels},
            {"coverage_target", m.coverage_target},
            {"sub_satellite_lon", m.sub_satellite_lon},
            {"levels", m.levels},
            {"variable", m.variable == ProfileVariable::Temperature ? "temperature" : "humidity"}};
  j["render"] = {{"coverage", m.render.coverage},
                 {"noise_sigma", m.render.noise_sigma},
                 {"weights", m.render.weights},
                 {"nonlinearity_scale", m.render.nonlinearity_scale},
                 {"swath_step_deg", m.render.swath_step_deg},
                 {"swath_start_lon", std::isnan(m.render.swath_start_lon) ? json(nullptr) : json(m.render.swath_start_lon)}};
  return j;
}

inline ModalitySpec modality_from_json(const json& j) {
  ModalitySpec m;
  m.name = j.at("name").get<std::string>();
  m.kind = modality_kind_from(j.at("kind").get<std::string>());
  m.channels = j.at("channels").get<std::size_t>();
  m.temporal = j.value("temporal", m.kind != ModalityKind::Static);
  if (j.contains("channel_labels"))
    for (const auto& l : j.at("channel_labels"))
      m.channel_labels.push_back({l.at("name").get<std::string>(), l.value("units", std::string{})});
  m.coverage_target = j.value("coverage_target", 1.0);
  m.sub_satellite_lon = j.value("sub_satellite_lon", 0.0);
  m.levels = j.value("levels", std::vector<double>{});
  m.variable = j.value("variable", std::string("temperature")) == "humidity" ? ProfileVariable::Humidity
                                                                              : ProfileVariable::Temperature;
  if (j.contains("render")) {
    const auto& r = j.at("render");
    m.render.coverage = r.value("coverage", m.render.coverage);
    m.render.noise_sigma = r.value("noise_sigma", m.render.noise_sigma);
    m.render.weights = r.value("weights", m.render.weights);
    m.render.nonlinearity_scale = r.value("nonlinearity_scale", m.render.nonlinearity_scale);
    m.render.swath_step_deg = r.value("swath_step_deg", m.render.swath_step_deg);
    if (r.contains("swath_start_lon") && !r.at("swath_start_lon").is_null())
      m.render.swath_start_lon = r.at("swath_start_lon").get<double>();
  }
  m.validate();
  return m;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw Error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

/// Write through a temporary file and rename, so readers never see a partial document.
inline void write_json_file_atomic(const std::filesystem::path& path, const json& j) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write " + tmp);
    f << j.dump(2) << "\n";
    if (!f) throw IoError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace obsmae::core
