#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "obsmae/core/error.hpp"

namespace obsmae::core {

enum class ModalityKind { Geo, Leo, Static, Profile };

enum class ProfileVariable { Temperature, Humidity };

inline std::string to_string(ModalityKind k) {
  switch (k) {
    case ModalityKind::Geo: return "GEO";
    case ModalityKind::Leo: return "LEO";
    case ModalityKind::Static: return "STATIC";
    case ModalityKind::Profile: return "PROFILE";
  }
  return "?";
}

inline ModalityKind modality_kind_from(const std::string& s) {
  if (s == "GEO") return ModalityKind::Geo;
  if (s == "LEO") return ModalityKind::Leo;
  if (s == "STATIC") return ModalityKind::Static;
  if (s == "PROFILE") return ModalityKind::Profile;
  throw Error("unknown modality kind '" + s + "'");
}

struct ChannelLabel {
  std::string name;
  std::string units;
};

/// How the synthetic simulator renders a modality. Ignored by everything downstream of synth.
struct RenderSpec {
  std::string coverage = "full";  // geo_disk | leo_swath | full
  double noise_sigma = 0.0;
  /// channels x (2*levels) weights over [temperature levels, humidity levels]; empty = generated.
  std::vector<std::vector<double>> weights;
  double nonlinearity_scale = 60.0;  // K; output = ref + s*tanh((x-ref)/s)
  double swath_step_deg = 30.0;      // LEO swath centre displacement per hour
  double swath_start_lon = std::numeric_limits<double>::quiet_NaN();  // NaN: drawn from seed
};

/// Static description of one sensor stream.
struct ModalitySpec {
  std::string name;
  ModalityKind kind = ModalityKind::Geo;
  std::size_t channels = 1;
  bool temporal = true;
  std::vector<ChannelLabel> channel_labels;
  double coverage_target = 1.0;
  double sub_satellite_lon = 0.0;
  std::vector<double> levels;  // hPa, PROFILE only
  ProfileVariable variable = ProfileVariable::Temperature;
  RenderSpec render;

  void validate() const {
    require(!name.empty(), "modality: empty name");
    require(channels >= 1, "modality " + name + ": channels must be >= 1");
    require(temporal == (kind != ModalityKind::Static),
            "modality " + name + ": temporal must be false iff kind is STATIC");
    require(coverage_target > 0.0 && coverage_target <= 1.0,
            "modality " + name + ": coverage_target must be in (0, 1]");
    require(channel_labels.empty() || channel_labels.size() == channels,
            "modality " + name + ": channel_labels length differs from channels");
    if (kind == ModalityKind::Profile) {
      require(levels.size() == channels, "modality " + name + ": PROFILE needs one level per channel");
      for (std::size_t i = 1; i < levels.size(); ++i)
        require(levels[i] > levels[i - 1],
                "modality " + name + ": PROFILE levels must be strictly increasing in pressure");
    }
  }

  std::size_t frames(std::size_t window_hours) const { return temporal ? window_hours : 1; }
};

/// Channel layout of the reference sensor suite, for building full-scale configs.
inline std::vector<ModalitySpec> reference_modalities() {
  auto make = [](std::string name, ModalityKind kind, std::size_t ch, double cov) {
    ModalitySpec m;
    m.name = std::move(name);
    m.kind = kind;
    m.channels = ch;
    m.temporal = kind != ModalityKind::Static;
    m.coverage_target = cov;
    return m;
  };
  std::vector<ModalitySpec> out;
  out.push_back(make("goes16_abi", ModalityKind::Geo, 10, 0.6));
  out.back().sub_satellite_lon = -75.2;
  out.push_back(make("goes18_abi", ModalityKind::Geo, 10, 0.6));
  out.back().sub_satellite_lon = -137.2;
  out.push_back(make("gk2a_ami", ModalityKind::Geo, 10, 0.6));
  out.back().sub_satellite_lon = 128.2;
  out.push_back(make("seviri", ModalityKind::Geo, 8, 0.6));
  out.back().sub_satellite_lon = 0.0;
  out.push_back(make("atms", ModalityKind::Leo, 22, 0.2));
  out.push_back(make("viirs", ModalityKind::Leo, 7, 0.1));
  out.push_back(make("srtm", ModalityKind::Static, 2, 1.0));
  out.back().channel_labels = {{"elevation", "m"}, {"land_sea_mask", "1"}};
  for (auto var : {ProfileVariable::Temperature, ProfileVariable::Humidity}) {
    auto m = make(var == ProfileVariable::Temperature ? "mirs_temperature" : "mirs_humidity",
                  ModalityKind::Profile, 37, 0.1);
    m.variable = var;
    // 37 standard isobaric levels, top to bottom.
    m.levels = {1,   2,   3,   5,   7,   10,  20,  30,  50,  70,  100, 125, 150,
                175, 200, 225, 250, 300, 350, 400, 450, 500, 550, 600, 650, 700,
                750, 775, 800, 825, 850, 875, 900, 925, 950, 975, 1000};
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace obsmae::core
