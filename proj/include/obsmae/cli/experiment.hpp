#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsmae/core/json_io.hpp"
#include "obsmae/core/random.hpp"
#include "obsmae/model/config.hpp"
#include "obsmae/synth/pipeline.hpp"
#include "obsmae/train/stage.hpp"

#ifndef OBSMAE_GIT_REVISION
#define OBSMAE_GIT_REVISION "unknown"
#endif

namespace obsmae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// One experiment file: sections "synth", "model", "stages" (keyed by stage id), "eval",
/// "verify", plus the top-level "validation_fraction". Every key can be overridden with
/// --set section.key=value.
class Experiment {
 public:
  Experiment() : doc_(json::object()) {}
  explicit Experiment(json doc) : doc_(std::move(doc)) {
    require(doc_.is_object(), "config: top level must be a JSON object");
  }

  static Experiment load(const fs::path& path) {
    if (path.empty()) return Experiment();
    return Experiment(core::read_json_file(path));
  }

  /// "a.b.c=value"; the value is parsed as JSON when possible, otherwise taken as a string.
  void set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string::npos && eq > 0, "--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json* node = &doc_;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      require(!part.empty(), "--set: empty path component in '" + key + "'");
      if (!node->is_object()) *node = json::object();
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    *node = std::move(value);
  }

  void set_if(const std::string& key, const std::optional<json>& v) {
    if (v) set(key + "=" + v->dump());
  }

  const json& doc() const { return doc_; }

  json section(const std::string& name) const {
    return doc_.contains(name) ? doc_.at(name) : json::object();
  }

  synth::SynthConfig synth() const {
    const auto s = section("synth");
    require(s.contains("grid") && s.contains("modalities"), "config: the synth section needs grid and modalities");
    return synth::SynthConfig::from_json(s);
  }

  model::ModelConfig model() const { return model::ModelConfig::from_json(section("model")); }

  double validation_fraction() const { return doc_.value("validation_fraction", 0.0); }

  train::TrainStage stage(train::StageId id) const {
    const auto all = section("stages");
    json j = all.contains(train::to_string(id)) ? all.at(train::to_string(id)) : json::object();
    if (!j.contains("validation_fraction")) j["validation_fraction"] = validation_fraction();
    return train::TrainStage::from_json(j, id);
  }

  std::size_t windows(const std::string& sec, std::size_t fallback) const {
    return section(sec).value("windows", fallback);
  }
  std::uint64_t seed(const std::string& sec) const { return section(sec).value("seed", std::uint64_t{0}); }
  double min_valid_fraction(const std::string& sec) const { return section(sec).value("min_valid_fraction", 0.05); }

 private:
  json doc_;
};

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Path of `p` as seen from `base`, so manifests do not depend on where a run tree lives.
inline std::string relative_to(const fs::path& p, const fs::path& base) {
  if (p.empty()) return "";
  return fs::weakly_canonical(fs::absolute(p)).lexically_relative(fs::weakly_canonical(fs::absolute(base))).generic_string();
}

/// run_manifest.json written next to every command's outputs. Holds everything needed to repeat
/// the run and nothing that changes between identical runs (no timestamps, no absolute paths).
struct RunRecord {
  std::string command;
  json config = json::object();
  json options = json::object();
  json seeds = json::object();
  std::map<std::string, fs::path> inputs, outputs;
  std::size_t workers = 1;

  json to_json(const fs::path& dir) const {
    json in = json::object(), out = json::object();
    for (const auto& [k, v] : inputs) in[k] = relative_to(v, dir);
    for (const auto& [k, v] : outputs) out[k] = relative_to(v, dir);
    return {{"command", command},
            {"config", config},
            {"config_hash", hex64(core::fnv1a(config.dump()))},
            {"options", options},
            {"seeds", seeds},
            {"git_revision", OBSMAE_GIT_REVISION},
            {"workers", workers},
            {"inputs", in},
            {"outputs", out}};
  }

  fs::path write(const fs::path& dir) const {
    fs::create_directories(dir);
    const auto path = dir / "run_manifest.json";
    core::write_json_file_atomic(path, to_json(dir));
    return path;
  }
};

}  // namespace obsmae::cli
