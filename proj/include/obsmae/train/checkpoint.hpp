#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsmae/core/json_io.hpp"
#include "obsmae/data/datastore.hpp"
#include "obsmae/model/model.hpp"

namespace obsmae::train {

namespace fs = std::filesystem;
using nlohmann::json;

/// Checkpoint directory: config.json (architecture, modalities, stages), index.json (name -> shape,
/// blob path, byte length) and one little-endian float32 blob per parameter under params/.
inline void checkpoint_save(const model::ModelParams& mp, const fs::path& dir) {
  fs::create_directories(dir / "params");
  fs::remove(dir / "index.json");
  json mods = json::array();
  for (const auto& m : mp.modalities) mods.push_back(core::to_json(m));
  json index = json::array();
  for (std::size_t i = 0; i < mp.values.size(); ++i) {
    const auto& v = mp.values[i];
    const std::string rel = "params/" + mp.values.name(i) + ".f32";
    std::vector<float> buf(v.data(), v.data() + v.size());
    data::detail::write_f32_le(dir / rel, buf);
    index.push_back({{"name", mp.values.name(i)},
                     {"shape", {v.rows(), v.cols()}},
                     {"file", rel},
                     {"bytes", buf.size() * sizeof(float)}});
  }
  core::write_json_file_atomic(dir / "config.json",
                               {{"model", mp.config.to_json()}, {"modalities", mods}, {"stages", mp.stages}});
  core::write_json_file_atomic(dir / "index.json", {{"format", "obsmae-checkpoint"}, {"version", 1}, {"params", index}});
}

namespace detail {

inline model::ModelParams load_values(const fs::path& dir, model::ModelParams mp) {
  const auto net = mp.network<float>();
  const json index = core::read_json_file(dir / "index.json");
  const auto& entries = index.at("params");
  require(entries.size() == net.layout().size(), "checkpoint " + dir.string() + " holds " +
                                                     std::to_string(entries.size()) + " parameters, model expects " +
                                                     std::to_string(net.layout().size()));
  mp.values = net.zero_params();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const auto name = e.at("name").get<std::string>();
    const auto& want = net.layout()[i];
    require(name == want.name, "checkpoint parameter " + std::to_string(i) + " is '" + name + "', model expects '" +
                                   want.name + "'");
    const auto shape = e.at("shape").get<std::vector<std::size_t>>();
    require(shape.size() == 2 && shape[0] == want.rows && shape[1] == want.cols,
            "checkpoint parameter '" + name + "' shape mismatch: stored (" + std::to_string(shape.at(0)) + "," +
                std::to_string(shape.at(1)) + "), model expects (" + std::to_string(want.rows) + "," +
                std::to_string(want.cols) + ")");
    const auto blob = dir / e.at("file").get<std::string>();
    const auto bytes = e.at("bytes").get<std::uint64_t>();
    require(bytes == want.rows * want.cols * sizeof(float),
            "checkpoint blob " + blob.string() + " declares " + std::to_string(bytes) + " bytes for '" + name + "'");
    const auto buf = data::detail::read_f32_le(blob, bytes);
    std::copy(buf.begin(), buf.end(), mp.values[i].data());
  }
  return mp;
}

}  // namespace detail

/// Loads a checkpoint using the architecture recorded inside it.
inline model::ModelParams checkpoint_load(const fs::path& dir) {
  if (!fs::exists(dir / "config.json")) throw IoError("checkpoint not found: " + (dir / "config.json").string());
  const json cfg = core::read_json_file(dir / "config.json");
  model::ModelParams mp;
  mp.config = model::ModelConfig::from_json(cfg.at("model"));
  for (const auto& m : cfg.at("modalities")) mp.modalities.push_back(core::modality_from_json(m));
  mp.stages = cfg.value("stages", std::vector<std::string>{});
  return detail::load_values(dir, std::move(mp));
}

/// Loads the blobs against an externally supplied architecture; shapes must agree.
inline model::ModelParams checkpoint_load(const fs::path& dir, const model::ModelConfig& config,
                                          const std::vector<core::ModalitySpec>& modalities) {
  if (!fs::exists(dir / "index.json")) throw IoError("checkpoint not found: " + (dir / "index.json").string());
  model::ModelParams mp;
  mp.config = config;
  mp.modalities = modalities;
  if (fs::exists(dir / "config.json"))
    mp.stages = core::read_json_file(dir / "config.json").value("stages", std::vector<std::string>{});
  return detail::load_values(dir, std::move(mp));
}

}  // namespace obsmae::train
