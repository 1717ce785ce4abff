#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "obsmae/core/cube.hpp"
#include "obsmae/core/error.hpp"
#include "obsmae/core/grid.hpp"
#include "obsmae/core/json_io.hpp"
#include "obsmae/core/modality.hpp"

namespace obsmae::data {

namespace fs = std::filesystem;
using core::GridSpec;
using core::Hour;
using core::ModalitySpec;
using core::ObservationCube;
using nlohmann::json;

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";

/// One chunk file: a modality's full grid over [start, start + frames).
struct ChunkEntry {
  std::string modality;
  Hour start = 0;
  std::size_t frames = 0;
  std::string path;     // relative to the dataset root
  std::string sidecar;  // relative to the dataset root
  std::uint64_t bytes = 0;
};

struct DatasetManifest {
  GridSpec grid;
  std::vector<ModalitySpec> modalities;
  Hour start_hour = 0;
  Hour end_hour = 0;  // inclusive
  std::size_t chunk_hours = 24;
  std::vector<ChunkEntry> files;

  const ModalitySpec& modality(const std::string& name) const {
    for (const auto& m : modalities)
      if (m.name == name) return m;
    throw Error("manifest has no modality '" + name + "'");
  }

  json to_json() const {
    json mods = json::array();
    for (const auto& m : modalities) mods.push_back(core::to_json(m));
    json files_j = json::array();
    for (const auto& f : files)
      files_j.push_back({{"modality", f.modality},
                         {"start_hour", f.start},
                         {"frames", f.frames},
                         {"path", f.path},
                         {"sidecar", f.sidecar},
                         {"bytes", f.bytes}});
    return {{"format", "obsmae-datastore"},
            {"version", kFormatVersion},
            {"grid", core::to_json(grid)},
            {"modalities", mods},
            {"time_range", {{"start_hour", start_hour}, {"end_hour", end_hour}}},
            {"chunking", {{"hours", chunk_hours}}},
            {"missing_sentinel", "NaN"},
            {"files", files_j}};
  }

  static DatasetManifest from_json(const json& j) {
    if (j.value("format", std::string{}) != "obsmae-datastore") throw Error("not an obsmae datastore manifest");
    if (j.value("version", 0) != kFormatVersion) throw Error("unsupported datastore version");
    DatasetManifest m;
    m.grid = core::grid_from_json(j.at("grid"));
    for (const auto& mj : j.at("modalities")) m.modalities.push_back(core::modality_from_json(mj));
    m.start_hour = j.at("time_range").at("start_hour").get<Hour>();
    m.end_hour = j.at("time_range").at("end_hour").get<Hour>();
    m.chunk_hours = j.at("chunking").at("hours").get<std::size_t>();
    for (const auto& f : j.at("files"))
      m.files.push_back({f.at("modality").get<std::string>(), f.at("start_hour").get<Hour>(),
                         f.at("frames").get<std::size_t>(), f.at("path").get<std::string>(),
                         f.at("sidecar").get<std::string>(), f.at("bytes").get<std::uint64_t>()});
    return m;
  }
};

namespace detail {

inline void write_f32_le(const fs::path& path, const std::vector<float>& v) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  if constexpr (std::endian::native == std::endian::little) {
    f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  } else {
    for (float x : v) {
      std::uint32_t u;
      std::memcpy(&u, &x, 4);
      u = (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
      f.write(reinterpret_cast<const char*>(&u), 4);
    }
  }
  if (!f) throw IoError("short write to " + path.string());
}

inline std::vector<float> read_f32_le(const fs::path& path, std::uint64_t expected_bytes) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw IoError("missing chunk file " + path.string());
  if (size != expected_bytes)
    throw IoError("chunk file " + path.string() + " has " + std::to_string(size) + " bytes, manifest declares " +
                  std::to_string(expected_bytes));
  std::vector<float> v(size / sizeof(float));
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(size));
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& x : v) {
      std::uint32_t u;
      std::memcpy(&u, &x, 4);
      u = (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
      std::memcpy(&x, &u, 4);
    }
  }
  return v;
}

}  // namespace detail

/// Streams full-grid chunks to a dataset directory; the manifest appears only on finish().
class DatasetWriter {
 public:
  DatasetWriter(fs::path root, GridSpec grid, std::vector<ModalitySpec> modalities, std::size_t chunk_hours = 24)
      : root_(std::move(root)) {
    require(!modalities.empty(), "write_dataset: empty modality list");
    require(chunk_hours >= 1, "write_dataset: chunk_hours must be >= 1");
    grid.validate();
    for (const auto& m : modalities) m.validate();
    manifest_.grid = grid;
    manifest_.modalities = std::move(modalities);
    manifest_.chunk_hours = chunk_hours;
    fs::create_directories(root_);
    fs::remove(root_ / kManifestName);
  }

  /// Cube must cover the full grid; temporal cubes are split on chunk_hours boundaries.
  void write(const ObservationCube& cube) {
    const auto& spec = manifest_.modality(cube.modality());
    const auto& s = cube.shape();
    require(s.c == spec.channels, "write_dataset: " + spec.name + " channel count differs from spec");
    require(s.h == manifest_.grid.n_lat && s.w == manifest_.grid.n_lon,
            "write_dataset: " + spec.name + " cube does not span the grid");
    fs::create_directories(root_ / spec.name);
    const std::size_t plane = s.h * s.w;
    std::size_t t = 0;
    while (t < s.t) {
      const Hour h0 = cube.times()[t];
      std::size_t n = 1;
      if (spec.temporal) {
        const auto offset = static_cast<std::size_t>(((h0 % static_cast<Hour>(manifest_.chunk_hours)) +
                                                      static_cast<Hour>(manifest_.chunk_hours)) %
                                                     static_cast<Hour>(manifest_.chunk_hours));
        n = std::min(manifest_.chunk_hours - offset, s.t - t);
      }
      std::vector<float> buf(s.c * n * plane);
      for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t src = cube.index(c, t + k, 0, 0), dst = (c * n + k) * plane;
          for (std::size_t i = 0; i < plane; ++i)
            buf[dst + i] = cube.valid_mask()[src + i] ? cube.values()[src + i] : core::kMissing;
        }
      const std::string stem = spec.name + "/" + (spec.temporal ? "h" + std::to_string(h0) : std::string("static"));
      ChunkEntry e{spec.name, h0, n, stem + ".f32", stem + ".json", buf.size() * sizeof(float)};
      detail::write_f32_le(root_ / e.path, buf);
      core::write_json_file_atomic(root_ / e.sidecar, {{"dims", {s.c, n, s.h, s.w}},
                                                       {"dim_names", {"channel", "time", "lat", "lon"}},
                                                       {"order", "C"},
                                                       {"dtype", "float32-le"},
                                                       {"missing_sentinel", "NaN"},
                                                       {"start_hour", h0}});
      if (spec.temporal) {
        if (!any_temporal_) {
          manifest_.start_hour = h0;
          manifest_.end_hour = h0 + static_cast<Hour>(n) - 1;
          any_temporal_ = true;
        } else {
          manifest_.start_hour = std::min(manifest_.start_hour, h0);
          manifest_.end_hour = std::max(manifest_.end_hour, h0 + static_cast<Hour>(n) - 1);
        }
      }
      manifest_.files.push_back(std::move(e));
      t += n;
    }
  }

  /// Writes manifest.json atomically and returns it.
  DatasetManifest finish() {
    std::sort(manifest_.files.begin(), manifest_.files.end(), [](const ChunkEntry& a, const ChunkEntry& b) {
      return std::tie(a.modality, a.start) < std::tie(b.modality, b.start);
    });
    core::write_json_file_atomic(root_ / kManifestName, manifest_.to_json());
    return manifest_;
  }

 private:
  fs::path root_;
  DatasetManifest manifest_;
  bool any_temporal_ = false;
};

inline DatasetManifest write_dataset(const std::vector<ObservationCube>& cubes, const fs::path& manifest_path,
                                     const GridSpec& grid, const std::vector<ModalitySpec>& modalities,
                                     std::size_t chunk_hours = 24) {
  require(!cubes.empty(), "write_dataset: no cubes");
  DatasetWriter w(manifest_path.parent_path(), grid, modalities, chunk_hours);
  for (const auto& c : cubes) w.write(c);
  return w.finish();
}

/// Window origin: first hour and the north-west cell of the spatial window.
struct WindowOrigin {
  Hour t0 = 0;
  std::size_t lat0 = 0;
  std::size_t lon0 = 0;
  bool operator==(const WindowOrigin&) const = default;
};

/// Co-registered cubes (manifest modality order) over one space-time window.
struct MultiModalSample {
  WindowOrigin origin;
  std::vector<ObservationCube> cubes;

  const ObservationCube& cube(const std::string& name) const {
    for (const auto& c : cubes)
      if (c.modality() == name) return c;
    throw Error("sample has no modality '" + name + "'");
  }
  ObservationCube& cube(const std::string& name) {
    for (auto& c : cubes)
      if (c.modality() == name) return c;
    throw Error("sample has no modality '" + name + "'");
  }
  double valid_fraction() const {
    std::size_t n = 0, total = 0;
    for (const auto& c : cubes) {
      n += c.valid_count();
      total += c.shape().size();
    }
    return total == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(total);
  }
};

/// Read-only handle over a dataset directory. Chunk reads are cached and thread-safe.
class Dataset {
 public:
  static Dataset open(const fs::path& manifest_path) {
    fs::path p = manifest_path;
    if (fs::is_directory(p)) p /= kManifestName;
    Dataset d;
    d.root_ = p.parent_path();
    d.manifest_ = DatasetManifest::from_json(core::read_json_file(p));
    for (const auto& f : d.manifest_.files) {
      std::error_code ec;
      const auto size = fs::file_size(d.root_ / f.path, ec);
      if (ec) throw IoError("dataset chunk missing: " + (d.root_ / f.path).string());
      if (size != f.bytes)
        throw IoError("dataset chunk " + (d.root_ / f.path).string() + " has " + std::to_string(size) +
                      " bytes, manifest declares " + std::to_string(f.bytes));
    }
    d.cache_ = std::make_shared<Cache>();
    return d;
  }

  const DatasetManifest& manifest() const { return manifest_; }
  const GridSpec& grid() const { return manifest_.grid; }
  const fs::path& root() const { return root_; }

  /// Region of one modality; longitude wraps, rows must lie inside the grid. Hours absent
  /// from storage come back invalid.
  ObservationCube read_region(const std::string& modality, Hour t0, std::size_t frames, std::size_t lat0,
                              std::size_t lon0, std::size_t h, std::size_t w) const {
    const auto& spec = manifest_.modality(modality);
    const auto& g = manifest_.grid;
    require(lat0 + h <= g.n_lat, "read_window: latitude window overflows the grid");
    const std::size_t T = spec.temporal ? frames : 1;
    const Hour first = spec.temporal ? t0 : static_cast<Hour>(0);
    ObservationCube out(modality, {spec.channels, T, h, w},
                        spec.temporal ? core::hour_range(t0, T) : std::vector<Hour>{static_cast<Hour>(0)});
    for (const auto& f : manifest_.files) {
      if (f.modality != modality) continue;
      const Hour lo = std::max(first, f.start);
      const Hour hi = spec.temporal ? std::min(first + static_cast<Hour>(T), f.start + static_cast<Hour>(f.frames))
                                    : lo + 1;
      if (lo >= hi) continue;
      const auto& buf = chunk(f);
      const std::size_t plane = g.n_lat * g.n_lon;
      for (std::size_t c = 0; c < spec.channels; ++c)
        for (Hour hr = lo; hr < hi; ++hr) {
          const auto k = static_cast<std::size_t>(hr - f.start);
          const auto t = static_cast<std::size_t>(hr - first);
          const float* src = buf.data() + (c * f.frames + k) * plane;
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
              const float v = src[(lat0 + y) * g.n_lon + g.wrap_col(static_cast<long long>(lon0 + x))];
              // Storage encodes missing cells as NaN; in memory only the mask is authoritative.
              if (!std::isnan(v)) out.set(c, t, y, x, v);
            }
        }
    }
    return out;
  }

  MultiModalSample read_window(Hour t0, std::size_t lat0, std::size_t lon0, std::size_t window_hours = 12,
                               const std::vector<std::string>& only = {}) const {
    require(t0 >= manifest_.start_hour && t0 + static_cast<Hour>(window_hours) - 1 <= manifest_.end_hour,
            "read_window: hours [" + std::to_string(t0) + ", " + std::to_string(t0 + static_cast<Hour>(window_hours)) +
                ") outside dataset time range");
    const auto& g = manifest_.grid;
    require(lat0 + g.window <= g.n_lat, "read_window: latitude window overflows the grid");
    MultiModalSample s;
    s.origin = {t0, lat0, lon0 % g.n_lon};
    for (const auto& m : manifest_.modalities) {
      if (!only.empty() && std::find(only.begin(), only.end(), m.name) == only.end()) continue;
      s.cubes.push_back(read_region(m.name, t0, window_hours, lat0, lon0 % g.n_lon, g.window, g.window));
    }
    return s;
  }

  /// Every stored cube of one modality over hours [t0, t1], full grid (for statistics).
  ObservationCube read_full(const std::string& modality, Hour t0, Hour t1) const {
    const auto& spec = manifest_.modality(modality);
    const auto frames = spec.temporal ? static_cast<std::size_t>(t1 - t0 + 1) : 1;
    return read_region(modality, t0, frames, 0, 0, grid().n_lat, grid().n_lon);
  }

 private:
  struct Cache {
    std::mutex mu;
    std::map<std::string, std::shared_ptr<const std::vector<float>>> chunks;
  };

  const std::vector<float>& chunk(const ChunkEntry& f) const {
    std::lock_guard<std::mutex> lock(cache_->mu);
    auto it = cache_->chunks.find(f.path);
    if (it == cache_->chunks.end())
      it = cache_->chunks
               .emplace(f.path, std::make_shared<const std::vector<float>>(detail::read_f32_le(root_ / f.path, f.bytes)))
               .first;
    return *it->second;
  }

  fs::path root_;
  DatasetManifest manifest_;
  std::shared_ptr<Cache> cache_;
};

}  // namespace obsmae::data
