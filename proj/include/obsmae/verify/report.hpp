#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsmae/core/json_io.hpp"
#include "obsmae/verify/departures.hpp"
#include "obsmae/verify/sensitivity.hpp"
#include "obsmae/verify/significance.hpp"
#include "obsmae/verify/soundings.hpp"

namespace obsmae::verify {

namespace fs = std::filesystem;
using nlohmann::json;

/// Fixed six-decimal rendering; NaN becomes an empty field.
inline std::string num(double v) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  return s == "-0.000000" ? "0.000000" : s;
}

inline std::ofstream open_csv(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write report " + path.string());
  return out;
}

inline void write_departures_csv(const DepartureReport& rep, const fs::path& path) {
  auto out = open_csv(path);
  out << "modality,channel,label,units,analysis_bias,analysis_mae,analysis_count,background_bias,background_mae,"
         "background_count\n";
  for (const auto& r : rep.rows)
    out << r.modality << ',' << r.channel + 1 << ',' << r.label << ',' << r.units << ',' << num(r.analysis.bias) << ','
        << num(r.analysis.mae) << ',' << r.analysis.count << ',' << num(r.background.bias) << ','
        << num(r.background.mae) << ',' << r.background.count << '\n';
}

inline void write_sensitivity_csv(const SensitivityReport& rep, const fs::path& path) {
  auto out = open_csv(path);
  out << "mode,perturbed,target,surface,relative_mae,mae_perturbed,mae_baseline,cells,windows,undefined\n";
  for (const auto& r : rep.rows)
    out << to_string(r.mode) << ',' << r.perturbed << ',' << r.target << ',' << to_string(r.surface) << ','
        << num(r.relative_mae) << ',' << num(r.mae_perturbed) << ',' << num(r.mae_baseline) << ',' << r.cells << ','
        << r.windows << ',' << (r.undefined ? 1 : 0) << '\n';
}

/// Sounding table: one row per reported level then "Average". When significance results are
/// given, p-values of the temperature comparison are appended per level.
inline void write_sounding_csv(const std::vector<SoundingRow>& rows, const fs::path& path,
                               const std::vector<LevelSignificance>& sig = {}) {
  auto out = open_csv(path);
  out << "level_hpa,t_mae,t_bias,t_r,t_n,rh_mae,rh_bias,rh_r,rh_n";
  if (!sig.empty()) out << ",p_value,significant";
  out << '\n';
  for (const auto& r : rows) {
    const bool avg = std::isnan(r.level);
    char lev[32];
    std::snprintf(lev, sizeof lev, "%g", r.level);
    out << (avg ? std::string("Average") : std::string(lev)) << ',' << num(r.temperature.mae) << ','
        << num(r.temperature.bias) << ',' << num(r.temperature.r) << ',' << r.temperature.n << ',';
    if (r.has_rh)
      out << num(r.rh.mae) << ',' << num(r.rh.bias) << ',' << num(r.rh.r) << ',' << r.rh.n;
    else
      out << ",,,";
    if (!sig.empty()) {
      const LevelSignificance* s = nullptr;
      for (const auto& x : sig)
        if (!avg && std::abs(x.level - r.level) <= 1e-6 * r.level) s = &x;
      out << ',' << (s ? num(s->p_value) : "") << ',' << (s ? (s->significant ? "1" : "0") : "");
    }
    out << '\n';
  }
}

inline void write_hourly_csv(const std::vector<double>& profile, const fs::path& path) {
  auto out = open_csv(path);
  out << "hour_offset,mae\n";
  for (std::size_t h = 0; h < profile.size(); ++h) out << h << ',' << num(profile[h]) << '\n';
}

inline json to_json(const DepartureReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"modality", r.modality},
                    {"channel", r.channel + 1},
                    {"label", r.label},
                    {"units", r.units},
                    {"analysis", {{"bias", r.analysis.bias}, {"mae", r.analysis.mae}, {"count", r.analysis.count}}},
                    {"background",
                     {{"bias", r.background.bias}, {"mae", r.background.mae}, {"count", r.background.count}}}});
  return {{"rows", rows}, {"warnings", rep.warnings}};
}

inline json to_json(const SensitivityReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"mode", to_string(r.mode)},
                    {"perturbed", r.perturbed},
                    {"target", r.target},
                    {"surface", to_string(r.surface)},
                    {"relative_mae", r.undefined ? json(nullptr) : json(r.relative_mae)},
                    {"mae_perturbed", r.mae_perturbed},
                    {"mae_baseline", r.mae_baseline},
                    {"cells", r.cells},
                    {"windows", r.windows},
                    {"undefined", r.undefined}});
  return {{"rows", rows}, {"notes", rep.notes}};
}

}  // namespace obsmae::verify
