#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsmae/cli/experiment.hpp"
#include "obsmae/data/sampler.hpp"
#include "obsmae/data/stats.hpp"
#include "obsmae/infer/infer.hpp"
#include "obsmae/synth/pipeline.hpp"
#include "obsmae/train/checkpoint.hpp"
#include "obsmae/train/evaluate.hpp"
#include "obsmae/train/stage.hpp"
#include "obsmae/verify/departures.hpp"
#include "obsmae/verify/hourly.hpp"
#include "obsmae/verify/report.hpp"
#include "obsmae/verify/sensitivity.hpp"
#include "obsmae/verify/significance.hpp"
#include "obsmae/verify/soundings.hpp"

namespace obsmae::cli {

using core::Hour;
using core::ObservationCube;

inline constexpr const char* kStatsName = "stats.json";

struct Common {
  fs::path config;
  std::vector<std::string> sets;
  std::size_t workers = 1;
};

inline Experiment load_experiment(const Common& c) {
  auto e = Experiment::load(c.config);
  for (const auto& s : c.sets) e.set(s);
  return e;
}

inline RunRecord make_record(const std::string& command, const Common& c, const Experiment& e) {
  RunRecord r;
  r.command = command;
  r.config = e.doc();
  r.workers = c.workers;
  if (!c.config.empty()) r.inputs["config"] = c.config;
  return r;
}

struct LoadedModel {
  model::ModelParams params;
  core::NormalizationStats stats;
};

/// Checkpoint plus the normalisation statistics saved beside it.
inline LoadedModel load_model(const fs::path& ckpt) {
  require(!ckpt.empty(), "a checkpoint is required (--ckpt)");
  LoadedModel m;
  m.params = train::checkpoint_load(ckpt);
  const auto sp = ckpt / kStatsName;
  if (!fs::exists(sp)) throw IoError("checkpoint has no normalisation statistics: " + sp.string());
  m.stats = core::NormalizationStats::load(sp);
  return m;
}

inline std::vector<std::string> model_modalities(const model::ModelParams& mp) {
  std::vector<std::string> out;
  for (const auto& m : mp.modalities) out.push_back(m.name);
  return out;
}

/// Statistics over the hours covered by training windows.
inline core::NormalizationStats training_stats(const data::Dataset& ds, std::size_t window_hours,
                                               double validation_fraction) {
  const auto split = train::split_by_time(ds.manifest(), window_hours, validation_fraction);
  return data::compute_dataset_stats(ds, split.train_first, split.train_last + static_cast<Hour>(window_hours) - 1);
}

/// Evaluation windows: the validation range when one is configured, else the whole dataset.
inline std::vector<data::MultiModalSample> evaluation_windows(const data::Dataset& ds, const model::ModelParams& mp,
                                                              const Experiment& e, const std::string& section,
                                                              std::size_t default_windows) {
  data::SamplerOptions opt;
  opt.window_hours = mp.config.window_hours;
  opt.min_valid_fraction = e.min_valid_fraction(section);
  opt.modalities = model_modalities(mp);
  const auto split = train::split_by_time(ds.manifest(), mp.config.window_hours, e.validation_fraction());
  if (split.has_validation) {
    opt.first_start = split.val_first;
    opt.last_start = split.val_last;
  }
  auto rng = core::make_rng(e.seed(section), {7});
  return data::sample_windows(ds, e.windows(section, default_windows), rng, opt);
}

// --- synth ---------------------------------------------------------------------------------

struct SynthArgs : Common {
  fs::path out;
  std::optional<std::size_t> days, hours;
  std::optional<std::uint64_t> seed;
};

inline fs::path cmd_synth(const SynthArgs& a) {
  require(!a.out.empty(), "synth: --out is required");
  auto e = load_experiment(a);
  if (a.days) e.set("synth.hours=" + std::to_string(24 * *a.days));
  if (a.hours) e.set("synth.hours=" + std::to_string(*a.hours));
  if (a.seed) e.set("synth.seed=" + std::to_string(*a.seed));
  if (e.section("synth").contains("days") && (a.days || a.hours)) {
    json s = e.section("synth");
    s.erase("days");
    e.set("synth=" + s.dump());
  }
  const auto cfg = e.synth();
  const auto res = synth::synthesize(cfg, a.out);
  auto r = make_record("synth", a, e);
  r.seeds["synth"] = cfg.seed;
  r.outputs["manifest"] = res.manifest;
  if (!res.truth_manifest.empty()) r.outputs["truth"] = res.truth_manifest;
  if (!res.soundings.empty()) r.outputs["soundings"] = res.soundings;
  r.write(a.out);
  return res.manifest;
}

// --- stats ---------------------------------------------------------------------------------

struct StatsArgs : Common {
  fs::path data, out;
};

inline fs::path cmd_stats(const StatsArgs& a) {
  require(!a.out.empty(), "stats: --out is required");
  const auto e = load_experiment(a);
  const auto ds = data::Dataset::open(a.data);
  const auto st = training_stats(ds, e.model().window_hours, e.validation_fraction());
  fs::create_directories(a.out);
  const auto path = a.out / kStatsName;
  st.save(path);
  auto r = make_record("stats", a, e);
  r.inputs["data"] = a.data;
  r.outputs["stats"] = path;
  r.write(a.out);
  return path;
}

// --- train ---------------------------------------------------------------------------------

struct TrainArgs : Common {
  std::string stage;
  fs::path data, stats, ckpt_in, ckpt_out;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
};

struct TrainSummary {
  fs::path checkpoint;
  std::size_t steps = 0;
  double first_loss = 0.0, last_loss = 0.0;
  std::optional<train::EvalResult> validation;
};

inline TrainSummary cmd_train(const TrainArgs& a) {
  require(!a.ckpt_out.empty(), "train: --ckpt-out is required");
  const auto id = train::stage_id_from(a.stage);
  auto e = load_experiment(a);
  const std::string key = "stages." + train::to_string(id);
  if (a.steps) e.set(key + ".steps=" + std::to_string(*a.steps));
  if (a.seed) e.set(key + ".seed=" + std::to_string(*a.seed));
  const auto st = e.stage(id);
  const auto ds = data::Dataset::open(a.data);

  model::ModelParams mp;
  if (!a.ckpt_in.empty()) {
    mp = train::checkpoint_load(a.ckpt_in);
  } else {
    require(id == train::StageId::TokenizerPretrain,
            train::to_string(id) + " needs --ckpt-in (a checkpoint from the previous stage)");
    mp = model::ModelParams::initialise(e.model(), ds.manifest().modalities);
  }

  core::NormalizationStats stats;
  if (!a.stats.empty())
    stats = core::NormalizationStats::load(a.stats);
  else if (!a.ckpt_in.empty() && fs::exists(a.ckpt_in / kStatsName))
    stats = core::NormalizationStats::load(a.ckpt_in / kStatsName);
  else
    stats = training_stats(ds, mp.config.window_hours, st.validation_fraction);

  fs::create_directories(a.ckpt_out);
  train::StageOptions so;
  so.workers = a.workers;
  so.metrics_path = a.ckpt_out / "metrics.jsonl";
  so.checkpoint_dir = a.ckpt_out;
  const auto res = train::run_stage(st, ds, stats, std::move(mp), so);
  stats.save(a.ckpt_out / kStatsName);

  TrainSummary sum;
  sum.checkpoint = a.ckpt_out;
  sum.steps = res.metrics.size();
  if (!res.metrics.empty()) {
    sum.first_loss = res.metrics.front().loss;
    sum.last_loss = res.metrics.back().loss;
  }
  auto r = make_record("train", a, e);
  r.options = {{"stage", train::to_string(id)}, {"stage_config", st.to_json()}};
  r.seeds["stage"] = st.seed;
  r.seeds["model_init"] = res.params.config.init_seed;
  r.inputs["data"] = a.data;
  if (!a.ckpt_in.empty()) r.inputs["ckpt_in"] = a.ckpt_in;
  if (!a.stats.empty()) r.inputs["stats"] = a.stats;
  r.outputs["checkpoint"] = a.ckpt_out;
  r.outputs["metrics"] = so.metrics_path;

  if (id != train::StageId::TokenizerPretrain && st.validation_fraction > 0.0) {
    train::EvalOptions eo;
    eo.windows = e.windows("eval", 32);
    eo.seed = e.seed("eval");
    eo.min_valid_fraction = e.min_valid_fraction("eval");
    eo.modalities = st.resolve(res.params.modalities);
    sum.validation = train::evaluate_validation(res.params, ds, stats, st.validation_fraction, eo);
    const auto& v = *sum.validation;
    core::write_json_file_atomic(a.ckpt_out / "eval.json", {{"model_mse", v.model_mse},
                                                            {"climatology_mse", v.climatology_mse},
                                                            {"skill_ratio", v.skill_ratio()},
                                                            {"windows", v.windows},
                                                            {"cells", v.cells}});
    r.seeds["eval"] = eo.seed;
    r.outputs["eval"] = a.ckpt_out / "eval.json";
  }
  r.write(a.ckpt_out);
  return sum;
}

// --- infer ---------------------------------------------------------------------------------

struct InferArgs : Common {
  std::string mode = "gapfill";
  fs::path ckpt, data, out;
  Hour t0 = 0;
  std::optional<Hour> t1;
  std::size_t lat0 = 0, lon0 = 0;
  std::vector<std::string> visible;
  int horizon = 1;
  std::size_t stride = 0;
};

/// The grid of one inference window, so window outputs are stored as ordinary datasets.
inline core::GridSpec window_grid(const core::GridSpec& g, std::size_t lat0, std::size_t lon0) {
  auto w = g;
  w.n_lat = g.window;
  w.n_lon = g.window;
  w.lat_origin = g.lat_of(lat0);
  w.lon_origin = g.lon_of(lon0 % g.n_lon);
  return w;
}

inline std::vector<core::ModalitySpec> specs_for(const model::ModelParams& mp, const std::vector<ObservationCube>& cubes) {
  std::vector<core::ModalitySpec> out;
  for (const auto& c : cubes)
    for (const auto& m : mp.modalities)
      if (m.name == c.modality()) {
        auto s = m;
        s.coverage_target = 1.0;
        out.push_back(s);
      }
  return out;
}

inline fs::path cmd_infer(const InferArgs& a) {
  require(!a.out.empty(), "infer: --out is required");
  const auto e = load_experiment(a);
  const auto lm = load_model(a.ckpt);
  const auto ds = data::Dataset::open(a.data);
  const auto& mp = lm.params;
  auto r = make_record("infer", a, e);
  r.options = {{"mode", a.mode}, {"t0", a.t0}, {"lat0", a.lat0}, {"lon0", a.lon0}, {"visible", a.visible},
               {"horizon", a.horizon}, {"stride", a.stride}};
  if (a.t1) r.options["t1"] = *a.t1;

  core::GridSpec grid;
  std::vector<ObservationCube> cubes;
  std::size_t chunk = mp.config.window_hours;
  if (a.mode == "gapfill" || a.mode == "background") {
    const auto sample = ds.read_window(a.t0, a.lat0, a.lon0, mp.config.window_hours, model_modalities(mp));
    grid = window_grid(ds.grid(), a.lat0, a.lon0);
    if (a.mode == "gapfill") {
      cubes = infer::gap_fill(sample, mp, lm.stats, a.visible.empty() ? model_modalities(mp) : a.visible);
    } else {
      cubes = infer::background_forecast(sample, mp, lm.stats, a.horizon);
      chunk = 1;
    }
  } else if (a.mode == "mosaic") {
    infer::MosaicOptions mo;
    mo.stride = a.stride;
    mo.visible = a.visible;
    mo.workers = a.workers;
    grid = ds.grid();
    const Hour last = a.t1.value_or(a.t0);
    require(last >= a.t0, "infer: --t1 must not precede --t0");
    std::vector<std::vector<ObservationCube>> blocks;
    for (Hour t = a.t0; t <= last; t += static_cast<Hour>(mp.config.window_hours))
      blocks.push_back(infer::mosaic_timeblock(ds, mp, lm.stats, t, mo));
    // Each block is written as its own chunk.
    grid.validate();
    data::DatasetWriter w(a.out, grid, specs_for(mp, blocks.front()), chunk);
    for (const auto& b : blocks)
      for (const auto& c : b) w.write(c);
    w.finish();
    r.inputs["data"] = a.data;
    r.inputs["checkpoint"] = a.ckpt;
    r.outputs["manifest"] = a.out / data::kManifestName;
    r.write(a.out);
    return a.out / data::kManifestName;
  } else {
    throw Error("infer: unknown mode '" + a.mode + "' (gapfill, background, mosaic)");
  }
  data::DatasetWriter w(a.out, grid, specs_for(mp, cubes), chunk);
  for (const auto& c : cubes) w.write(c);
  w.finish();
  r.inputs["data"] = a.data;
  r.inputs["checkpoint"] = a.ckpt;
  r.outputs["manifest"] = a.out / data::kManifestName;
  r.write(a.out);
  return a.out / data::kManifestName;
}

// --- background departures -----------------------------------------------------------------

struct EvalArgs : Common {
  fs::path ckpt, data, out;
  std::optional<std::size_t> windows;
  std::optional<std::uint64_t> seed;
};

inline ObservationCube last_frame(const ObservationCube& c) {
  const auto& s = c.shape();
  ObservationCube out(c.modality(), {s.c, 1, s.h, s.w}, {c.times().back()});
  for (std::size_t ch = 0; ch < s.c; ++ch)
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x)
        if (c.valid(ch, s.t - 1, y, x)) out.set(ch, 0, y, x, c.value(ch, s.t - 1, y, x));
  return out;
}

inline verify::DepartureReport cmd_background(const EvalArgs& a) {
  require(!a.out.empty(), "background: --out is required");
  auto e = load_experiment(a);
  if (a.windows) e.set("background.windows=" + std::to_string(*a.windows));
  if (a.seed) e.set("background.seed=" + std::to_string(*a.seed));
  const auto lm = load_model(a.ckpt);
  const auto ds = data::Dataset::open(a.data);
  const auto windows = evaluation_windows(ds, lm.params, e, "background", 16);
  verify::DepartureAccumulator ana, bkg;
  for (const auto& w : windows) {
    const auto h0 = infer::background_forecast(w, lm.params, lm.stats, 0);
    const auto h1 = infer::background_forecast(w, lm.params, lm.stats, 1);
    for (std::size_t i = 0; i < h0.size(); ++i) {
      const auto obs = last_frame(w.cube(h0[i].modality()));
      ana.add(h0[i], obs);
      bkg.add(h1[i], obs);
    }
  }
  const auto rep = verify::departure_report(ana, bkg, lm.params.modalities);
  verify::write_departures_csv(rep, a.out / "departures.csv");
  core::write_json_file_atomic(a.out / "departures.json", verify::to_json(rep));
  auto r = make_record("background", a, e);
  r.seeds["windows"] = e.seed("background");
  r.options = {{"windows", windows.size()}};
  r.inputs["data"] = a.data;
  r.inputs["checkpoint"] = a.ckpt;
  r.outputs["csv"] = a.out / "departures.csv";
  r.outputs["json"] = a.out / "departures.json";
  r.write(a.out);
  return rep;
}

// --- sensitivity ---------------------------------------------------------------------------

struct SensitivityArgs : EvalArgs {
  std::string mode = "drop_one";
};

inline verify::SensitivityReport cmd_sensitivity(const SensitivityArgs& a) {
  require(!a.out.empty(), "sensitivity: --out is required");
  auto e = load_experiment(a);
  if (a.windows) e.set("sensitivity.windows=" + std::to_string(*a.windows));
  if (a.seed) e.set("sensitivity.seed=" + std::to_string(*a.seed));
  const auto mode = verify::sensitivity_mode_from(a.mode);
  const auto lm = load_model(a.ckpt);
  const auto ds = data::Dataset::open(a.data);
  const auto windows = evaluation_windows(ds, lm.params, e, "sensitivity", 16);
  const auto rep = verify::sensitivity(windows, lm.params, lm.stats, mode);
  verify::write_sensitivity_csv(rep, a.out / "sensitivity.csv");
  core::write_json_file_atomic(a.out / "sensitivity.json", verify::to_json(rep));
  auto r = make_record("sensitivity", a, e);
  r.seeds["windows"] = e.seed("sensitivity");
  r.options = {{"mode", a.mode}, {"windows", windows.size()}};
  r.inputs["data"] = a.data;
  r.inputs["checkpoint"] = a.ckpt;
  r.outputs["csv"] = a.out / "sensitivity.csv";
  r.outputs["json"] = a.out / "sensitivity.json";
  r.write(a.out);
  return rep;
}

// --- verify --------------------------------------------------------------------------------

struct VerifyArgs : Common {
  fs::path ckpt, data, out, soundings, reference, baseline_ckpt;
  std::optional<Hour> t0, t1;
  std::size_t stride = 0;
};

struct VerifySummary {
  std::vector<Hour> blocks;
  std::map<std::string, std::vector<double>> hourly;  // per temporal modality
  std::vector<verify::SoundingRow> soundings;
  std::vector<verify::LevelSignificance> significance;
  std::string reference_kind;
};

/// Block starts aligned to the model window that fit inside the dataset (and the optional range).
inline std::vector<Hour> block_starts(const data::DatasetManifest& m, std::size_t window_hours, std::optional<Hour> t0,
                                      std::optional<Hour> t1) {
  const auto W = static_cast<Hour>(window_hours);
  Hour first = t0.value_or(m.start_hour);
  first = ((first % W) + W) % W == 0 ? first : first + (W - ((first % W) + W) % W);
  const Hour last = std::min(t1.value_or(m.end_hour - W + 1), m.end_hour - W + 1);
  std::vector<Hour> out;
  for (Hour t = first; t <= last; t += W)
    if (t >= m.start_hour) out.push_back(t);
  require(!out.empty(), "verify: no complete " + std::to_string(W) + "-hour block inside the requested range");
  return out;
}

/// Concatenates consecutive single-modality blocks along time.
inline ObservationCube concat_time(const std::vector<ObservationCube>& blocks) {
  const auto& s = blocks.front().shape();
  std::size_t T = 0;
  for (const auto& b : blocks) T += b.shape().t;
  ObservationCube out(blocks.front().modality(), {s.c, T, s.h, s.w},
                      core::hour_range(blocks.front().times().front(), T));
  std::size_t off = 0;
  for (const auto& b : blocks) {
    require(b.times().front() == blocks.front().times().front() + static_cast<Hour>(off),
            "verify: mosaic blocks are not consecutive");
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t t = 0; t < b.shape().t; ++t)
        for (std::size_t y = 0; y < s.h; ++y)
          for (std::size_t x = 0; x < s.w; ++x)
            if (b.valid(c, t, y, x)) out.set(c, off + t, y, x, b.value(c, t, y, x));
    off += b.shape().t;
  }
  return out;
}

namespace detail {

struct ProfileMosaics {
  std::optional<ObservationCube> temperature, humidity;
  std::vector<double> levels;
};

inline std::map<std::string, std::vector<ObservationCube>> mosaics_by_modality(const data::Dataset& ds,
                                                                               const LoadedModel& lm,
                                                                               const std::vector<Hour>& blocks,
                                                                               const infer::MosaicOptions& mo) {
  std::map<std::string, std::vector<ObservationCube>> out;
  for (Hour t : blocks)
    for (auto& c : infer::mosaic_timeblock(ds, lm.params, lm.stats, t, mo)) out[c.modality()].push_back(std::move(c));
  return out;
}

inline ProfileMosaics profile_mosaics(const model::ModelParams& mp,
                                      const std::map<std::string, std::vector<ObservationCube>>& mosaics) {
  ProfileMosaics p;
  const core::ModalitySpec* t = nullptr;
  for (const auto& m : mp.modalities)
    if (m.kind == core::ModalityKind::Profile && m.variable == core::ProfileVariable::Temperature) {
      t = &m;
      break;
    }
  if (!t) return p;
  p.levels = t->levels;
  p.temperature = concat_time(mosaics.at(t->name));
  for (const auto& m : mp.modalities)
    if (m.kind == core::ModalityKind::Profile && m.variable == core::ProfileVariable::Humidity &&
        m.levels == t->levels) {
      p.humidity = concat_time(mosaics.at(m.name));
      break;
    }
  return p;
}

inline std::vector<verify::SoundingMatch> match(const std::vector<verify::Sounding>& snd, const ProfileMosaics& p,
                                                const core::GridSpec& g) {
  verify::ProfileField f{&*p.temperature, p.humidity ? &*p.humidity : nullptr, p.levels};
  return verify::match_soundings(snd, f, g, 1);
}

}  // namespace detail

inline VerifySummary cmd_verify(const VerifyArgs& a) {
  require(!a.out.empty(), "verify: --out is required");
  const auto e = load_experiment(a);
  const auto lm = load_model(a.ckpt);
  const auto ds = data::Dataset::open(a.data);
  VerifySummary sum;
  sum.blocks = block_starts(ds.manifest(), lm.params.config.window_hours, a.t0, a.t1);
  infer::MosaicOptions mo;
  mo.stride = a.stride;
  mo.workers = a.workers;
  const auto mosaics = detail::mosaics_by_modality(ds, lm, sum.blocks, mo);
  auto r = make_record("verify", a, e);
  r.inputs["data"] = a.data;
  r.inputs["checkpoint"] = a.ckpt;
  json summary = {{"blocks", sum.blocks}};

  // Hourly error profile against the noise-free truth when present, else against observations.
  fs::path ref_path = a.reference;
  if (ref_path.empty() && fs::exists(ds.root() / "truth" / data::kManifestName)) ref_path = ds.root() / "truth";
  std::optional<data::Dataset> truth;
  if (!ref_path.empty()) {
    truth = data::Dataset::open(ref_path);
    r.inputs["reference"] = ref_path;
  }
  sum.reference_kind = truth ? "truth" : "observations";
  const data::Dataset& ref = truth ? *truth : ds;
  json hourly = json::object();
  for (const auto& [name, blocks] : mosaics) {
    std::vector<ObservationCube> refs;
    for (Hour t : sum.blocks)
      refs.push_back(ref.read_full(name, t, t + static_cast<Hour>(lm.params.config.window_hours) - 1));
    sum.hourly[name] = verify::hourly_error_profile(blocks, refs, lm.params.config.window_hours);
    const auto path = a.out / ("hourly_" + name + ".csv");
    verify::write_hourly_csv(sum.hourly[name], path);
    r.outputs["hourly_" + name] = path;
    hourly[name] = sum.hourly[name];
  }
  summary["hourly_reference"] = sum.reference_kind;
  summary["hourly"] = hourly;

  fs::path snd_path = a.soundings;
  if (snd_path.empty() && fs::exists(ds.root() / "soundings.csv")) snd_path = ds.root() / "soundings.csv";
  const auto prof = detail::profile_mosaics(lm.params, mosaics);
  if (!snd_path.empty()) {
    require(prof.temperature.has_value(), "verify: soundings need a PROFILE temperature modality in the model");
    r.inputs["soundings"] = snd_path;
    const auto snd = verify::load_soundings(snd_path);
    const auto matches = detail::match(snd, prof, ds.grid());
    sum.soundings = verify::sounding_stats(matches);
    if (!a.baseline_ckpt.empty()) {
      const auto base = load_model(a.baseline_ckpt);
      r.inputs["baseline_checkpoint"] = a.baseline_ckpt;
      const auto bm = detail::mosaics_by_modality(ds, base, sum.blocks, mo);
      const auto bprof = detail::profile_mosaics(base.params, bm);
      require(bprof.temperature.has_value(), "verify: the baseline model has no PROFILE temperature modality");
      sum.significance = verify::significance(verify::keyed_errors(matches), verify::keyed_errors(detail::match(snd, bprof, ds.grid())),
                                              e.section("verify").value("alpha", 0.05));
    }
    verify::write_sounding_csv(sum.soundings, a.out / "soundings.csv", sum.significance);
    r.outputs["soundings"] = a.out / "soundings.csv";
    summary["sounding_matches"] = matches.size();
  }
  core::write_json_file_atomic(a.out / "verify.json", summary);
  r.outputs["summary"] = a.out / "verify.json";
  r.options = {{"stride", a.stride}};
  r.write(a.out);
  return sum;
}

// --- report --------------------------------------------------------------------------------

struct ReportArgs {
  std::vector<fs::path> inputs;
  fs::path out;
};

inline std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw IoError("cannot open " + p.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

/// Collects the tables found in run directories into report.json and a plain-text report.md.
inline fs::path cmd_report(const ReportArgs& a) {
  require(!a.inputs.empty(), "report: at least one --in directory is required");
  require(!a.out.empty(), "report: --out is required");
  fs::create_directories(a.out);
  json all = json::object();
  std::ostringstream md;
  md << "# Report\n";
  for (const auto& dir : a.inputs) {
    if (!fs::is_directory(dir)) throw IoError("report: not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && (e.path().extension() == ".csv" || e.path().filename() == "eval.json"))
        files.push_back(e.path());
    std::sort(files.begin(), files.end());
    const auto key = relative_to(dir, a.out);
    json entry = json::object();
    md << "\n## " << key << "\n";
    for (const auto& f : files) {
      const auto name = f.stem().string();
      if (f.extension() == ".json") {
        entry[name] = core::read_json_file(f);
        md << "\n### " << name << "\n\n```\n" << entry[name].dump(2) << "\n```\n";
        continue;
      }
      const auto rows = read_csv(f);
      if (rows.empty()) continue;
      json table = json::array();
      md << "\n### " << name << "\n\n";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        md << "|";
        for (const auto& c : rows[i]) md << ' ' << c << " |";
        md << '\n';
        if (i == 0) {
          md << "|";
          for (std::size_t k = 0; k < rows[0].size(); ++k) md << "---|";
          md << '\n';
          continue;
        }
        json row = json::object();
        for (std::size_t k = 0; k < rows[0].size(); ++k) row[rows[0][k]] = k < rows[i].size() ? rows[i][k] : "";
        table.push_back(row);
      }
      entry[name] = table;
    }
    all[key] = entry;
  }
  core::write_json_file_atomic(a.out / "report.json", all);
  std::ofstream(a.out / "report.md", std::ios::trunc) << md.str();
  RunRecord r;
  r.command = "report";
  for (std::size_t i = 0; i < a.inputs.size(); ++i) r.inputs["in" + std::to_string(i)] = a.inputs[i];
  r.outputs["json"] = a.out / "report.json";
  r.outputs["markdown"] = a.out / "report.md";
  r.write(a.out);
  return a.out / "report.json";
}

}  // namespace obsmae::cli
