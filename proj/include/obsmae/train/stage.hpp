#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "obsmae/core/norm.hpp"
#include "obsmae/core/random.hpp"
#include "obsmae/data/datastore.hpp"
#include "obsmae/data/sampler.hpp"
#include "obsmae/model/mask.hpp"
#include "obsmae/model/model.hpp"
#include "obsmae/model/vae.hpp"
#include "obsmae/train/adam.hpp"
#include "obsmae/train/checkpoint.hpp"

namespace obsmae::train {

namespace fs = std::filesystem;
using nlohmann::json;

enum class StageId { TokenizerPretrain, Level1, ProfileFinetune };

inline std::string to_string(StageId s) {
  switch (s) {
    case StageId::TokenizerPretrain: return "tokenizer_pretrain";
    case StageId::Level1: return "level1";
    case StageId::ProfileFinetune: return "profile_finetune";
  }
  return "?";
}

inline StageId stage_id_from(const std::string& s) {
  if (s == "tokenizer_pretrain") return StageId::TokenizerPretrain;
  if (s == "level1") return StageId::Level1;
  if (s == "profile_finetune") return StageId::ProfileFinetune;
  throw Error("unknown training stage '" + s + "' (expected tokenizer_pretrain, level1 or profile_finetune)");
}

/// Which hours of a dataset may start training windows and which are held out for validation.
/// The split is by time with no window straddling the boundary.
struct TimeSplit {
  core::Hour train_first = 0, train_last = 0;  // admissible window starts
  core::Hour val_first = 0, val_last = 0;
  bool has_validation = false;
};

inline TimeSplit split_by_time(const data::DatasetManifest& m, std::size_t window_hours, double validation_fraction) {
  require(validation_fraction >= 0.0 && validation_fraction < 1.0, "validation_fraction must lie in [0, 1)");
  const auto W = static_cast<core::Hour>(window_hours);
  const core::Hour span = m.end_hour - m.start_hour + 1;
  require(span >= W, "dataset shorter than one window (" + std::to_string(span) + " h < " + std::to_string(W) + " h)");
  TimeSplit s;
  s.train_first = m.start_hour;
  s.train_last = m.end_hour - W + 1;
  if (validation_fraction == 0.0) return s;
  const auto val_hours = static_cast<core::Hour>(std::llround(validation_fraction * static_cast<double>(span)));
  const core::Hour boundary = m.end_hour + 1 - std::max(val_hours, W);
  require(boundary - m.start_hour >= W, "validation split leaves no room for a training window");
  s.train_last = boundary - W;
  s.val_first = boundary;
  s.val_last = m.end_hour - W + 1;
  s.has_validation = true;
  return s;
}

struct TrainStage {
  StageId id = StageId::Level1;
  std::vector<std::string> modalities;  // empty = every modality the stage admits
  std::size_t steps = 100;
  std::size_t batch = 8;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0 = only at the end
  double min_valid_fraction = 0.05;
  double validation_fraction = 0.0;
  // tokenizer_pretrain only
  std::size_t vae_windows = 32;
  std::size_t vae_batch = 64;

  /// Resolves the modality list against the model's modalities and checks stage invariants.
  std::vector<std::string> resolve(const std::vector<core::ModalitySpec>& all) const {
    require(steps >= 1, to_string(id) + ": steps must be >= 1");
    require(batch >= 1, to_string(id) + ": batch must be >= 1");
    auto is_profile = [&](const std::string& name) {
      for (const auto& m : all)
        if (m.name == name) return m.kind == core::ModalityKind::Profile;
      throw Error(to_string(id) + ": modality '" + name + "' is not part of the model");
    };
    std::vector<std::string> out = modalities;
    if (out.empty())
      for (const auto& m : all)
        if (id != StageId::Level1 || m.kind != core::ModalityKind::Profile) out.push_back(m.name);
    for (const auto& n : out) {
      const bool prof = is_profile(n);
      require(!(id == StageId::Level1 && prof), "level1 must not include PROFILE modality '" + n + "'");
    }
    if (id == StageId::ProfileFinetune)
      for (const auto& m : all)
        require(std::find(out.begin(), out.end(), m.name) != out.end(),
                "profile_finetune must include every modality; '" + m.name + "' is missing");
    require(!out.empty(), to_string(id) + ": no modalities to train");
    return out;
  }

  json to_json() const {
    return {{"id", to_string(id)},
            {"modalities", modalities},
            {"steps", steps},
            {"batch", batch},
            {"lr", lr},
            {"beta1", beta1},
            {"beta2", beta2},
            {"eps", eps},
            {"seed", seed},
            {"checkpoint_every", checkpoint_every},
            {"min_valid_fraction", min_valid_fraction},
            {"validation_fraction", validation_fraction},
            {"vae_windows", vae_windows},
            {"vae_batch", vae_batch}};
  }

  static TrainStage from_json(const json& j, std::optional<StageId> id = std::nullopt) {
    TrainStage s;
    s.id = id ? *id : stage_id_from(j.at("id").get<std::string>());
    s.modalities = j.value("modalities", s.modalities);
    s.steps = j.value("steps", s.steps);
    s.batch = j.value("batch", s.batch);
    s.lr = j.value("lr", s.lr);
    s.beta1 = j.value("beta1", s.beta1);
    s.beta2 = j.value("beta2", s.beta2);
    s.eps = j.value("eps", s.eps);
    s.seed = j.value("seed", s.seed);
    s.checkpoint_every = j.value("checkpoint_every", s.checkpoint_every);
    s.min_valid_fraction = j.value("min_valid_fraction", s.min_valid_fraction);
    s.validation_fraction = j.value("validation_fraction", s.validation_fraction);
    s.vae_windows = j.value("vae_windows", s.vae_windows);
    s.vae_batch = j.value("vae_batch", s.vae_batch);
    return s;
  }
};

struct StepMetric {
  std::size_t step = 0;
  double loss = 0.0;
  double wall_time = 0.0;                     // seconds since the stage started
  std::vector<std::string> loss_modalities;  // modalities that contributed loss terms this step
};

struct StageOptions {
  std::size_t workers = 1;
  fs::path metrics_path;  // JSONL; empty = none
  fs::path checkpoint_dir;  // empty = no checkpoint writes
};

struct StageResult {
  model::ModelParams params;
  std::vector<StepMetric> metrics;
};

class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void check_prerequisites(StageId id, const model::ModelParams& mp) {
  if (id == StageId::Level1)
    require(mp.has_stage("tokenizer_pretrain"),
            "level1 needs a checkpoint that completed tokenizer_pretrain (pass it with --ckpt-in)");
  if (id == StageId::ProfileFinetune)
    require(mp.has_stage("level1"), "profile_finetune needs a checkpoint that completed level1 (pass it with --ckpt-in)");
}

inline std::string describe_origins(const std::vector<data::WindowOrigin>& o) {
  std::ostringstream s;
  for (std::size_t i = 0; i < o.size(); ++i)
    s << (i ? ", " : "") << "(t0=" << o[i].t0 << ", lat0=" << o[i].lat0 << ", lon0=" << o[i].lon0 << ")";
  return s.str();
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is handled by exactly one thread.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct PreparedWindow {
  data::WindowOrigin origin;
  std::vector<model::TokenSet> tokens;
  model::MaskPlan plan;
};

/// Draws a window, tokenises it and samples a mask plan that leaves something to score.
inline PreparedWindow prepare_window(const data::Dataset& ds, const core::NormalizationStats& stats,
                                     const model::ModelParams& mp, const data::SamplerOptions& opt, core::Rng& rng) {
  for (std::size_t attempt = 0; attempt < opt.attempt_cap; ++attempt) {
    auto windows = data::sample_windows(ds, 1, rng, opt);
    PreparedWindow w;
    w.origin = windows[0].origin;
    w.tokens = model::tokenize(windows[0], &stats, mp);
    w.plan = model::sample_mask_plan(w.tokens, mp.config.mask_budget, mp.config.dirichlet_alpha, rng);
    std::size_t masked = 0;
    for (std::size_t m = 0; m < w.tokens.size(); ++m) masked += w.tokens[m].valid_count() - w.plan.counts[m];
    if (masked > 0) return w;
  }
  throw Error("training: no window with masked valid tokens after " + std::to_string(opt.attempt_cap) + " attempts");
}

inline void append_metric(const fs::path& path, const StepMetric& m) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot write metrics log " + path.string());
  out << json{{"step", m.step}, {"loss", m.loss}, {"wall_time", m.wall_time}}.dump() << '\n';
}

inline data::SamplerOptions sampler_for(const data::Dataset& ds, const model::ModelParams& mp, const TrainStage& st,
                                        const std::vector<std::string>& mods) {
  require(ds.grid().window == mp.config.window && ds.grid().patch == mp.config.patch,
          "training: dataset window/patch (" + std::to_string(ds.grid().window) + "/" +
              std::to_string(ds.grid().patch) + ") differ from the model config (" +
              std::to_string(mp.config.window) + "/" + std::to_string(mp.config.patch) + ")");
  const auto split = split_by_time(ds.manifest(), mp.config.window_hours, st.validation_fraction);
  data::SamplerOptions opt;
  opt.window_hours = mp.config.window_hours;
  opt.min_valid_fraction = st.min_valid_fraction;
  opt.first_start = split.train_first;
  opt.last_start = split.train_last;
  opt.modalities = mods;
  return opt;
}

inline StageResult run_tokenizer_pretrain(const TrainStage& st, const data::Dataset& ds,
                                          const core::NormalizationStats& stats, model::ModelParams mp,
                                          const std::vector<std::string>& mods, const StageOptions& so) {
  auto rng = core::make_rng(st.seed, {1});
  const auto opt = sampler_for(ds, mp, st, mods);
  const auto windows = data::sample_windows(ds, st.vae_windows, rng, opt);
  const auto net = mp.network<float>();
  StageResult res;
  const auto t_start = std::chrono::steady_clock::now();
  std::size_t step = 0;
  for (const auto& name : mods) {
    std::vector<model::Mat<float>> rows;
    Eigen::Index n = 0, len = 0;
    for (const auto& w : windows) {
      data::MultiModalSample one;
      one.origin = w.origin;
      one.cubes.push_back(w.cube(name));
      const auto ts = model::tokenize(one, &stats, mp)[0];
      len = ts.patches.cols();
      for (std::size_t r = 0; r < ts.size(); ++r)
        if (ts.valid[r]) {
          rows.push_back(ts.patches.row(static_cast<Eigen::Index>(r)));
          ++n;
        }
    }
    if (n == 0) throw Error("tokenizer_pretrain: no valid patch of '" + name + "' in the sampled windows");
    model::Mat<float> patches(n, len);
    for (Eigen::Index r = 0; r < n; ++r) patches.row(r) = rows[static_cast<std::size_t>(r)];
    model::VaePretrainOptions vo;
    vo.steps = st.steps;
    vo.batch = st.vae_batch;
    vo.lr = st.lr;
    vo.kl_weight = mp.config.kl_weight;
    auto vrng = core::make_rng(st.seed, {2, core::fnv1a(name)});
    const auto r = model::vae_pretrain<float>(net.tokenizer(name), mp.values, patches, vo, vrng);
    for (double l : r.history) {
      StepMetric m;
      m.step = ++step;
      m.loss = l;
      m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
      m.loss_modalities = {name};
      append_metric(so.metrics_path, m);
      res.metrics.push_back(std::move(m));
    }
  }
  (void)so.workers;
  mp.stages.push_back(to_string(st.id));
  if (!so.checkpoint_dir.empty()) checkpoint_save(mp, so.checkpoint_dir);
  res.params = std::move(mp);
  return res;
}

}  // namespace detail

/// One training stage. Per-window gradients are summed in window order whatever the worker
/// count, so runs are reproducible for a given seed.
inline StageResult run_stage(const TrainStage& st, const data::Dataset& ds, const core::NormalizationStats& stats,
                             model::ModelParams mp, const StageOptions& so = {}) {
  detail::check_prerequisites(st.id, mp);
  const auto mods = st.resolve(mp.modalities);
  for (const auto& n : mods) {
    require(stats.contains(n), "training: no normalisation statistics for '" + n + "'");
    ds.manifest().modality(n);
  }
  if (!so.metrics_path.empty()) {
    std::ofstream truncate(so.metrics_path, std::ios::trunc);
    if (!truncate) throw IoError("cannot write metrics log " + so.metrics_path.string());
  }
  if (st.id == StageId::TokenizerPretrain) return detail::run_tokenizer_pretrain(st, ds, stats, std::move(mp), mods, so);

  const auto net = mp.network<float>();
  net.check_params(mp.values);
  const auto opt = detail::sampler_for(ds, mp, st, mods);
  auto rng = core::make_rng(st.seed, {3});
  Adam<float> adam({st.lr, st.beta1, st.beta2, st.eps});
  const std::size_t W = std::max<std::size_t>(1, so.workers);
  model::ParamSet<float> grads = mp.values.zeros_like();
  StageResult res;
  const auto t_start = std::chrono::steady_clock::now();

  for (std::size_t step = 1; step <= st.steps; ++step) {
    std::vector<detail::PreparedWindow> batch;
    for (std::size_t b = 0; b < st.batch; ++b) batch.push_back(detail::prepare_window(ds, stats, mp, opt, rng));

    std::vector<double> losses(batch.size(), 0.0);
    std::vector<model::ParamSet<float>> per_window(batch.size());
    const float scale = 1.0f / static_cast<float>(batch.size());
    detail::parallel_for(batch.size(), W, [&](std::size_t i) {
      typename model::Network<float>::Cache cache;
      const auto pred = net.forward(mp.values, batch[i].tokens, batch[i].plan, &cache);
      auto loss = model::masked_mse_loss<float>(pred, batch[i].tokens, batch[i].plan);
      losses[i] = loss.value;
      for (auto& gm : loss.grad) gm *= scale;
      per_window[i] = mp.values.zeros_like();
      net.backward(mp.values, per_window[i], cache, loss.grad);
    });

    grads.set_zero();
    double mean = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      mean += losses[i] / static_cast<double>(batch.size());
      for (std::size_t k = 0; k < grads.size(); ++k) grads[k] += per_window[i][k];
    }
    if (!std::isfinite(mean) || !grads.all_finite()) {
      std::vector<data::WindowOrigin> origins;
      for (const auto& w : batch) origins.push_back(w.origin);
      throw NonFiniteLoss(to_string(st.id) + ": non-finite loss at step " + std::to_string(step) + "; batch windows " +
                          detail::describe_origins(origins));
    }
    adam.step(mp.values, grads);

    StepMetric m;
    m.step = step;
    m.loss = mean;
    m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    for (const auto& w : batch)
      for (std::size_t k = 0; k < w.tokens.size(); ++k)
        if (std::find(m.loss_modalities.begin(), m.loss_modalities.end(), w.tokens[k].modality) ==
            m.loss_modalities.end())
          m.loss_modalities.push_back(w.tokens[k].modality);
    detail::append_metric(so.metrics_path, m);
    res.metrics.push_back(std::move(m));
    if (!so.checkpoint_dir.empty() && st.checkpoint_every > 0 && step % st.checkpoint_every == 0 &&
        step != st.steps)
      checkpoint_save(mp, so.checkpoint_dir);
  }
  mp.stages.push_back(to_string(st.id));
  if (!so.checkpoint_dir.empty()) checkpoint_save(mp, so.checkpoint_dir);
  res.params = std::move(mp);
  return res;
}

}  // namespace obsmae::train
