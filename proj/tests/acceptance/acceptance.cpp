// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any failed.
// Usage: acceptance [work_dir] [--only N[,N...]]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "obsmae/cli/commands.hpp"
#include "obsmae/infer/blend.hpp"
#include "obsmae/model/loss.hpp"
#include "obsmae/model/vae.hpp"

namespace {

namespace fs = std::filesystem;
namespace m = obsmae::model;
namespace cli = obsmae::cli;
namespace v = obsmae::verify;
using nlohmann::json;
using obsmae::core::ObservationCube;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

fs::path source(const std::string& rel) { return fs::path(OBSMAE_SOURCE_DIR) / rel; }

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

/// First differing file between two trees (relative path), or "" when identical.
/// metrics.jsonl lines carry wall-clock time, which is dropped before comparing.
std::string tree_difference(const fs::path& a, const fs::path& b) {
  auto canonical = [](const fs::path& p) {
    if (p.filename() != "metrics.jsonl") return slurp(p);
    std::ifstream f(p);
    std::string line, out;
    while (std::getline(f, line)) {
      auto j = json::parse(line);
      j.erase("wall_time");
      out += j.dump() + "\n";
    }
    return out;
  };
  std::set<std::string> seen;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    seen.insert(rel.generic_string());
    if (!fs::exists(b / rel) || canonical(e.path()) != canonical(b / rel)) return rel.generic_string();
  }
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file() && !seen.count(fs::relative(e.path(), b).generic_string()))
      return fs::relative(e.path(), b).generic_string();
  return "";
}

// --- 1: mask plan ---------------------------------------------------------------------------

m::TokenSet token_set(const std::string& name, std::size_t total, std::size_t valid, std::size_t stride) {
  m::TokenSet ts;
  ts.modality = name;
  ts.valid.assign(total, 0);
  for (std::size_t r = 0; r < valid; ++r) ts.valid[(r * stride) % total] = 1;
  for (std::size_t r = 0; r < total; ++r) ts.index.push_back({r, 0, 0});
  return ts;
}

Outcome mask_invariants() {
  const auto K = m::ModelConfig{}.mask_budget;  // the tiny preset lowers it for 48x48 windows
  auto rng = obsmae::core::make_rng(101);
  std::uniform_int_distribution<std::size_t> nv(0, 400);
  std::size_t violations = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<m::TokenSet> sets = {token_set("a", 972, nv(rng) + 64, 7), token_set("b", 972, nv(rng) + 64, 11),
                                     token_set("c", 36, nv(rng) % 37, 5)};
    const auto plan = m::sample_mask_plan(sets, K, 1.0, rng);
    std::size_t sum = 0;
    for (std::size_t k = 0; k < sets.size(); ++k) {
      sum += plan.counts[k];
      if (plan.visible[k].size() != plan.counts[k]) ++violations;
      for (auto r : plan.visible[k])
        if (!sets[k].valid[r]) ++violations;
    }
    if (sum != K) ++violations;
  }
  const std::vector<m::TokenSet> two = {token_set("a", 972, 600, 7), token_set("b", 972, 600, 11)};
  double share = 0.0;
  for (int d = 0; d < 10000; ++d) share += static_cast<double>(m::sample_mask_plan(two, K, 1.0, rng).counts[0]) / K;
  share /= 10000.0;
  return {violations == 0 && K == 128 && share >= 0.45 && share <= 0.55,
          "K=" + std::to_string(K) + ", " + std::to_string(violations) + " budget/visibility violations in 1000 plans" +
              fmt(", Dirichlet mean share %.4f", share)};
}

// --- 2: gradients ---------------------------------------------------------------------------

Outcome gradient_check() {
  const std::vector<m::ModalityLayout> layouts{{"geo", 2, true, obsmae::core::ModalityKind::Geo},
                                               {"leo", 2, true, obsmae::core::ModalityKind::Leo},
                                               {"elev", 1, false, obsmae::core::ModalityKind::Static}};
  std::vector<m::TokenSet> tokens = {
      m::patchify(obsmae::testing::random_cube("geo", {2, 2, 48, 48}, 11, 0.3), 16, true),
      m::patchify(obsmae::testing::random_cube("leo", {2, 2, 48, 48}, 12, 0.5), 16, true),
      m::patchify(obsmae::testing::random_cube("elev", {1, 1, 48, 48}, 13), 16, false)};
  m::Network<double> net(m::ModelConfig::tiny(), layouts);
  auto params = net.init_params(21);
  auto rng = obsmae::core::make_rng(22);
  const auto plan = m::sample_mask_plan(tokens, 16, 1.0, rng);
  m::Network<double>::Cache cache;
  const auto loss = m::masked_mse_loss<double>(net.forward(params, tokens, plan, &cache), tokens, plan);
  auto grads = params.zeros_like();
  net.backward(params, grads, cache, loss.grad);
  auto eval = [&] {
    return m::masked_mse_loss<double>(net.forward(params, tokens, plan, nullptr), tokens, plan, false).value;
  };
  std::string worst;
  const double err = obsmae::testing::max_gradient_error(params, grads, eval, 4, 1e-5, 1e-8, &worst);
  return {err < 1e-3, fmt("max relative error %.2e over ", err) + std::to_string(params.size()) +
                          " tensors (worst " + worst + ")"};
}

// --- 3: Hann blending -----------------------------------------------------------------------

Outcome hann() {
  const auto g = obsmae::core::GridSpec::global(64, 128, 48, 16);
  std::vector<obsmae::infer::PlacedTile> tiles;
  for (auto [r, c] : obsmae::infer::tile_origins(g, 24)) {
    ObservationCube t("x", {1, 2, 48, 48}, obsmae::core::hour_range(0, 2));
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t y = 0; y < 48; ++y)
        for (std::size_t x = 0; x < 48; ++x) t.set(0, k, y, x, 287.5f);
    tiles.push_back({t, r, c});
  }
  const auto out = obsmae::infer::hann_blend(tiles, g);
  double worst = 0.0;
  for (float x : out.values()) worst = std::max(worst, std::abs(double(x) - 287.5) / 287.5);

  // Two ramps on a 12-cell line, tile A at 0..7, tile B at 4..11; brute force in double.
  obsmae::infer::HannBlender b(1, 1, 12, false);
  std::vector<double> ta(8), tb(8);
  for (int i = 0; i < 8; ++i) {
    ta[i] = 1.5 * i - 2.0;
    tb[i] = 50.0 - 3.0 * i;
  }
  b.add(ta, 0, 0, 1, 8);
  b.add(tb, 0, 4, 1, 8);
  const auto res = b.result();
  auto w = [](int i) { return std::pow(std::sin(M_PI * (i + 0.5) / 8.0), 2); };
  double probe_err = 0.0;
  for (int x : {1, 4, 5, 7, 10}) {
    double num = 0.0, den = 0.0;
    if (x < 8) num += w(x) * ta[x], den += w(x);
    if (x >= 4) num += w(x - 4) * tb[x - 4], den += w(x - 4);
    probe_err = std::max(probe_err, std::abs(res[x] - num / den));
  }
  return {worst <= 1e-6 && probe_err <= 1e-9,
          fmt("constant field relative error %.1e, probe error %.1e", worst, probe_err)};
}

// --- 4: KL ----------------------------------------------------------------------------------

Outcome kl() {
  const double a = m::kl_divergence({1.0}, {0.0}), b = m::kl_divergence({0.0}, {0.0});
  return {std::abs(a - 0.5) <= 1e-9 && b == 0.0, fmt("KL(1,0) = %.12f, KL(0,0) = %.1f", a, b)};
}

// --- 7: background contract -----------------------------------------------------------------

Outcome background_contract(const fs::path& data, const fs::path& ckpt) {
  const auto lm = cli::load_model(ckpt);
  const auto ds = obsmae::data::Dataset::open(data);
  std::size_t mismatched = 0, checked = 0;
  for (auto [t0, lat0, lon0] : {std::tuple<int, int, int>{0, 0, 0}, {30, 24, 100}, {60, 48, 170}}) {
    const auto s = ds.read_window(t0, lat0, lon0, lm.params.config.window_hours);
    auto mutated = s;
    for (auto& c : mutated.cubes) {
      if (c.shape().t < 2) continue;
      const auto last = c.shape().t - 1;
      for (std::size_t ch = 0; ch < c.shape().c; ++ch)
        for (std::size_t y = 0; y < c.shape().h; ++y)
          for (std::size_t x = 0; x < c.shape().w; ++x)
            c.set(ch, last, y, x, (x + y) % 3 ? 1e4f + float(x) : -1e4f);
    }
    const auto a = obsmae::infer::background_forecast(s, lm.params, lm.stats, 1);
    const auto b = obsmae::infer::background_forecast(mutated, lm.params, lm.stats, 1);
    for (std::size_t k = 0; k < a.size(); ++k) {
      ++checked;
      if (a[k].values() != b[k].values() || a[k].valid_mask() != b[k].valid_mask()) ++mismatched;
    }
  }
  return {mismatched == 0 && checked > 0,
          std::to_string(checked - mismatched) + "/" + std::to_string(checked) +
              " horizon-1 outputs bit-identical after mutating the last frame"};
}

// --- 8: verification oracles ----------------------------------------------------------------

ObservationCube row(const std::vector<float>& vals) {
  ObservationCube c("a", {1, 1, 1, vals.size()}, {0});
  for (std::size_t i = 0; i < vals.size(); ++i) c.set(0, 0, 0, i, vals[i]);
  return c;
}

Outcome verification_oracles() {
  std::vector<std::string> failed;
  const auto d = v::departures({row({2, 2, 2})}, {row({1, 2, 3})});
  if (std::abs(d[0].second[0].bias) > 1e-15 || std::abs(d[0].second[0].mae - 2.0 / 3.0) > 1e-15)
    failed.push_back("departures");

  const double p = 1000.0, e = 6.112;
  const double q = v::kEpsilonWater * e / (p - (1.0 - v::kEpsilonWater) * e);
  if (std::abs(v::relative_humidity(1000.0 * q, 273.15, p) - 100.0) > 1e-9 || v::relative_humidity(0.0, 280.0, 850.0) != 0.0)
    failed.push_back("relative_humidity");

  std::vector<v::KeyedError> ka, kb;
  for (int i = 0; i < 20; ++i) {
    ka.push_back({"S" + std::to_string(i), 12, 500.0, std::cos(i) * 2.0});
    kb.push_back(ka.back());
  }
  const auto sig = v::significance(ka, kb);
  if (sig.size() != 1 || sig[0].p_value != 1.0 || sig[0].significant) failed.push_back("significance");

  // Two stations at 500 hPa: model 1 K warm and 2 K cold.
  auto match = [](const std::string& st, double obs, double mod) {
    v::SoundingMatch m;
    m.station = st;
    m.pressure = {500.0};
    m.obs_t = {obs};
    m.model_t = {mod};
    return m;
  };
  const auto rows = v::sounding_stats({match("A", 280.0, 281.0), match("B", 290.0, 288.0)});
  if (rows.empty() || std::abs(rows[0].temperature.bias + 0.5) > 1e-12 || std::abs(rows[0].temperature.mae - 1.5) > 1e-12)
    failed.push_back("sounding_stats");

  std::string names;
  for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
  return {failed.empty(), failed.empty() ? "departures, relative_humidity, significance, sounding_stats match hand values"
                                         : "mismatch in " + names};
}

// --- pipelines ------------------------------------------------------------------------------

cli::Common common(const fs::path& config, std::vector<std::string> sets = {}) {
  cli::Common c;
  c.config = config;
  c.sets = std::move(sets);
  c.workers = 1;
  return c;
}

template <class Args>
Args with(const cli::Common& c) {
  Args a;
  static_cast<cli::Common&>(a) = c;
  return a;
}

cli::TrainSummary train(const cli::Common& c, const std::string& stage, const fs::path& data, const fs::path& in,
                        const fs::path& out) {
  auto a = with<cli::TrainArgs>(c);
  a.stage = stage;
  a.data = data;
  a.ckpt_in = in;
  a.ckpt_out = out;
  return cli::cmd_train(a);
}

void synth(const cli::Common& c, const fs::path& out) {
  auto a = with<cli::SynthArgs>(c);
  a.out = out;
  cli::cmd_synth(a);
}

/// Two-modality learning run shared by the skill, background and hourly criteria.
struct LearningRun {
  fs::path data, ckpt;
  cli::TrainSummary summary;
};

LearningRun learning_run(const fs::path& dir) {
  const auto c = common(source("configs/tiny_two_modality.json"));
  LearningRun r{dir / "data", dir / "ck_level1", {}};
  synth(c, r.data);
  train(c, "tokenizer_pretrain", r.data, {}, dir / "ck_tokenizer");
  r.summary = train(c, "level1", r.data, dir / "ck_tokenizer", r.ckpt);
  return r;
}

Outcome learning_signal(const LearningRun& r) {
  const double limit = obsmae::core::read_json_file(source("configs/tiny_two_modality.json"))
                           .at("acceptance")
                           .at("max_skill_ratio")
                           .get<double>();
  if (!r.summary.validation) return {false, "no validation result"};
  const auto& val = *r.summary.validation;
  return {val.skill_ratio() < limit,
          fmt("validation MSE %.4f vs climatology %.4f, ratio %.4f", val.model_mse, val.climatology_mse,
              val.skill_ratio()) +
              fmt(" (limit %.2f) after %.0f steps", limit, double(r.summary.steps))};
}

Outcome hourly_shape(const LearningRun& r, const fs::path& dir) {
  const auto ds = obsmae::data::Dataset::open(r.data);
  const auto cfg = cli::Experiment::load(source("configs/tiny_two_modality.json"));
  const auto split =
      obsmae::train::split_by_time(ds.manifest(), cfg.model().window_hours, cfg.validation_fraction());
  auto a = with<cli::VerifyArgs>(common(source("configs/tiny_two_modality.json")));
  a.ckpt = r.ckpt;
  a.data = r.data;
  a.out = dir / "verify";
  a.t0 = split.val_first;
  const auto res = cli::cmd_verify(a);
  bool ok = !res.hourly.empty();
  std::string detail = std::to_string(res.blocks.size()) + " held-out blocks vs " + res.reference_kind + ":";
  for (const auto& [mod, e] : res.hourly) {
    ok = ok && e.size() == 12 && e[6] <= e[0] && e[6] <= e[11];
    detail += " " + mod + fmt(" h0 %.3f h6 %.3f h11 %.3f;", e[0], e[6], e[11]);
  }
  return {ok, detail};
}

Outcome cross_modality(const fs::path& dir) {
  const auto cfg = source("configs/tiny_cross_modality.json");
  const auto c = common(cfg);
  synth(c, dir / "data");
  train(c, "tokenizer_pretrain", dir / "data", {}, dir / "ck0");
  train(c, "level1", dir / "data", dir / "ck0", dir / "ck1");
  train(c, "profile_finetune", dir / "data", dir / "ck1", dir / "ck2");
  auto a = with<cli::SensitivityArgs>(c);
  a.mode = "keep_one";
  a.ckpt = dir / "ck2";
  a.data = dir / "data";
  a.out = dir / "sensitivity";
  const auto rep = cli::cmd_sensitivity(a);
  const auto acc = obsmae::core::read_json_file(cfg).at("acceptance");
  const auto source_mod = acc.at("informative").get<std::string>(), noise_mod = acc.at("noise").get<std::string>(),
             target = acc.at("target").get<std::string>();
  const double factor = acc.at("min_factor").get<double>();
  auto pooled = [&](const std::string& kept) {
    double s = 0.0;
    std::size_t n = 0;
    for (auto surf : {v::Surface::Land, v::Surface::Ocean})
      if (const auto* r = rep.find(kept, target, surf)) {
        s += r->mae_perturbed * static_cast<double>(r->cells);
        n += r->cells;
      }
    return n ? s / static_cast<double>(n) : std::nan("");
  };
  const double ma = pooled(source_mod), mb = pooled(noise_mod);
  return {ma * factor <= mb, target + " MAE keep_one(" + source_mod + ")" + fmt(" %.4f", ma) +
                                 ", keep_one(" + noise_mod + ")" + fmt(" %.4f, ratio %.2f", mb, mb / ma) +
                                 fmt(" (need >= %.1f)", factor)};
}

Outcome reproducibility(const fs::path& dir) {
  // Shortened runs of the committed fixture; single worker throughout.
  const auto c = common(source("configs/tiny_two_modality.json"),
                        {"synth.days=2", "stages.tokenizer_pretrain.steps=20", "stages.level1.steps=15",
                         "eval.windows=4", "background.windows=4"});
  for (const auto* run : {"a", "b"}) {
    const auto root = dir / run;
    synth(c, root / "data");
    train(c, "tokenizer_pretrain", root / "data", {}, root / "ck0");
    train(c, "level1", root / "data", root / "ck0", root / "ck1");
    auto bg = with<cli::EvalArgs>(c);
    bg.ckpt = root / "ck1";
    bg.data = root / "data";
    bg.out = root / "background";
    cli::cmd_background(bg);
    auto ver = with<cli::VerifyArgs>(c);
    ver.ckpt = root / "ck1";
    ver.data = root / "data";
    ver.out = root / "verify";
    ver.t1 = 12;
    cli::cmd_verify(ver);
    cli::ReportArgs rep;
    rep.inputs = {root / "background", root / "verify"};
    rep.out = root / "report";
    cli::cmd_report(rep);
  }
  std::string detail;
  bool ok = true;
  for (const auto* part : {"data", "ck0", "ck1", "background", "verify", "report"}) {
    const auto diff = tree_difference(dir / "a" / part, dir / "b" / part);
    if (!diff.empty()) {
      ok = false;
      detail += std::string(detail.empty() ? "" : "; ") + part + "/" + diff + " differs";
    }
  }
  return {ok, ok ? "dataset, checkpoints (metrics compared without wall time), departures, hourly and report files "
                   "byte-identical across two runs"
                 : detail};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "obsmae_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string t; std::getline(ss, t, ',');) only.insert(std::stoi(t));
    } else {
      work = a;
    }
  }
  fs::remove_all(work);
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    if (!only.empty() && !only.count(id)) return;
    const auto t = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
    if (!o.pass) ++failures;
    std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  report(1, "mask plan invariants", mask_invariants);
  report(2, "gradient correctness", gradient_check);
  report(3, "Hann blending", hann);
  report(4, "VAE KL closed form", kl);
  report(8, "verification statistics", verification_oracles);
  report(10, "reproducibility", [&] { return reproducibility(work / "repro"); });

  std::optional<LearningRun> run;
  auto ensure_run = [&]() -> const LearningRun& {
    if (!run) run = learning_run(work / "learning");
    return *run;
  };
  report(5, "learning signal", [&] { return learning_signal(ensure_run()); });
  report(7, "background contract", [&] { return background_contract(ensure_run().data, ensure_run().ckpt); });
  report(9, "hourly error shape", [&] { return hourly_shape(ensure_run(), work / "learning"); });
  report(6, "cross-modality information", [&] { return cross_modality(work / "cross"); });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
