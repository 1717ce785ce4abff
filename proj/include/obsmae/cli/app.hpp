#pragma once

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "obsmae/cli/commands.hpp"

namespace obsmae::cli {

namespace detail {

inline void add_common(CLI::App* sub, Common& c, bool with_config = true) {
  if (with_config) sub->add_option("--config", c.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  sub->add_option("--set", c.sets, "Override a config key: section.key=value (repeatable)");
  sub->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
}

}  // namespace detail

/// Parses argv and runs one subcommand. Exit codes: 0 success, 1 failed precondition or runtime
/// error, 2 usage error.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Multi-modal masked autoencoder for observation gap-filling and verification", "obsmae"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic multi-modal dataset");
  detail::add_common(s, synth);
  s->add_option("--out", synth.out, "Dataset directory")->required();
  s->add_option("--days", synth.days, "Length in days (overrides synth.hours)");
  s->add_option("--hours", synth.hours, "Length in hours");
  s->add_option("--seed", synth.seed, "Generator seed (synth.seed)");

  StatsArgs stats;
  auto* st = app.add_subcommand("stats", "Normalisation statistics over the training split");
  detail::add_common(st, stats);
  st->add_option("--data", stats.data, "Dataset directory or manifest")->required();
  st->add_option("--out", stats.out, "Output directory")->required();

  TrainArgs train;
  auto* tr = app.add_subcommand("train", "Run one training stage");
  detail::add_common(tr, train);
  tr->add_option("--stage", train.stage, "tokenizer_pretrain | level1 | profile_finetune")
      ->required()
      ->check(CLI::IsMember({"tokenizer_pretrain", "level1", "profile_finetune"}));
  tr->add_option("--data", train.data, "Dataset directory or manifest")->required();
  tr->add_option("--stats", train.stats, "Normalisation statistics (default: from --ckpt-in or computed)");
  tr->add_option("--ckpt-in", train.ckpt_in, "Checkpoint from the previous stage");
  tr->add_option("--ckpt-out", train.ckpt_out, "Output checkpoint directory")->required();
  tr->add_option("--steps", train.steps, "Optimizer steps (stages.<id>.steps)");
  tr->add_option("--seed", train.seed, "Stage seed (stages.<id>.seed)");

  TrainArgs pre;
  pre.stage = "tokenizer_pretrain";
  auto* pt = app.add_subcommand("pretrain-tokenizers", "Shorthand for train --stage tokenizer_pretrain");
  detail::add_common(pt, pre);
  pt->add_option("--data", pre.data, "Dataset directory or manifest")->required();
  pt->add_option("--stats", pre.stats, "Normalisation statistics");
  pt->add_option("--ckpt-in", pre.ckpt_in, "Start from this checkpoint");
  pt->add_option("--ckpt-out", pre.ckpt_out, "Output checkpoint directory")->required();
  pt->add_option("--steps", pre.steps, "VAE steps per modality");
  pt->add_option("--seed", pre.seed, "Stage seed");

  InferArgs inf;
  auto* in = app.add_subcommand("infer", "Gap-fill a window, forecast its last frame, or build global mosaics");
  detail::add_common(in, inf);
  in->add_option("--mode", inf.mode, "gapfill | background | mosaic")
      ->check(CLI::IsMember({"gapfill", "background", "mosaic"}));
  in->add_option("--ckpt", inf.ckpt, "Checkpoint directory")->required();
  in->add_option("--data", inf.data, "Dataset directory or manifest")->required();
  in->add_option("--out", inf.out, "Output dataset directory")->required();
  in->add_option("--t0", inf.t0, "First hour of the window or block");
  in->add_option("--t1", inf.t1, "Last block start (mosaic)");
  in->add_option("--lat0", inf.lat0, "Window row origin");
  in->add_option("--lon0", inf.lon0, "Window column origin");
  in->add_option("--visible", inf.visible, "Visible modalities (default all)")->delimiter(',');
  in->add_option("--horizon", inf.horizon, "0 = analysis, 1 = one-hour background")->check(CLI::Range(0, 1));
  in->add_option("--stride", inf.stride, "Mosaic stride in cells (default half the window)");

  EvalArgs bg;
  auto* b = app.add_subcommand("background", "Analysis and one-hour background departures");
  detail::add_common(b, bg);
  b->add_option("--ckpt", bg.ckpt, "Checkpoint directory")->required();
  b->add_option("--data", bg.data, "Dataset directory or manifest")->required();
  b->add_option("--out", bg.out, "Report directory")->required();
  b->add_option("--windows", bg.windows, "Evaluation windows (background.windows)");
  b->add_option("--seed", bg.seed, "Window sampling seed (background.seed)");

  SensitivityArgs sens;
  auto* se = app.add_subcommand("sensitivity", "Drop-one / keep-one sensor sensitivity");
  detail::add_common(se, sens);
  se->add_option("--mode", sens.mode, "drop_one | keep_one")->check(CLI::IsMember({"drop_one", "keep_one"}));
  se->add_option("--ckpt", sens.ckpt, "Checkpoint directory")->required();
  se->add_option("--data", sens.data, "Dataset directory or manifest")->required();
  se->add_option("--out", sens.out, "Report directory")->required();
  se->add_option("--windows", sens.windows, "Evaluation windows (sensitivity.windows)");
  se->add_option("--seed", sens.seed, "Window sampling seed (sensitivity.seed)");

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "Sounding statistics and hourly error profile of global mosaics");
  detail::add_common(v, ver);
  v->add_option("--ckpt", ver.ckpt, "Checkpoint directory");
  v->add_option("--data", ver.data, "Dataset directory or manifest")->required();
  v->add_option("--out", ver.out, "Report directory")->required();
  v->add_option("--soundings", ver.soundings, "Sounding CSV (default: soundings.csv in the dataset)");
  v->add_option("--reference", ver.reference, "Reference dataset (default: truth/ in the dataset)");
  v->add_option("--baseline-ckpt", ver.baseline_ckpt, "Second model for the significance test");
  v->add_option("--t0", ver.t0, "First block start");
  v->add_option("--t1", ver.t1, "Last block start");
  v->add_option("--stride", ver.stride, "Mosaic stride in cells");

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Collect report tables into report.json and report.md");
  r->add_option("--in", rep.inputs, "Run directories")->required();
  r->add_option("--out", rep.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* scope = &app;
    for (const auto* sub : app.get_subcommands()) scope = sub;
    err << scope->help();
    return 2;
  }

  try {
    if (s->parsed()) {
      out << cmd_synth(synth).string() << "\n";
    } else if (st->parsed()) {
      out << cmd_stats(stats).string() << "\n";
    } else if (tr->parsed() || pt->parsed()) {
      const auto sum = cmd_train(tr->parsed() ? train : pre);
      out << "steps " << sum.steps << " loss " << sum.first_loss << " -> " << sum.last_loss << "\n";
      if (sum.validation)
        out << "validation mse " << sum.validation->model_mse << " climatology " << sum.validation->climatology_mse
            << " ratio " << sum.validation->skill_ratio() << "\n";
    } else if (in->parsed()) {
      out << cmd_infer(inf).string() << "\n";
    } else if (b->parsed()) {
      out << verify::to_json(cmd_background(bg)).dump(2) << "\n";
    } else if (se->parsed()) {
      const auto res = cmd_sensitivity(sens);
      out << res.rows.size() << " rows, " << res.notes.size() << " notes\n";
    } else if (v->parsed()) {
      const auto res = cmd_verify(ver);
      out << res.blocks.size() << " blocks, " << res.soundings.size() << " sounding rows\n";
    } else if (r->parsed()) {
      out << cmd_report(rep).string() << "\n";
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace obsmae::cli
