// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <CLI11.hpp>
#include <iostream>

#include "segobs/pipeline.hpp"

#ifndef SEGOBS_VERSION
#define SEGOBS_VERSION "dev"
#endif

namespace segobs {

/// Command-line surface. Exit codes: 0 success, 1 failed invariant or runtime
/// error (one-line diagnostic), 2 usage errors.
inline int command_dispatch(int argc, char** argv) {
  CLI::App app{"segobs: pixel-level uncertainty lab for semantic segmentation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(SEGOBS_VERSION));

  struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out;
    std::string data;
    std::int64_t seed = -1;
    std::int64_t jobs = -1;
    std::int64_t seeds = -1;
  } common;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "experiment config file (key = value lines)");
    sub->add_option("--set", common.sets, "override a config key, e.g. --set train.epochs=1 (repeatable)");
    sub->add_option("--out", common.out, "run directory (overrides paths.out)");
    sub->add_option("--data", common.data, "dataset directory (overrides paths.data)");
    sub->add_option("--seed", common.seed, "global seed (overrides seed)");
    sub->add_option("--jobs", common.jobs, "worker parallelism cap (overrides jobs)");
  };

  std::string train_noise, mode = "unsupervised", method = "observer", test_noise = "glare", methods_csv;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset splits");
  add_common(gen);
  auto* tt = app.add_subcommand("train-target", "train the segmentation target");
  add_common(tt);
  auto* to = app.add_subcommand("train-observer", "train the observer against a frozen target");
  add_common(to);
  to->add_option("--train-noise", train_noise, "aleatoric noise kind: glare|rain|patch|all");
  auto* td = app.add_subcommand("train-distill", "train a distillation baseline student");
  add_common(td);
  td->add_option("--mode", mode, "supervised|unsupervised");
  td->add_option("--train-noise", train_noise, "aleatoric noise kind: glare|rain|patch|all");
  auto* ev = app.add_subcommand("eval", "score methods on the test set and emit the report CSV");
  add_common(ev);
  ev->add_option("--methods", methods_csv, "comma list of method ids");
  ev->add_option("--test-noise", test_noise, "none|glare|rain|patch");
  ev->add_option("--train-noise", train_noise, "which trained observer/student to load");
  auto* mp = app.add_subcommand("maps", "render uncertainty / safety / label maps");
  add_common(mp);
  mp->add_option("--method", method, "method id to score with");
  mp->add_option("--test-noise", test_noise, "none|glare|rain|patch");
  mp->add_option("--train-noise", train_noise, "which trained observer/student to load");
  auto* cv = app.add_subcommand("curves", "emit PR curve CSV + SVG per method");
  add_common(cv);
  cv->add_option("--methods", methods_csv, "comma list of method ids");
  cv->add_option("--test-noise", test_noise, "none|glare|rain|patch");
  cv->add_option("--train-noise", train_noise, "which trained observer/student to load");
  auto* rp = app.add_subcommand("reproduce", "run the full desk-scale experiment matrix");
  add_common(rp);
  rp->add_option("--seeds", common.seeds, "evaluation seed count (overrides eval.seeds)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << "\n";
    return 2;
  }

  try {
    // flag overrides win over --set, which wins over the file
    auto sets = common.sets;
    if (!common.out.empty()) sets.push_back("paths.out=" + common.out);
    if (!common.data.empty()) sets.push_back("paths.data=" + common.data);
    if (common.seed >= 0) sets.push_back("seed=" + std::to_string(common.seed));
    if (common.jobs >= 0) sets.push_back("jobs=" + std::to_string(common.jobs));
    if (common.seeds >= 0) sets.push_back("eval.seeds=" + std::to_string(common.seeds));
    const ExperimentConfig cfg = load_config(common.config_path, sets);

    const std::string version = SEGOBS_VERSION;
    if (train_noise.empty()) train_noise = corruption_kind_name(cfg.corruption.kind);
    std::vector<std::string> methods = methods_csv.empty() ? cfg.eval_methods : detail::split_list(methods_csv);

    if (gen->parsed()) return cmd_gen_data(cfg);
    if (tt->parsed()) return cmd_train_target(cfg, version);
    if (to->parsed()) return cmd_train_observer(cfg, train_noise, version);
    if (td->parsed()) return cmd_train_distill(cfg, mode, train_noise, version);
    if (ev->parsed()) return cmd_eval(cfg, methods, test_noise, train_noise, version);
    if (mp->parsed()) return cmd_maps(cfg, method, test_noise, train_noise, version);
    if (cv->parsed()) return cmd_curves(cfg, methods, test_noise, train_noise, version);
    if (rp->parsed()) return cmd_reproduce(cfg, version);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace segobs
