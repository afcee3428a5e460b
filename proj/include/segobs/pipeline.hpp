// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iomanip>
#include <iostream>

#include "segobs/checkpoint.hpp"
#include "segobs/config.hpp"

namespace segobs {

// ---- evaluation driver ---------------------------------------------------------

struct EvalMethodSpec {
  std::string id;  // report id, e.g. mc_dropout_t50
  Method kind = Method::softmax;
  std::size_t t_passes = 50;
  std::string train_noise = "-";
  ObserverModel<float>* observer = nullptr;
  SegModel<float>* student = nullptr;
};

/// Parses a method id: softmax | void | mc_dropout_t<N> | mcda_t<N> |
/// observer | distill_supervised | distill_unsupervised.
inline EvalMethodSpec parse_method_id(const std::string& id) {
  EvalMethodSpec m;
  m.id = id;
  auto t_suffix = [&](const std::string& prefix) -> bool {
    if (id.rfind(prefix + "_t", 0) != 0) return false;
    const std::string n = id.substr(prefix.size() + 2);
    require(!n.empty() && n.find_first_not_of("0123456789") == std::string::npos,
            "bad method id `" + id + "`: expected " + prefix + "_t<N>");
    m.t_passes = std::stoul(n);
    require(m.t_passes >= 1, "bad method id `" + id + "`: T must be >= 1");
    return true;
  };
  if (id == "softmax") {
    m.kind = Method::softmax;
  } else if (id == "void") {
    m.kind = Method::void_class;
  } else if (t_suffix("mc_dropout")) {
    m.kind = Method::mc_dropout;
  } else if (t_suffix("mcda")) {
    m.kind = Method::mcda;
  } else if (id == "observer") {
    m.kind = Method::observer;
  } else if (id == "distill_supervised" || id == "distill_unsupervised") {
    m.kind = Method::distilled;
  } else {
    fail("unknown method id `" + id + "`");
  }
  return m;
}

struct EvalSeedRow {
  std::size_t seed_index;
  double r_at_p, aupr_v, trigger33, trigger75;
};

/// Aggregated metrics for one (method, train noise, test noise) cell.
struct EvalReport {
  std::string method_id;
  std::string train_noise = "-";
  std::string test_noise = "none";
  std::vector<EvalSeedRow> per_seed;
  double r_mean = 0, r_std = 0;
  double aupr_mean = 0, aupr_std = 0;
  double t33_mean = 0, t33_std = 0;
  double t75_mean = 0, t75_std = 0;
  std::size_t forward_passes = 0;
  double runtime_seconds = 0;
  PRCurve curve;                         // from the first evaluation seed
  std::vector<double> first_seed_coverages;
};

namespace detail {

inline void finalize_report(EvalReport& r) {
  auto stats = [&](auto pick) {
    double m = 0;
    for (const auto& row : r.per_seed) m += pick(row);
    m /= static_cast<double>(r.per_seed.size());
    double v = 0;
    for (const auto& row : r.per_seed) v += (pick(row) - m) * (pick(row) - m);
    return std::pair<double, double>(m, std::sqrt(v / static_cast<double>(r.per_seed.size())));
  };
  std::tie(r.r_mean, r.r_std) = stats([](const EvalSeedRow& x) { return x.r_at_p; });
  std::tie(r.aupr_mean, r.aupr_std) = stats([](const EvalSeedRow& x) { return x.aupr_v; });
  std::tie(r.t33_mean, r.t33_std) = stats([](const EvalSeedRow& x) { return x.trigger33; });
  std::tie(r.t75_mean, r.t75_std) = stats([](const EvalSeedRow& x) { return x.trigger75; });
}

}  // namespace detail

/// Scores every method on the (optionally corrupted) test set and computes
/// R@P, AuPR and trigger rates, repeated over the evaluation seed list
/// (mean +- std). All methods score the exact same corrupted inputs and share
/// the target's deterministic prediction as ground truth for correctness;
/// void-labeled pixels are excluded. Deterministic for fixed seeds and any
/// `jobs` value.
inline std::vector<EvalReport> evaluate(const std::vector<EvalMethodSpec>& methods, SegModel<float>& target,
                                        const Dataset& test, const CorruptionSpec& test_noise, double precision,
                                        double kl_eps, std::uint64_t base_seed, std::size_t n_seeds,
                                        std::size_t jobs = 1) {
  require(!methods.empty(), "evaluate: no methods requested");
  require(test.size() > 0, "evaluate: empty test set");
  for (const auto& m : methods) {
    if (m.kind == Method::observer) require(m.observer, "evaluate: method " + m.id + " needs an observer model");
    if (m.kind == Method::distilled) require(m.student, "evaluate: method " + m.id + " needs a student model");
  }
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<EvalReport> reports(methods.size());
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    reports[mi].method_id = methods[mi].id;
    reports[mi].train_noise = methods[mi].train_noise;
    reports[mi].test_noise = corruption_kind_name(test_noise.kind);
    reports[mi].forward_passes = forward_passes_per_image(methods[mi].kind, methods[mi].t_passes);
  }

  struct ImageResult {
    std::vector<std::uint8_t> correct;                 // non-void pixels, image order
    std::vector<std::vector<double>> method_scores;    // [method][non-void pixel]
  };

  for (std::size_t si = 0; si < n_seeds; ++si) {
    const std::uint64_t stream = derive_seed(base_seed, {rngtag::eval, si});
    std::vector<ImageResult> rows(test.size());

    parallel_for(test.size(), jobs, [&](std::size_t i) {
      NoGradGuard ng;
      Tensor<float> input = test.images[i];
      if (test_noise.kind != CorruptionKind::none) {
        Rng noise_rng(derive_seed(stream, {1, i}));
        input = apply_corruption(test.images[i], test_noise, noise_rng).first;
      }
      auto [y_hat, taps] = forward_with_taps(target, input, false);
      const auto pred = argmax_classes(y_hat);

      ImageResult row;
      row.method_scores.resize(methods.size());
      const auto& labels = test.labels[i];
      std::vector<std::size_t> keep;
      keep.reserve(labels.size());
      for (std::size_t k = 0; k < labels.size(); ++k) {
        if (labels[k] == kClassVoid) continue;
        keep.push_back(k);
        row.correct.push_back(pred[k] == labels[k]);
      }
      for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        Rng method_rng(derive_seed(stream, {2, mi, i}));
        ScoreOpts opts{methods[mi].t_passes, kl_eps};
        const auto full = score_method(methods[mi].kind, target, methods[mi].observer, methods[mi].student, input,
                                       y_hat, taps, opts, method_rng);
        auto& sel = row.method_scores[mi];
        sel.reserve(keep.size());
        for (auto k : keep) sel.push_back(full[k]);
      }
      rows[i] = std::move(row);
    });

    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      ScoredPixelSet pool;
      std::vector<double> coverages(test.size());
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& row = rows[i];
        const auto& s = row.method_scores[mi];
        for (std::size_t k = 0; k < s.size(); ++k) {
          pool.scores.push_back(s[k]);
          pool.correct.push_back(row.correct[k]);
          pool.image_index.push_back(static_cast<std::uint32_t>(i));
        }
        coverages[i] = image_coverage(s, row.correct, precision);
      }
      const auto curve = pr_curve(pool);
      EvalSeedRow srow{si, recall_at_precision(curve, precision), aupr(curve), trigger_rate(coverages, 0.33),
                       trigger_rate(coverages, 0.75)};
      reports[mi].per_seed.push_back(srow);
      if (si == 0) {
        reports[mi].curve = curve;
        reports[mi].first_seed_coverages = coverages;
      }
    }
  }

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (auto& r : reports) {
    detail::finalize_report(r);
    r.runtime_seconds = secs;
  }
  return reports;
}

// ---- report files ----------------------------------------------------------------

inline std::string format_pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v * 100.0;
  return os.str();
}

inline void write_report_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports,
                             bool append = false) {
  const bool fresh = !append || !std::filesystem::exists(path);
  std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
  require(static_cast<bool>(os), "write_report_csv: cannot open " + path.string());
  if (fresh)
    os << "method,train_noise,test_noise,seed_count,r_at_p95_mean,r_at_p95_std,aupr_mean,aupr_std,"
          "trigger33_mean,trigger33_std,trigger75_mean,trigger75_std,forward_passes_per_image\n";
  for (const auto& r : reports) {
    os << r.method_id << "," << r.train_noise << "," << r.test_noise << "," << r.per_seed.size() << ","
       << format_pct(r.r_mean) << "," << format_pct(r.r_std) << "," << format_pct(r.aupr_mean) << ","
       << format_pct(r.aupr_std) << "," << format_pct(r.t33_mean) << "," << format_pct(r.t33_std) << ","
       << format_pct(r.t75_mean) << "," << format_pct(r.t75_std) << "," << r.forward_passes << "\n";
  }
}

inline void write_report_raw_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports,
                                 bool append = false) {
  const bool fresh = !append || !std::filesystem::exists(path);
  std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
  require(static_cast<bool>(os), "write_report_raw_csv: cannot open " + path.string());
  if (fresh) os << "method,train_noise,test_noise,seed,r_at_p95,aupr,trigger33,trigger75\n";
  for (const auto& r : reports)
    for (const auto& s : r.per_seed)
      os << r.method_id << "," << r.train_noise << "," << r.test_noise << "," << s.seed_index << ","
         << format_pct(s.r_at_p) << "," << format_pct(s.aupr_v) << "," << format_pct(s.trigger33) << ","
         << format_pct(s.trigger75) << "\n";
}

struct TrainingSummaryRow {
  std::string model;  // target | observer | distill_supervised | distill_unsupervised
  std::string train_noise = "-";
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  double best_val_metric = 0;
  double seconds = 0;
};

inline void write_training_summary(const std::filesystem::path& path, const std::vector<TrainingSummaryRow>& rows) {
  std::ofstream os(path);
  require(static_cast<bool>(os), "write_training_summary: cannot open " + path.string());
  os << "model,train_noise,epochs,best_epoch,best_val_metric,seconds\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& r : rows)
    os << r.model << "," << r.train_noise << "," << r.epochs << "," << r.best_epoch << "," << r.best_val_metric << ","
       << r.seconds << "\n";
}

// ---- run directory -----------------------------------------------------------------

inline void prepare_run_dir(const ExperimentConfig& cfg, const std::string& version) {
  std::filesystem::create_directories(cfg.out_dir);
  cfg.write_resolved(cfg.out_dir / "config.resolved.cfg");
  std::ofstream vs(cfg.out_dir / "VERSION");
  vs << version << "\n";
  std::ofstream ss(cfg.out_dir / "seed.txt");
  ss << cfg.seed << "\n";
}

inline void ensure_dataset(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const bool have = fs::exists(cfg.data_dir / "train" / "manifest.txt") &&
                    fs::exists(cfg.data_dir / "val" / "manifest.txt") &&
                    fs::exists(cfg.data_dir / "test" / "manifest.txt");
  if (have) return;
  std::vector<DatasetManifest> splits{
      {"train", cfg.n_train, cfg.data_seed_base},
      {"val", cfg.n_val, cfg.data_seed_base + cfg.n_train},
      {"test", cfg.n_test, cfg.data_seed_base + cfg.n_train + cfg.n_val},
  };
  build_dataset(cfg.data_dir, splits, cfg.scene_proto);
}

inline SegModel<float> load_target_model(const ExperimentConfig& cfg) {
  const auto meta = parse_kv_file(cfg.out_dir / "target.meta");
  require(meta.at("arch.height") == std::to_string(cfg.arch.height) &&
              meta.at("arch.width") == std::to_string(cfg.arch.width) &&
              meta.at("arch.classes") == std::to_string(cfg.arch.num_classes),
          "target checkpoint architecture does not match the configuration");
  Rng scratch(0);
  auto model = build_target<float>(cfg.arch, scratch);
  load_model(cfg.out_dir / "target.ckpt", model);
  return model;
}

inline ObserverModel<float> load_observer_model(const ExperimentConfig& cfg, SegModel<float>& target,
                                                const std::string& train_noise) {
  auto obs = build_observer(cfg.arch, target);
  load_model(cfg.out_dir / ("observer_" + train_noise + ".ckpt"), obs.stack);
  return obs;
}

inline SegModel<float> load_student_model(const ExperimentConfig& cfg, const std::string& mode,
                                          const std::string& train_noise) {
  Rng scratch(0);
  auto model = build_target<float>(cfg.arch, scratch);
  load_model(cfg.out_dir / ("distill_" + mode + "_" + train_noise + ".ckpt"), model);
  return model;
}

inline double resolve_delta(const ExperimentConfig& cfg, SegModel<float>& target, const Dataset& val,
                            const McCache& val_cache) {
  if (!cfg.delta_auto) return cfg.safety.delta;
  return calibrate_delta(target, val, val_cache, cfg.safety.kl_eps, cfg.jobs);
}

// ---- commands ------------------------------------------------------------------------

inline int cmd_gen_data(const ExperimentConfig& cfg) {
  std::vector<DatasetManifest> splits{
      {"train", cfg.n_train, cfg.data_seed_base},
      {"val", cfg.n_val, cfg.data_seed_base + cfg.n_train},
      {"test", cfg.n_test, cfg.data_seed_base + cfg.n_train + cfg.n_val},
  };
  build_dataset(cfg.data_dir, splits, cfg.scene_proto);
  std::cout << "wrote " << (cfg.n_train + cfg.n_val + cfg.n_test) << " samples under " << cfg.data_dir.string()
            << "\n";
  return 0;
}

inline int cmd_train_target(const ExperimentConfig& cfg, const std::string& version) {
  ensure_dataset(cfg);
  prepare_run_dir(cfg, version);
  const auto train = load_dataset(cfg.data_dir, "train");
  const auto val = load_dataset(cfg.data_dir, "val");
  auto res = train_target(train, val, cfg.arch, cfg.train, cfg.jobs);
  save_model(cfg.out_dir / "target.ckpt", res.model);
  save_model_meta(cfg.out_dir / "target.meta", cfg.arch, "target");
  res.log.write_csv(cfg.out_dir / "target_train_log.csv");
  std::cout << "target: best val accuracy " << res.log.best_val << " at epoch " << res.log.best_epoch << " ("
            << res.log.seconds << "s)\n";
  return 0;
}

inline int cmd_train_observer(const ExperimentConfig& cfg, const std::string& train_noise,
                              const std::string& version) {
  prepare_run_dir(cfg, version);
  const auto kind = corruption_kind_from_name(train_noise);
  const auto train = load_dataset(cfg.data_dir, "train");
  const auto val = load_dataset(cfg.data_dir, "val");
  auto target = load_target_model(cfg);

  const auto train_cache = build_mc_cache(target, train, cfg.safety.mc_passes, cfg.seed, cfg.jobs);
  const auto val_cache = build_mc_cache(target, val, cfg.safety.mc_passes, cfg.seed + 1, cfg.jobs);
  SafetyConfig safety = cfg.safety;
  safety.delta = resolve_delta(cfg, target, val, val_cache);

  TrainConfig tcfg = cfg.train;
  tcfg.epochs = cfg.observer_epochs;
  const auto spec = cfg.corruption_for(kind, PatchPalette::train);
  auto res = train_observer(target, train, val, safety, tcfg, spec, train_cache, cfg.jobs);
  save_model(cfg.out_dir / ("observer_" + train_noise + ".ckpt"), res.model.stack);
  save_model_meta(cfg.out_dir / ("observer_" + train_noise + ".meta"), cfg.arch, "observer");
  {
    std::ofstream os(cfg.out_dir / ("observer_" + train_noise + ".meta"), std::ios::app);
    os << "observer.train_noise = " << train_noise << "\n";
    os << "safety.delta = " << res.delta << "\n";
  }
  res.log.write_csv(cfg.out_dir / ("observer_" + train_noise + "_train_log.csv"));
  std::cout << "observer(" << train_noise << "): best val aupr " << res.log.best_val << " at epoch "
            << res.log.best_epoch << ", delta " << res.delta << " (" << res.log.seconds << "s)\n";
  return 0;
}

inline int cmd_train_distill(const ExperimentConfig& cfg, const std::string& mode, const std::string& train_noise,
                             const std::string& version) {
  require(mode == "supervised" || mode == "unsupervised", "train-distill: mode must be supervised|unsupervised");
  prepare_run_dir(cfg, version);
  const auto kind = corruption_kind_from_name(train_noise);
  const auto train = load_dataset(cfg.data_dir, "train");
  const auto val = load_dataset(cfg.data_dir, "val");
  auto teacher = load_target_model(cfg);

  const auto train_cache = build_mc_cache(teacher, train, cfg.safety.mc_passes, cfg.seed, cfg.jobs);
  const auto val_cache = build_mc_cache(teacher, val, cfg.safety.mc_passes, cfg.seed + 1, cfg.jobs);
  TrainConfig tcfg = cfg.train;
  tcfg.epochs = cfg.distill_epochs;
  const auto spec = cfg.corruption_for(kind, PatchPalette::train);
  auto res = train_distilled(teacher, train, val, mode == "supervised" ? DistillMode::supervised : DistillMode::unsupervised,
                             spec, tcfg, train_cache, val_cache, cfg.distill_init_from_teacher, cfg.jobs);
  const std::string stem = "distill_" + mode + "_" + train_noise;
  save_model(cfg.out_dir / (stem + ".ckpt"), res.model);
  save_model_meta(cfg.out_dir / (stem + ".meta"), cfg.arch, "student");
  res.log.write_csv(cfg.out_dir / (stem + "_train_log.csv"));
  std::cout << stem << ": best val loss " << res.log.best_val << " at epoch " << res.log.best_epoch << " ("
            << res.log.seconds << "s)\n";
  return 0;
}

namespace detail {

/// Owns loaded models so EvalMethodSpec pointers stay valid.
struct MethodPool {
  std::map<std::string, ObserverModel<float>> observers;
  std::map<std::string, SegModel<float>> students;
  std::vector<EvalMethodSpec> specs;
};

inline void add_method(MethodPool& pool, const ExperimentConfig& cfg, SegModel<float>& target,
                       const std::string& id, const std::string& train_noise) {
  EvalMethodSpec m = parse_method_id(id);
  if (m.kind == Method::observer) {
    auto [it, fresh] = pool.observers.try_emplace(train_noise);
    if (fresh) it->second = load_observer_model(cfg, target, train_noise);
    m.observer = &it->second;
    m.train_noise = train_noise;
  } else if (m.kind == Method::distilled) {
    const std::string mode = m.id == "distill_supervised" ? "supervised" : "unsupervised";
    const std::string key = mode + "_" + train_noise;
    auto [it, fresh] = pool.students.try_emplace(key);
    if (fresh) it->second = load_student_model(cfg, mode, train_noise);
    m.student = &it->second;
    m.train_noise = train_noise;
  }
  pool.specs.push_back(m);
}

}  // namespace detail

inline int cmd_eval(const ExperimentConfig& cfg, const std::vector<std::string>& methods,
                    const std::string& test_noise, const std::string& train_noise, const std::string& version) {
  prepare_run_dir(cfg, version);
  const auto kind = corruption_kind_from_name(test_noise);
  const auto test = load_dataset(cfg.data_dir, "test");
  auto target = load_target_model(cfg);

  detail::MethodPool pool;
  for (const auto& id : methods) detail::add_method(pool, cfg, target, id, train_noise);

  const auto spec = cfg.corruption_for(kind, PatchPalette::test);
  auto reports = evaluate(pool.specs, target, test, spec, cfg.eval_precision, cfg.safety.kl_eps, cfg.seed,
                          cfg.eval_seeds, cfg.jobs);
  write_report_csv(cfg.out_dir / ("report_" + test_noise + ".csv"), reports);
  write_report_raw_csv(cfg.out_dir / ("report_raw_" + test_noise + ".csv"), reports);
  for (const auto& r : reports) {
    write_pr_csv(cfg.out_dir / ("pr_" + r.method_id + "_" + test_noise + ".csv"), r.curve);
    write_pr_svg(cfg.out_dir / ("pr_" + r.method_id + "_" + test_noise + ".svg"), r.curve,
                 r.method_id + " on " + test_noise);
  }
  std::cout << "report: " << (cfg.out_dir / ("report_" + test_noise + ".csv")).string() << "\n";
  return 0;
}

inline int cmd_curves(const ExperimentConfig& cfg, const std::vector<std::string>& methods,
                      const std::string& test_noise, const std::string& train_noise, const std::string& version) {
  return cmd_eval(cfg, methods, test_noise, train_noise, version);  // curve files are part of eval output
}

inline int cmd_maps(const ExperimentConfig& cfg, const std::string& method_id, const std::string& test_noise,
                    const std::string& train_noise, const std::string& version) {
  prepare_run_dir(cfg, version);
  const auto kind = corruption_kind_from_name(test_noise);
  const auto test = load_dataset(cfg.data_dir, "test");
  const auto val = load_dataset(cfg.data_dir, "val");
  auto target = load_target_model(cfg);

  detail::MethodPool pool;
  detail::add_method(pool, cfg, target, method_id, train_noise);
  const EvalMethodSpec& m = pool.specs.front();

  const auto val_cache = build_mc_cache(target, val, cfg.safety.mc_passes, cfg.seed + 1, cfg.jobs);
  const double delta = resolve_delta(cfg, target, val, val_cache);
  const auto spec = cfg.corruption_for(kind, PatchPalette::test);

  const auto maps_dir = cfg.out_dir / "maps";
  std::filesystem::create_directories(maps_dir);
  const std::size_t n = std::min(cfg.maps_count, test.size());
  const std::uint64_t stream = derive_seed(cfg.seed, {rngtag::eval, 0});
  for (std::size_t i = 0; i < n; ++i) {
    NoGradGuard ng;
    Tensor<float> input = test.images[i];
    if (kind != CorruptionKind::none) {
      Rng noise_rng(derive_seed(stream, {1, i}));
      input = apply_corruption(test.images[i], spec, noise_rng).first;
    }
    auto [y_hat, taps] = forward_with_taps(target, input, false);
    const auto pred = argmax_classes(y_hat);
    Rng method_rng(derive_seed(stream, {2, std::uint64_t(0), i}));
    ScoreOpts opts{m.t_passes, cfg.safety.kl_eps};
    const auto scores = score_method(m.kind, target, m.observer, m.student, input, y_hat, taps, opts, method_rng);
    std::vector<std::uint8_t> correct(pred.size());
    for (std::size_t k = 0; k < pred.size(); ++k) correct[k] = pred[k] == test.labels[i][k];

    // certainty labels: epistemic on clean inputs, aleatoric against the clean forward otherwise
    std::vector<std::int8_t> c;
    if (kind == CorruptionKind::none) {
      Rng mc_rng(derive_seed(stream, {3, i}));
      auto y_a = mc_dropout_mean(target, input, cfg.safety.mc_passes, mc_rng);
      c = certainty_labels(y_hat, y_a, delta, cfg.safety.kl_eps);
    } else {
      auto y_clean = target.forward(test.images[i], ForwardOpts::eval());
      c = certainty_labels(y_hat, y_clean, delta, cfg.safety.kl_eps);
    }

    const std::string stem = method_id + "_";
    const auto idx = std::to_string(i);
    write_image(maps_dir / (stem + "input_" + idx + ".ppm"), input);
    write_image(maps_dir / (stem + "uncertainty_" + idx + ".ppm"),
                render_map(MapKind::uncertainty, test.height, test.width, &scores, nullptr, nullptr, nullptr));
    write_image(maps_dir / (stem + "safety_" + idx + ".ppm"),
                render_map(MapKind::safety, test.height, test.width, &scores, &pred, &correct, nullptr,
                           cfg.eval_precision));
    write_image(maps_dir / (stem + "labels_" + idx + ".ppm"),
                render_map(MapKind::labels, test.height, test.width, nullptr, nullptr, nullptr, &c));
  }
  std::cout << "wrote " << 4 * n << " maps under " << maps_dir.string() << "\n";
  return 0;
}

// ---- reproduce -----------------------------------------------------------------------

/// Full desk-scale experiment matrix: target training, observers over the
/// configured train noises, both distillation variants, then every method on
/// every test noise. All outputs land in the run directory.
inline int cmd_reproduce(const ExperimentConfig& cfg, const std::string& version) {
  namespace fs = std::filesystem;
  ensure_dataset(cfg);
  prepare_run_dir(cfg, version);
  const auto train = load_dataset(cfg.data_dir, "train");
  const auto val = load_dataset(cfg.data_dir, "val");
  const auto test = load_dataset(cfg.data_dir, "test");

  std::vector<TrainingSummaryRow> summary;

  // 1. target
  auto tres = train_target(train, val, cfg.arch, cfg.train, cfg.jobs);
  SegModel<float>& target = tres.model;
  save_model(cfg.out_dir / "target.ckpt", target);
  save_model_meta(cfg.out_dir / "target.meta", cfg.arch, "target");
  tres.log.write_csv(cfg.out_dir / "target_train_log.csv");
  summary.push_back({"target", "-", cfg.train.epochs, tres.log.best_epoch, tres.log.best_val, tres.log.seconds});
  std::cout << "target: val acc " << tres.log.best_val << " (" << tres.log.seconds << "s)\n";

  // 2. shared caches and delta
  const auto train_cache = build_mc_cache(target, train, cfg.safety.mc_passes, cfg.seed, cfg.jobs);
  const auto val_cache = build_mc_cache(target, val, cfg.safety.mc_passes, cfg.seed + 1, cfg.jobs);
  SafetyConfig safety = cfg.safety;
  safety.delta = resolve_delta(cfg, target, val, val_cache);
  {
    std::ofstream os(cfg.out_dir / "delta.txt");
    os << safety.delta << "\n";
  }
  std::cout << "delta = " << safety.delta << "\n";

  // 3. observers and distillation students (independent; run across jobs)
  struct Task {
    std::string what;  // observer | distill_supervised | distill_unsupervised
    std::string noise;
  };
  std::vector<Task> tasks;
  for (const auto& n : cfg.reproduce_observer_noises) tasks.push_back({"observer", n});
  for (const auto& n : cfg.reproduce_distill_noises) {
    tasks.push_back({"distill_supervised", n});
    tasks.push_back({"distill_unsupervised", n});
  }

  detail::MethodPool pool;
  std::vector<TrainingSummaryRow> task_rows(tasks.size());
  std::mutex pool_mu;
  parallel_for(tasks.size(), cfg.jobs, [&](std::size_t ti) {
    const Task& task = tasks[ti];
    const auto kind = corruption_kind_from_name(task.noise);
    const auto spec = cfg.corruption_for(kind, PatchPalette::train);
    if (task.what == "observer") {
      TrainConfig tcfg = cfg.train;
      tcfg.epochs = cfg.observer_epochs;
      auto res = train_observer(target, train, val, safety, tcfg, spec, train_cache, 1);
      save_model(cfg.out_dir / ("observer_" + task.noise + ".ckpt"), res.model.stack);
      save_model_meta(cfg.out_dir / ("observer_" + task.noise + ".meta"), cfg.arch, "observer");
      res.log.write_csv(cfg.out_dir / ("observer_" + task.noise + "_train_log.csv"));
      task_rows[ti] = {"observer", task.noise, tcfg.epochs, res.log.best_epoch, res.log.best_val, res.log.seconds};
      std::lock_guard<std::mutex> lk(pool_mu);
      pool.observers.emplace(task.noise, std::move(res.model));
    } else {
      const bool supervised = task.what == "distill_supervised";
      TrainConfig tcfg = cfg.train;
      tcfg.epochs = cfg.distill_epochs;
      auto res = train_distilled(target, train, val, supervised ? DistillMode::supervised : DistillMode::unsupervised,
                                 spec, tcfg, train_cache, val_cache, cfg.distill_init_from_teacher, 1);
      const std::string stem = task.what + "_" + task.noise;
      save_model(cfg.out_dir / (stem + ".ckpt"), res.model);
      save_model_meta(cfg.out_dir / (stem + ".meta"), cfg.arch, "student");
      res.log.write_csv(cfg.out_dir / (stem + "_train_log.csv"));
      task_rows[ti] = {task.what, task.noise, tcfg.epochs, res.log.best_epoch, res.log.best_val, res.log.seconds};
      std::lock_guard<std::mutex> lk(pool_mu);
      pool.students.emplace((supervised ? std::string("supervised_") : std::string("unsupervised_")) + task.noise,
                            std::move(res.model));
    }
    std::cout << task.what << "(" << task.noise << ") done, " << task_rows[ti].seconds << "s\n";
  });
  for (auto& row : task_rows) summary.push_back(row);
  write_training_summary(cfg.out_dir / "training_summary.csv", summary);

  // 4. evaluation matrix
  bool first_noise = true;
  for (const auto& noise_name : cfg.eval_test_noises) {
    const auto kind = corruption_kind_from_name(noise_name);
    const auto spec = cfg.corruption_for(kind, PatchPalette::test);

    std::vector<EvalMethodSpec> specs;
    for (const auto& id : cfg.eval_methods) {
      EvalMethodSpec proto = parse_method_id(id);
      if (proto.kind == Method::observer) {
        for (auto& [noise, obs] : pool.observers) {
          EvalMethodSpec m = proto;
          m.train_noise = noise;
          m.observer = &obs;
          specs.push_back(m);
        }
      } else if (proto.kind == Method::distilled) {
        const std::string mode = proto.id == "distill_supervised" ? "supervised" : "unsupervised";
        for (auto& [key, student] : pool.students) {
          if (key.rfind(mode + "_", 0) != 0) continue;
          EvalMethodSpec m = proto;
          m.train_noise = key.substr(mode.size() + 1);
          m.student = &student;
          specs.push_back(m);
        }
      } else {
        specs.push_back(proto);
      }
    }

    auto reports = evaluate(specs, target, test, spec, cfg.eval_precision, cfg.safety.kl_eps, cfg.seed,
                            cfg.eval_seeds, cfg.jobs);
    write_report_csv(cfg.out_dir / "report.csv", reports, !first_noise);
    write_report_raw_csv(cfg.out_dir / "report_raw.csv", reports, !first_noise);
    for (const auto& r : reports) {
      const std::string stem = r.train_noise == "-" ? r.method_id : r.method_id + "-" + r.train_noise;
      write_pr_csv(cfg.out_dir / ("pr_" + stem + "_" + noise_name + ".csv"), r.curve);
      write_pr_svg(cfg.out_dir / ("pr_" + stem + "_" + noise_name + ".svg"), r.curve,
                   stem + " on " + noise_name);
    }
    std::cout << "evaluated " << specs.size() << " methods on " << noise_name << "\n";
    first_noise = false;
  }
  std::cout << "report: " << (cfg.out_dir / "report.csv").string() << "\n";
  return 0;
}

}  // namespace segobs
