// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "segobs/supervision.hpp"

namespace segobs {

namespace detail {

inline const std::map<std::string, std::string>& config_defaults() {
  static const std::map<std::string, std::string> defaults = {
      {"seed", "42"},
      {"jobs", "1"},
      {"paths.data", "data"},
      {"paths.out", "runs/exp"},

      {"arch.height", "64"},
      {"arch.width", "64"},
      {"arch.classes", "6"},
      {"arch.widths", "8,16,32,64,64"},
      {"arch.dropout_p", "0.5"},

      {"data.train", "400"},
      {"data.val", "50"},
      {"data.test", "100"},
      {"data.seed_base", "1000"},
      {"data.ood", "false"},
      {"data.noise_sigma", "0.02"},
      {"data.max_vehicles", "4"},
      {"data.max_obstacles", "3"},

      {"train.epochs", "50"},
      {"train.batch_size", "5"},
      {"train.lr", "1e-3"},
      {"train.momentum", "0.9"},
      {"train.weight_decay", "5e-4"},

      {"observer.epochs", "50"},
      {"distill.epochs", "50"},
      {"distill.init_from_teacher", "true"},

      {"safety.delta", "auto"},
      {"safety.error_rate", "0.05"},
      {"safety.margin", "2.0"},
      {"safety.T", "50"},
      {"safety.kl_eps", "1e-8"},

      {"corruption.kind", "glare"},
      {"corruption.glare.alpha", "0.9"},
      {"corruption.glare.axis_min", "0.15"},
      {"corruption.glare.axis_max", "0.45"},
      {"corruption.rain.count_min", "20"},
      {"corruption.rain.count_max", "60"},
      {"corruption.rain.grey", "0.7"},
      {"corruption.rain.alpha", "0.8"},
      {"corruption.rain.angle_min", "60"},
      {"corruption.rain.angle_max", "120"},
      {"corruption.patch.count_min", "1"},
      {"corruption.patch.count_max", "3"},
      {"corruption.patch.size_min", "0.10"},
      {"corruption.patch.size_max", "0.40"},
      {"corruption.patch.palette", "train"},

      {"eval.methods", "softmax,void,mc_dropout_t2,mc_dropout_t50,mcda_t50,observer,distill_supervised,distill_unsupervised"},
      {"eval.test_noises", "none,glare,rain,patch"},
      {"eval.seeds", "3"},
      {"eval.precision", "0.95"},
      {"eval.maps_count", "3"},

      {"reproduce.observer_noises", "glare,rain,patch,all"},
      {"reproduce.distill_noises", "glare,rain,patch,all"},
  };
  return defaults;
}

inline long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long out = std::stol(v, &used);
    require(used == v.size(), "");
    return out;
  } catch (...) {
    fail("config: key " + key + " expects an integer, got `" + v + "`");
  }
}

inline std::size_t parse_size(const std::string& key, const std::string& v, long min_value = 0) {
  const long out = parse_long(key, v);
  require(out >= min_value,
          "config: key " + key + " must be >= " + std::to_string(min_value) + ", got `" + v + "`");
  return static_cast<std::size_t>(out);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long out = std::stoull(v, &used);
    require(used == v.size(), "");
    return out;
  } catch (...) {
    fail("config: key " + key + " expects a non-negative integer, got `" + v + "`");
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    require(used == v.size(), "");
    return out;
  } catch (...) {
    fail("config: key " + key + " expects a number, got `" + v + "`");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail("config: key " + key + " expects a boolean, got `" + v + "`");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : v) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

/// All module parameters under dotted namespaces, resolved from defaults,
/// an optional config file, and `--set key=value` overrides (in that order).
/// Unknown keys are rejected.
struct ExperimentConfig {
  std::map<std::string, std::string> raw;  // fully resolved key=value view

  std::uint64_t seed = 42;
  std::size_t jobs = 1;
  std::filesystem::path data_dir, out_dir;

  ArchConfig arch;
  SceneParams scene_proto;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  std::uint64_t data_seed_base = 0;

  TrainConfig train;  // target loop; observer/distill share everything but epochs
  std::size_t observer_epochs = 50;
  std::size_t distill_epochs = 50;
  bool distill_init_from_teacher = true;

  SafetyConfig safety;
  bool delta_auto = true;

  CorruptionSpec corruption;  // kind + every per-noise parameter

  std::vector<std::string> eval_methods;
  std::vector<std::string> eval_test_noises;
  std::size_t eval_seeds = 3;
  double eval_precision = 0.95;
  std::size_t maps_count = 3;
  std::vector<std::string> reproduce_observer_noises;
  std::vector<std::string> reproduce_distill_noises;

  /// Corruption spec for a given test/train noise kind; patches switch to the
  /// held-out palette at evaluation time.
  CorruptionSpec corruption_for(CorruptionKind kind, PatchPalette palette) const {
    CorruptionSpec spec = corruption;
    spec.kind = kind;
    spec.patch_palette = palette;
    return spec;
  }

  void write_resolved(const std::filesystem::path& path) const {
    std::ofstream os(path);
    require(static_cast<bool>(os), "config: cannot write " + path.string());
    os << "# resolved experiment configuration\n";
    for (const auto& [k, v] : raw) os << k << " = " << v << "\n";
  }
};

inline ExperimentConfig materialize_config(const std::map<std::string, std::string>& kv) {
  using namespace detail;
  ExperimentConfig cfg;
  cfg.raw = kv;
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    require(it != kv.end(), std::string("config: missing key ") + key);
    return it->second;
  };

  cfg.seed = parse_u64("seed", get("seed"));
  cfg.jobs = parse_size("jobs", get("jobs"), 1);
  cfg.data_dir = get("paths.data");
  cfg.out_dir = get("paths.out");

  cfg.arch.height = parse_size("arch.height", get("arch.height"), 1);
  cfg.arch.width = parse_size("arch.width", get("arch.width"), 1);
  cfg.arch.num_classes = parse_size("arch.classes", get("arch.classes"), 2);
  cfg.arch.widths.clear();
  for (const auto& w : split_list(get("arch.widths")))
    cfg.arch.widths.push_back(parse_size("arch.widths", w, 1));
  cfg.arch.dropout_p = parse_double("arch.dropout_p", get("arch.dropout_p"));
  cfg.arch.validate();
  require(cfg.arch.num_classes == kNumClasses,
          "config: arch.classes must be " + std::to_string(kNumClasses) + " (the scene generator's class set)");

  cfg.n_train = parse_size("data.train", get("data.train"), 1);
  cfg.n_val = parse_size("data.val", get("data.val"), 1);
  cfg.n_test = parse_size("data.test", get("data.test"), 1);
  cfg.data_seed_base = parse_u64("data.seed_base", get("data.seed_base"));
  cfg.scene_proto.height = cfg.arch.height;
  cfg.scene_proto.width = cfg.arch.width;
  cfg.scene_proto.ood_enabled = parse_bool("data.ood", get("data.ood"));
  cfg.scene_proto.pixel_noise_sigma = parse_double("data.noise_sigma", get("data.noise_sigma"));
  cfg.scene_proto.max_vehicles = parse_size("data.max_vehicles", get("data.max_vehicles"));
  cfg.scene_proto.max_obstacles = parse_size("data.max_obstacles", get("data.max_obstacles"));
  cfg.scene_proto.validate();

  cfg.train.epochs = parse_size("train.epochs", get("train.epochs"), 1);
  cfg.train.batch_size = parse_size("train.batch_size", get("train.batch_size"), 1);
  cfg.train.base_lr = parse_double("train.lr", get("train.lr"));
  cfg.train.momentum = parse_double("train.momentum", get("train.momentum"));
  cfg.train.weight_decay = parse_double("train.weight_decay", get("train.weight_decay"));
  cfg.train.seed = cfg.seed;
  cfg.train.validate();

  cfg.observer_epochs = parse_size("observer.epochs", get("observer.epochs"), 1);
  cfg.distill_epochs = parse_size("distill.epochs", get("distill.epochs"), 1);
  cfg.distill_init_from_teacher = parse_bool("distill.init_from_teacher", get("distill.init_from_teacher"));

  const std::string delta = get("safety.delta");
  cfg.delta_auto = delta == "auto";
  cfg.safety.delta = cfg.delta_auto ? 0.0 : parse_double("safety.delta", delta);
  cfg.safety.target_error_rate = parse_double("safety.error_rate", get("safety.error_rate"));
  cfg.safety.margin = parse_double("safety.margin", get("safety.margin"));
  cfg.safety.mc_passes = parse_size("safety.T", get("safety.T"), 1);
  cfg.safety.kl_eps = parse_double("safety.kl_eps", get("safety.kl_eps"));
  cfg.safety.validate();

  cfg.corruption.kind = corruption_kind_from_name(get("corruption.kind"));
  cfg.corruption.glare_alpha = parse_double("corruption.glare.alpha", get("corruption.glare.alpha"));
  cfg.corruption.glare_axis_min = parse_double("corruption.glare.axis_min", get("corruption.glare.axis_min"));
  cfg.corruption.glare_axis_max = parse_double("corruption.glare.axis_max", get("corruption.glare.axis_max"));
  cfg.corruption.rain_count_min = parse_size("corruption.rain.count_min", get("corruption.rain.count_min"));
  cfg.corruption.rain_count_max = parse_size("corruption.rain.count_max", get("corruption.rain.count_max"));
  cfg.corruption.rain_grey = parse_double("corruption.rain.grey", get("corruption.rain.grey"));
  cfg.corruption.rain_alpha = parse_double("corruption.rain.alpha", get("corruption.rain.alpha"));
  cfg.corruption.rain_angle_min_deg = parse_double("corruption.rain.angle_min", get("corruption.rain.angle_min"));
  cfg.corruption.rain_angle_max_deg = parse_double("corruption.rain.angle_max", get("corruption.rain.angle_max"));
  cfg.corruption.patch_count_min = parse_size("corruption.patch.count_min", get("corruption.patch.count_min"));
  cfg.corruption.patch_count_max = parse_size("corruption.patch.count_max", get("corruption.patch.count_max"));
  cfg.corruption.patch_size_min = parse_double("corruption.patch.size_min", get("corruption.patch.size_min"));
  cfg.corruption.patch_size_max = parse_double("corruption.patch.size_max", get("corruption.patch.size_max"));
  const std::string palette = get("corruption.patch.palette");
  require(palette == "train" || palette == "test", "config: corruption.patch.palette must be train|test");
  cfg.corruption.patch_palette = palette == "train" ? PatchPalette::train : PatchPalette::test;
  cfg.corruption.validate();

  cfg.eval_methods = split_list(get("eval.methods"));
  cfg.eval_test_noises = split_list(get("eval.test_noises"));
  for (const auto& n : cfg.eval_test_noises) corruption_kind_from_name(n);
  cfg.eval_seeds = parse_size("eval.seeds", get("eval.seeds"), 1);
  cfg.eval_precision = parse_double("eval.precision", get("eval.precision"));
  require(cfg.eval_precision > 0 && cfg.eval_precision <= 1, "config: eval.precision must be in (0,1]");
  cfg.maps_count = parse_size("eval.maps_count", get("eval.maps_count"));
  cfg.reproduce_observer_noises = split_list(get("reproduce.observer_noises"));
  cfg.reproduce_distill_noises = split_list(get("reproduce.distill_noises"));
  for (const auto& n : cfg.reproduce_observer_noises)
    require(corruption_kind_from_name(n) != CorruptionKind::none, "config: observer noises must not be none");
  for (const auto& n : cfg.reproduce_distill_noises)
    require(corruption_kind_from_name(n) != CorruptionKind::none, "config: distill noises must not be none");
  return cfg;
}

/// Defaults <- file <- overrides; every key must be known.
inline ExperimentConfig load_config(const std::filesystem::path& path,
                                    const std::vector<std::string>& overrides = {}) {
  auto kv = detail::config_defaults();
  auto apply = [&](const std::map<std::string, std::string>& src, const std::string& origin) {
    for (const auto& [k, v] : src) {
      require(kv.count(k) > 0, origin + ": unknown key `" + k + "`");
      kv[k] = v;
    }
  };
  if (!path.empty()) apply(parse_kv_file(path), path.string());
  std::map<std::string, std::string> ov;
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    require(eq != std::string::npos && eq > 0, "override `" + item + "`: expected key=value");
    ov[item.substr(0, eq)] = item.substr(eq + 1);
  }
  apply(ov, "override");
  return materialize_config(kv);
}

}  // namespace segobs
