// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>

#include "segobs/evaluation.hpp"
#include "segobs/optim.hpp"

namespace segobs {

/// Threshold and loss hyperparameters for the self-supervised certainty
/// labels. delta splits pixel pairs into certain (+1) / uncertain (-1).
struct SafetyConfig {
  double delta = 0.0;             // KL threshold; calibrate_delta picks a default
  double target_error_rate = 0.05;  // accepted pixels should err at most this often
  double margin = 2.0;            // hinge margin (nats) for the c=-1 branch
  std::size_t mc_passes = 50;     // T
  double kl_eps = 1e-8;

  void validate() const {
    require(delta >= 0.0, "SafetyConfig: delta must be non-negative");
    require(target_error_rate > 0.0 && target_error_rate < 1.0, "SafetyConfig: error rate must be in (0,1)");
    require(margin > 0.0, "SafetyConfig: margin must be positive");
    require(mc_passes >= 1, "SafetyConfig: T must be >= 1");
    require(kl_eps >= 0.0, "SafetyConfig: kl_eps must be non-negative");
  }
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 5;
  double base_lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;

  void validate() const {
    require(epochs >= 1, "TrainConfig: epochs must be positive");
    require(batch_size >= 1, "TrainConfig: batch size must be positive");
    require(base_lr > 0, "TrainConfig: learning rate must be positive");
  }
};

/// One training record per (clean image): the target's prediction, the
/// reference prediction, and the per-pixel certainty labels.
struct LabeledPair {
  Tensor<float> y_hat;
  Tensor<float> y_a;
  std::vector<std::int8_t> c;  // +1 / -1
  bool aleatoric = false;
  CorruptionRecord record;  // meaningful when aleatoric
};

struct TrainLogRow {
  std::size_t epoch;
  std::string split;
  double loss_epistemic = 0;
  double loss_aleatoric = 0;
  double loss_total = 0;
  double val_metric = 0;
  bool has_val = false;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::size_t best_epoch = 0;
  double best_val = 0;
  double seconds = 0;

  void write_csv(const std::filesystem::path& path) const {
    std::ofstream os(path);
    require(static_cast<bool>(os), "TrainLog: cannot open " + path.string());
    os << "epoch,split,loss_epistemic,loss_aleatoric,loss_total,val_metric\n";
    os.precision(8);
    for (const auto& r : rows) {
      os << r.epoch << "," << r.split << "," << r.loss_epistemic << "," << r.loss_aleatoric << "," << r.loss_total
         << ",";
      if (r.has_val) os << r.val_metric;
      os << "\n";
    }
  }
};

// rng substream tags
namespace rngtag {
inline constexpr std::uint64_t init = 1, order = 2, dropout = 3, mc = 4, noise = 5, val_noise = 6, calibrate = 7,
                               eval = 8;
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
  return idx;
}

inline std::vector<std::uint8_t> argmax_classes(const Tensor<float>& probs) {
  const std::size_t c = probs.dim(0), hw = probs.dim(1) * probs.dim(2);
  std::vector<std::uint8_t> out(hw);
  for (std::size_t i = 0; i < hw; ++i) {
    std::size_t best = 0;
    float bv = probs.data()[i];
    for (std::size_t ch = 1; ch < c; ++ch)
      if (probs.data()[ch * hw + i] > bv) {
        bv = probs.data()[ch * hw + i];
        best = ch;
      }
    out[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

/// Mean accuracy over non-void pixels, deterministic forwards.
inline double pixel_accuracy(SegModel<float>& model, const Dataset& ds, std::size_t jobs = 1) {
  std::vector<std::size_t> hit(ds.size(), 0), tot(ds.size(), 0);
  parallel_for(ds.size(), jobs, [&](std::size_t i) {
    NoGradGuard ng;
    auto pred = argmax_classes(model.forward(ds.images[i], ForwardOpts::eval()));
    std::size_t h = 0, t = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
      if (ds.labels[i][k] == kClassVoid) continue;
      ++t;
      h += pred[k] == ds.labels[i][k];
    }
    hit[i] = h;
    tot[i] = t;
  });
  std::size_t h = 0, t = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    h += hit[i];
    t += tot[i];
  }
  require(t > 0, "pixel_accuracy: no non-void pixels");
  return static_cast<double>(h) / static_cast<double>(t);
}

// ---- certainty labels and the observer objective ------------------------------

/// c = +1 where KL(y_hat || y_a) <= delta, else -1.
inline std::vector<std::int8_t> certainty_labels(const Tensor<float>& y_hat, const Tensor<float>& y_a, double delta,
                                                 double kl_eps = 1e-8) {
  require(delta >= 0.0, "certainty_labels: delta must be non-negative");
  NoGradGuard ng;
  auto kl = kl_divergence(y_hat, y_a, static_cast<float>(kl_eps));
  std::vector<std::int8_t> c(kl.size());
  for (std::size_t i = 0; i < kl.size(); ++i) c[i] = kl.data()[i] <= delta ? std::int8_t{1} : std::int8_t{-1};
  return c;
}

/// Mean over pixels of KL(y_hat||y_o) on c=+1 and of the hinge
/// max(0, margin - KL) on c=-1. y_hat is a constant.
inline Tensor<float> observer_loss(const Tensor<float>& y_hat, const Tensor<float>& y_o,
                                   const std::vector<std::int8_t>& c, double margin, double kl_eps = 1e-8) {
  require(margin > 0.0, "observer_loss: margin must be positive");
  const Tensor<float> y_ref = y_hat.requires_grad() ? y_hat.detached() : y_hat;
  auto kl = kl_divergence(y_ref, y_o, static_cast<float>(kl_eps));
  require(c.size() == kl.size(), "observer_loss: label map size mismatch");
  Tensor<float> pos(kl.shape()), neg(kl.shape());
  for (std::size_t i = 0; i < c.size(); ++i) {
    pos.values()[i] = c[i] > 0 ? 1.0f : 0.0f;
    neg.values()[i] = c[i] > 0 ? 0.0f : 1.0f;
  }
  auto hinge = relu_map(add_scalar(scale(kl, -1.0f), static_cast<float>(margin)));
  return mean(add(mul(pos, kl), mul(neg, hinge)));
}

// ---- pair construction ---------------------------------------------------------

/// Epistemic pair on a clean image: y_hat is the single deterministic
/// forward, y_a the mean of T dropout passes.
inline std::pair<Tensor<float>, Tensor<float>> epistemic_pair(SegModel<float>& target, const Tensor<float>& image,
                                                              const SafetyConfig& cfg, Rng& rng) {
  NoGradGuard ng;
  auto y_hat = target.forward(image, ForwardOpts::eval());
  auto y_a = mc_dropout_mean(target, image, cfg.mc_passes, rng);
  return {std::move(y_hat), std::move(y_a)};
}

struct AleatoricPair {
  Tensor<float> y_hat;  // forward on the corrupted image
  Tensor<float> y_a;    // forward on the clean image
  Tensor<float> noisy_image;
  CorruptionRecord record;
};

/// Aleatoric pair: corrupt the image, run both forwards deterministically.
inline AleatoricPair aleatoric_pair(SegModel<float>& target, const Tensor<float>& image, const CorruptionSpec& spec,
                                    Rng& rng) {
  require(spec.kind != CorruptionKind::none, "aleatoric_pair: corruption kind must not be `none`");
  NoGradGuard ng;
  auto [noisy, rec] = apply_corruption(image, spec, rng);
  AleatoricPair out;
  out.y_hat = target.forward(noisy, ForwardOpts::eval());
  out.y_a = target.forward(image, ForwardOpts::eval());
  out.noisy_image = std::move(noisy);
  out.record = std::move(rec);
  return out;
}

// ---- per-image caches ----------------------------------------------------------

/// Deterministic per-image reference signals for a frozen target: the clean
/// forward and the T-pass dropout mean (which doubles as the distillation
/// teacher signal). Computed once per dataset.
struct McCache {
  std::vector<Tensor<float>> clean_probs;
  std::vector<Tensor<float>> mc_mean;
};

inline McCache build_mc_cache(SegModel<float>& target, const Dataset& ds, std::size_t t_passes, std::uint64_t seed,
                              std::size_t jobs = 1) {
  McCache cache;
  cache.clean_probs.resize(ds.size());
  cache.mc_mean.resize(ds.size());
  parallel_for(ds.size(), jobs, [&](std::size_t i) {
    NoGradGuard ng;
    cache.clean_probs[i] = target.forward(ds.images[i], ForwardOpts::eval());
    Rng rng(derive_seed(seed, {rngtag::mc, i}));
    cache.mc_mean[i] = mc_dropout_mean(target, ds.images[i], t_passes, rng);
  });
  return cache;
}

/// Smallest KL value whose quantile over clean-validation epistemic KL equals
/// the target's non-void validation accuracy: ties the +1 mass to the
/// accuracy the network can actually deliver.
inline double calibrate_delta(SegModel<float>& target, const Dataset& val, const McCache& val_cache,
                              double kl_eps = 1e-8, std::size_t jobs = 1) {
  require(val.size() > 0 && val_cache.mc_mean.size() == val.size(), "calibrate_delta: cache mismatch");
  const double acc = pixel_accuracy(target, val, jobs);
  std::vector<double> kls;
  kls.reserve(val.size() * val.height * val.width);
  NoGradGuard ng;
  for (std::size_t i = 0; i < val.size(); ++i) {
    auto kl = kl_divergence(val_cache.clean_probs[i], val_cache.mc_mean[i], static_cast<float>(kl_eps));
    for (std::size_t k = 0; k < kl.size(); ++k) kls.push_back(kl.data()[k]);
  }
  std::sort(kls.begin(), kls.end());
  const std::size_t n = kls.size();
  std::size_t idx = static_cast<std::size_t>(std::ceil(acc * static_cast<double>(n)));
  idx = std::min(n - 1, idx > 0 ? idx - 1 : 0);
  return kls[idx];
}

// ---- training loops ------------------------------------------------------------

namespace detail {

template <typename S>
std::vector<std::vector<S>> snapshot_state(SegModel<S>& m) {
  std::vector<std::vector<S>> snap;
  for (auto& [name, vec] : m.named_state()) snap.push_back(*vec);
  return snap;
}

template <typename S>
void restore_state(SegModel<S>& m, const std::vector<std::vector<S>>& snap) {
  auto state = m.named_state();
  require(state.size() == snap.size(), "restore_state: size mismatch");
  for (std::size_t i = 0; i < snap.size(); ++i) *state[i].second = snap[i];
}

}  // namespace detail

struct TargetTrainResult {
  SegModel<float> model;
  TrainLog log;
};

/// Cross-entropy training of the segmentation target with dropout active,
/// the staged lr schedule, and best-validation-accuracy checkpointing.
inline TargetTrainResult train_target(const Dataset& train, const Dataset& val, const ArchConfig& arch,
                                      const TrainConfig& cfg, std::size_t jobs = 1) {
  cfg.validate();
  require(train.size() > 0 && val.size() > 0, "train_target: empty dataset");
  const auto t0 = std::chrono::steady_clock::now();

  Rng init_rng(derive_seed(cfg.seed, {rngtag::init}));
  TargetTrainResult out{build_target<float>(arch, init_rng), {}};
  SegModel<float>& model = out.model;
  auto params = model.parameters();
  OptimizerState<float> opt(static_cast<float>(cfg.base_lr), static_cast<float>(cfg.momentum),
                            static_cast<float>(cfg.weight_decay));

  auto best = detail::snapshot_state(model);
  double best_acc = -1.0;
  std::size_t best_epoch = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.lr = static_cast<float>(lr_schedule(cfg.base_lr, static_cast<long>(epoch)));
    opt.epoch = static_cast<long>(epoch);
    Rng order_rng(derive_seed(cfg.seed, {rngtag::order, epoch}));
    const auto order = shuffled_indices(train.size(), order_rng);

    double epoch_loss = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t b_end = std::min(order.size(), b + cfg.batch_size);
      const float inv_batch = 1.0f / static_cast<float>(b_end - b);
      model.zero_grad();
      for (std::size_t k = b; k < b_end; ++k) {
        const std::size_t idx = order[k];
        Rng drop_rng(derive_seed(cfg.seed, {rngtag::dropout, epoch, idx}));
        auto probs = model.forward(train.images[idx], ForwardOpts::train(), &drop_rng);
        auto loss = cross_entropy_loss(probs, std::span<const std::uint8_t>(train.labels[idx]), kClassVoid);
        epoch_loss += loss.item();
        backward(scale(loss, inv_batch));
      }
      sgd_step(opt, params);
    }
    epoch_loss /= static_cast<double>(train.size());

    const double acc = pixel_accuracy(model, val, jobs);
    out.log.rows.push_back({epoch, "train", 0, 0, epoch_loss, 0, false});
    out.log.rows.push_back({epoch, "val", 0, 0, 0, acc, true});
    if (acc > best_acc) {
      best_acc = acc;
      best_epoch = epoch;
      best = detail::snapshot_state(model);
    }
  }

  detail::restore_state(model, best);
  out.log.best_epoch = best_epoch;
  out.log.best_val = best_acc;
  out.log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

struct ObserverTrainResult {
  ObserverModel<float> model;
  TrainLog log;
  double delta = 0;
  std::map<std::string, std::size_t> noise_counts;  // realized aleatoric kinds
};

namespace detail {

/// Pooled clean+corrupted validation AuPR of the observer score against the
/// target's correctness; used for best-checkpoint selection.
inline double observer_val_aupr(SegModel<float>& target, ObserverModel<float>& obs, const Dataset& val,
                                const std::vector<Tensor<float>>& val_noisy, double kl_eps, std::size_t jobs) {
  struct PerImage {
    std::vector<double> scores;
    std::vector<std::uint8_t> correct;
  };
  const bool with_noise = !val_noisy.empty();
  std::vector<PerImage> parts(val.size());
  parallel_for(val.size(), jobs, [&](std::size_t i) {
    NoGradGuard ng;
    PerImage pi;
    auto add_split = [&](const Tensor<float>& image) {
      auto [y_hat, taps] = forward_with_taps(target, image, false);
      auto y_o = observer_forward(obs, image, taps);
      auto s = score_observer(y_hat, y_o, kl_eps);
      auto pred = argmax_classes(y_hat);
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (val.labels[i][k] == kClassVoid) continue;
        pi.scores.push_back(s[k]);
        pi.correct.push_back(pred[k] == val.labels[i][k]);
      }
    };
    add_split(val.images[i]);
    if (with_noise) add_split(val_noisy[i]);
    parts[i] = std::move(pi);
  });
  ScoredPixelSet pool;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (std::size_t k = 0; k < parts[i].scores.size(); ++k) {
      pool.scores.push_back(parts[i].scores[k]);
      pool.correct.push_back(parts[i].correct[k]);
      pool.image_index.push_back(static_cast<std::uint32_t>(i));
    }
  }
  return aupr(pr_curve(pool));
}

}  // namespace detail

/// Observer training against a frozen target: per image, an epistemic pair on
/// the clean input (cached dropout mean as the reference) and an aleatoric
/// pair on a freshly corrupted copy; loss is the sum of both branches.
inline ObserverTrainResult train_observer(SegModel<float>& target, const Dataset& train, const Dataset& val,
                                          const SafetyConfig& safety, const TrainConfig& cfg,
                                          const CorruptionSpec& corruption, const McCache& train_cache,
                                          std::size_t jobs = 1) {
  safety.validate();
  cfg.validate();
  require(train_cache.mc_mean.size() == train.size(), "train_observer: cache does not match the dataset");
  const auto t0 = std::chrono::steady_clock::now();
  const float kl_eps = static_cast<float>(safety.kl_eps);

  ObserverTrainResult out{build_observer(target.cfg, target), {}, safety.delta, {}};
  ObserverModel<float>& obs = out.model;
  auto params = obs.parameters();
  OptimizerState<float> opt(static_cast<float>(cfg.base_lr), static_cast<float>(cfg.momentum),
                            static_cast<float>(cfg.weight_decay));

  const bool with_noise = corruption.kind != CorruptionKind::none;
  // fixed corrupted validation copies so the selection metric is comparable across epochs
  std::vector<Tensor<float>> val_noisy;
  if (with_noise) {
    val_noisy.resize(val.size());
    for (std::size_t i = 0; i < val.size(); ++i) {
      Rng rng(derive_seed(cfg.seed, {rngtag::val_noise, i}));
      val_noisy[i] = apply_corruption(val.images[i], corruption, rng).first;
    }
  }

  auto best = detail::snapshot_state(obs.stack);
  double best_metric = -1.0;
  std::size_t best_epoch = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.lr = static_cast<float>(lr_schedule(cfg.base_lr, static_cast<long>(epoch)));
    Rng order_rng(derive_seed(cfg.seed, {rngtag::order, epoch}));
    const auto order = shuffled_indices(train.size(), order_rng);

    double epoch_epi = 0, epoch_alea = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t b_end = std::min(order.size(), b + cfg.batch_size);
      const float inv_batch = 1.0f / static_cast<float>(b_end - b);
      obs.zero_grad();
      for (std::size_t k = b; k < b_end; ++k) {
        const std::size_t idx = order[k];
        Rng drop_rng(derive_seed(cfg.seed, {rngtag::dropout, epoch, idx}));

        // epistemic branch (clean image, cached dropout mean as reference)
        Tensor<float> y_hat_clean;
        std::vector<Tensor<float>> taps_clean;
        {
          NoGradGuard ng;
          auto [p, t] = forward_with_taps(target, train.images[idx], false);
          y_hat_clean = std::move(p);
          taps_clean = std::move(t);
        }
        const auto c_epi = certainty_labels(y_hat_clean, train_cache.mc_mean[idx], safety.delta, kl_eps);
        auto y_o = observer_forward(obs, train.images[idx], taps_clean, ForwardOpts::train(), &drop_rng);
        auto loss_epi = observer_loss(y_hat_clean, y_o, c_epi, safety.margin, kl_eps);
        epoch_epi += loss_epi.item();
        Tensor<float> total = loss_epi;

        // aleatoric branch (fresh corruption per epoch)
        if (with_noise) {
          Rng noise_rng(derive_seed(cfg.seed, {rngtag::noise, epoch, idx}));
          Tensor<float> noisy, y_hat_noisy;
          std::vector<Tensor<float>> taps_noisy;
          {
            NoGradGuard ng;
            auto [ni, rec] = apply_corruption(train.images[idx], corruption, noise_rng);
            noisy = std::move(ni);
            ++out.noise_counts[corruption_kind_name(rec.kind)];
            auto [p, t] = forward_with_taps(target, noisy, false);
            y_hat_noisy = std::move(p);
            taps_noisy = std::move(t);
          }
          const auto c_alea = certainty_labels(y_hat_noisy, y_hat_clean, safety.delta, kl_eps);
          auto y_o2 = observer_forward(obs, noisy, taps_noisy, ForwardOpts::train(), &drop_rng);
          auto loss_alea = observer_loss(y_hat_noisy, y_o2, c_alea, safety.margin, kl_eps);
          epoch_alea += loss_alea.item();
          total = add(total, loss_alea);
        }
        backward(scale(total, inv_batch));
      }
      sgd_step(opt, params);
    }

    const double metric = detail::observer_val_aupr(target, obs, val, val_noisy, safety.kl_eps, jobs);
    out.log.rows.push_back({epoch, "train", epoch_epi / train.size(), epoch_alea / train.size(),
                            (epoch_epi + epoch_alea) / train.size(), 0, false});
    out.log.rows.push_back({epoch, "val", 0, 0, 0, metric, true});
    if (metric > best_metric) {
      best_metric = metric;
      best_epoch = epoch;
      best = detail::snapshot_state(obs.stack);
    }
  }

  detail::restore_state(obs.stack, best);
  out.log.best_epoch = best_epoch;
  out.log.best_val = best_metric;
  out.log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

enum class DistillMode { supervised, unsupervised };

struct DistillTrainResult {
  SegModel<float> model;
  TrainLog log;
};

/// Dropout-distillation baseline: the student regresses the teacher's cached
/// dropout mean computed on the clean image while seeing the (optionally
/// corrupted) input; the supervised variant adds ground-truth cross-entropy.
inline DistillTrainResult train_distilled(SegModel<float>& teacher, const Dataset& train, const Dataset& val,
                                          DistillMode mode, const CorruptionSpec& corruption, const TrainConfig& cfg,
                                          const McCache& train_cache, const McCache& val_cache,
                                          bool init_from_teacher = true, std::size_t jobs = 1) {
  cfg.validate();
  require(train_cache.mc_mean.size() == train.size(), "train_distilled: cache does not match the dataset");
  require(val_cache.mc_mean.size() == val.size(), "train_distilled: val cache does not match");
  const auto t0 = std::chrono::steady_clock::now();
  constexpr float kl_eps = 1e-8f;

  DistillTrainResult out;
  {
    Rng init_rng(derive_seed(cfg.seed, {rngtag::init}));
    out.model = build_target<float>(teacher.cfg, init_rng);
    if (init_from_teacher) {
      auto src = teacher.named_state();
      auto dst = out.model.named_state();
      for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = *src[i].second;
    }
  }
  SegModel<float>& student = out.model;
  auto params = student.parameters();
  OptimizerState<float> opt(static_cast<float>(cfg.base_lr), static_cast<float>(cfg.momentum),
                            static_cast<float>(cfg.weight_decay));

  const bool with_noise = corruption.kind != CorruptionKind::none;
  std::vector<Tensor<float>> val_inputs(val.size());
  for (std::size_t i = 0; i < val.size(); ++i) {
    if (with_noise) {
      Rng rng(derive_seed(cfg.seed, {rngtag::val_noise, i}));
      val_inputs[i] = apply_corruption(val.images[i], corruption, rng).first;
    } else {
      val_inputs[i] = val.images[i];
    }
  }

  auto best = detail::snapshot_state(student);
  double best_metric = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.lr = static_cast<float>(lr_schedule(cfg.base_lr, static_cast<long>(epoch)));
    Rng order_rng(derive_seed(cfg.seed, {rngtag::order, epoch}));
    const auto order = shuffled_indices(train.size(), order_rng);

    double epoch_distill = 0, epoch_ce = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t b_end = std::min(order.size(), b + cfg.batch_size);
      const float inv_batch = 1.0f / static_cast<float>(b_end - b);
      student.zero_grad();
      for (std::size_t k = b; k < b_end; ++k) {
        const std::size_t idx = order[k];
        Tensor<float> input = train.images[idx];
        if (with_noise) {
          Rng noise_rng(derive_seed(cfg.seed, {rngtag::noise, epoch, idx}));
          input = apply_corruption(train.images[idx], corruption, noise_rng).first;
        }
        Rng drop_rng(derive_seed(cfg.seed, {rngtag::dropout, epoch, idx}));
        auto s_probs = student.forward(input, ForwardOpts::train(), &drop_rng);
        auto loss = mean(kl_divergence(train_cache.mc_mean[idx], s_probs, kl_eps));
        epoch_distill += loss.item();
        if (mode == DistillMode::supervised) {
          auto ce = cross_entropy_loss(s_probs, std::span<const std::uint8_t>(train.labels[idx]), kClassVoid);
          epoch_ce += ce.item();
          loss = add(loss, ce);
        }
        backward(scale(loss, inv_batch));
      }
      sgd_step(opt, params);
    }

    // validation loss on fixed inputs, deterministic student forward
    std::vector<double> val_losses(val.size());
    parallel_for(val.size(), jobs, [&](std::size_t i) {
      NoGradGuard ng;
      auto s_probs = student.forward(val_inputs[i], ForwardOpts::eval());
      double l = mean(kl_divergence(val_cache.mc_mean[i], s_probs, kl_eps)).item();
      if (mode == DistillMode::supervised)
        l += cross_entropy_loss(s_probs, std::span<const std::uint8_t>(val.labels[i]), kClassVoid).item();
      val_losses[i] = l;
    });
    double val_loss = 0;
    for (double l : val_losses) val_loss += l;
    val_loss /= static_cast<double>(val.size());

    out.log.rows.push_back({epoch, "train", epoch_distill / train.size(), epoch_ce / train.size(),
                            (epoch_distill + epoch_ce) / train.size(), 0, false});
    out.log.rows.push_back({epoch, "val", 0, 0, 0, val_loss, true});
    if (val_loss < best_metric) {
      best_metric = val_loss;
      best_epoch = epoch;
      best = detail::snapshot_state(student);
    }
  }

  detail::restore_state(student, best);
  out.log.best_epoch = best_epoch;
  out.log.best_val = best_metric;
  out.log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace segobs
