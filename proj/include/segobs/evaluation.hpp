// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <numeric>

#include "segobs/corruptions.hpp"
#include "segobs/models.hpp"
#include "segobs/scenes.hpp"

namespace segobs {

// ---- safety metrics ----------------------------------------------------------
//
// Positive class = "the target's prediction is correct", scored by certainty:
// a pixel is accepted when its uncertainty score is <= the threshold.

struct ScoredPixelSet {
  std::vector<double> scores;          // higher = more uncertain
  std::vector<std::uint8_t> correct;   // 1 when target prediction == ground truth
  std::vector<std::uint32_t> image_index;

  void validate() const {
    require(scores.size() == correct.size() && scores.size() == image_index.size(),
            "ScoredPixelSet: array lengths differ");
    require(!scores.empty(), "ScoredPixelSet: empty");
    for (double s : scores) require(std::isfinite(s), "ScoredPixelSet: non-finite score");
  }
};

struct PRPoint {
  double threshold;
  double precision;
  double recall;
};

struct PRCurve {
  std::vector<PRPoint> points;  // sorted by threshold ascending; ties share a threshold
  std::size_t total = 0;
  std::size_t total_correct = 0;
};

/// Sweeps every distinct score value as an acceptance threshold
/// (accept iff score <= t). Precision = accuracy among accepted pixels,
/// recall = accepted-and-correct / total-correct.
inline PRCurve pr_curve(const ScoredPixelSet& s) {
  s.validate();
  const std::size_t n = s.scores.size();
  std::size_t total_correct = 0;
  for (auto c : s.correct) total_correct += c != 0;
  require(total_correct > 0, "pr_curve: no correct pixel in the set");

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return s.scores[a] < s.scores[b]; });

  PRCurve curve;
  curve.total = n;
  curve.total_correct = total_correct;
  std::size_t accepted = 0, accepted_correct = 0;
  for (std::size_t i = 0; i < n;) {
    const double t = s.scores[order[i]];
    while (i < n && s.scores[order[i]] == t) {  // a tie block is accepted as a whole
      accepted += 1;
      accepted_correct += s.correct[order[i]] != 0;
      ++i;
    }
    curve.points.push_back({t, static_cast<double>(accepted_correct) / static_cast<double>(accepted),
                            static_cast<double>(accepted_correct) / static_cast<double>(total_correct)});
  }
  return curve;
}

/// Max recall over operating points with precision >= p; 0 when unreachable.
inline double recall_at_precision(const PRCurve& curve, double p = 0.95) {
  double best = 0.0;
  for (const auto& pt : curve.points)
    if (pt.precision >= p) best = std::max(best, pt.recall);
  return best;
}

/// Area under precision as a step function of recall (precision held
/// right-constant between achieved recalls).
inline double aupr(const PRCurve& curve) {
  double area = 0.0, prev_recall = 0.0;
  for (const auto& pt : curve.points) {
    area += (pt.recall - prev_recall) * pt.precision;
    prev_recall = pt.recall;
  }
  return area;
}

/// Greedy per-image coverage: rank pixels by score ascending (ties broken by
/// pixel order) and return the largest prefix fraction whose accuracy >= p.
inline double image_coverage(std::span<const double> scores, std::span<const std::uint8_t> correct,
                             double p = 0.95) {
  require(!scores.empty() && scores.size() == correct.size(), "image_coverage: bad input");
  const std::size_t n = scores.size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return scores[a] < scores[b]; });
  std::size_t best = 0, good = 0;
  for (std::size_t k = 0; k < n; ++k) {
    good += correct[order[k]] != 0;
    if (static_cast<double>(good) >= p * static_cast<double>(k + 1)) best = k + 1;
  }
  return static_cast<double>(best) / static_cast<double>(n);
}

/// Fraction of images whose coverage reaches at least x.
inline double trigger_rate(const std::vector<double>& coverages, double x) {
  require(!coverages.empty(), "trigger_rate: empty coverage list");
  std::size_t hits = 0;
  for (double c : coverages) hits += c >= x;
  return static_cast<double>(hits) / static_cast<double>(coverages.size());
}

// ---- uncertainty scoring -----------------------------------------------------

enum class Method { softmax, void_class, mc_dropout, mcda, observer, distilled };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::softmax: return "softmax";
    case Method::void_class: return "void";
    case Method::mc_dropout: return "mc_dropout";
    case Method::mcda: return "mcda";
    case Method::observer: return "observer";
    case Method::distilled: return "distilled";
  }
  return "?";
}

/// One minus the maximum class probability, per pixel.
inline std::vector<double> score_softmax(const Tensor<float>& y_hat) {
  const std::size_t c = y_hat.dim(0), hw = y_hat.dim(1) * y_hat.dim(2);
  std::vector<double> out(hw);
  for (std::size_t i = 0; i < hw; ++i) {
    float mx = y_hat.data()[i];
    for (std::size_t ch = 1; ch < c; ++ch) mx = std::max(mx, y_hat.data()[ch * hw + i]);
    out[i] = 1.0 - static_cast<double>(mx);
  }
  return out;
}

/// Predicted probability of the void/unknown class (channel 0).
inline std::vector<double> score_void_class(const Tensor<float>& y_hat) {
  const std::size_t hw = y_hat.dim(1) * y_hat.dim(2);
  std::vector<double> out(hw);
  for (std::size_t i = 0; i < hw; ++i) out[i] = static_cast<double>(y_hat.data()[i]);
  return out;
}

/// Per-pixel entropy of a probability map (mc-dropout mean, mcda mean, or a
/// distillation student output).
inline std::vector<double> score_entropy(const Tensor<float>& probs) {
  const auto e = entropy_map(probs);
  return std::vector<double>(e.begin(), e.end());
}

/// KL(y_hat || y_o) between the target's prediction and the observer output.
inline std::vector<double> score_observer(const Tensor<float>& y_hat, const Tensor<float>& y_o, double kl_eps) {
  NoGradGuard ng;
  auto k = kl_divergence(y_hat, y_o, static_cast<float>(kl_eps));
  std::vector<double> out(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) out[i] = static_cast<double>(k.data()[i]);
  return out;
}

namespace detail {

inline Tensor<float> flip_lr(const Tensor<float>& t) {
  const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2), hw = h * w;
  Tensor<float> out(t.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.values()[ch * hw + y * w + x] = t.data()[ch * hw + y * w + (w - 1 - x)];
  return out;
}

/// Shift by (dx,dy) with replicated borders.
inline Tensor<float> translate(const Tensor<float>& t, long dx, long dy) {
  const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2), hw = h * w;
  Tensor<float> out(t.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const long sy = std::clamp<long>(static_cast<long>(y) - dy, 0, static_cast<long>(h) - 1);
        const long sx = std::clamp<long>(static_cast<long>(x) - dx, 0, static_cast<long>(w) - 1);
        out.values()[ch * hw + y * w + x] = t.data()[ch * hw + sy * w + sx];
      }
  return out;
}

}  // namespace detail

/// Test-time augmentation mean: per pass a random flip, +-2px translation
/// (inversely remapped afterwards) and brightness scaling in [0.9,1.1].
inline Tensor<float> mcda_mean(SegModel<float>& model, const Tensor<float>& image, std::size_t t_passes, Rng& rng) {
  require(t_passes >= 1, "mcda_mean: T must be >= 1");
  NoGradGuard ng;
  std::vector<double> acc(model.cfg.num_classes * model.cfg.height * model.cfg.width, 0.0);
  for (std::size_t t = 0; t < t_passes; ++t) {
    const bool flip = rng.bernoulli(0.5);
    const long dx = static_cast<long>(rng.uniform_int(5)) - 2;
    const long dy = static_cast<long>(rng.uniform_int(5)) - 2;
    const float gain = static_cast<float>(rng.uniform(0.9, 1.1));

    Tensor<float> aug = image.detached();
    for (auto& v : aug.values()) v = std::min(1.0f, std::max(0.0f, v * gain));
    if (flip) aug = detail::flip_lr(aug);
    aug = detail::translate(aug, dx, dy);

    Tensor<float> probs = model.forward(aug, ForwardOpts::eval());
    probs = detail::translate(probs, -dx, -dy);
    if (flip) probs = detail::flip_lr(probs);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(probs.data()[i]);
  }
  Tensor<float> out(Shape{model.cfg.num_classes, model.cfg.height, model.cfg.width});
  const double inv = 1.0 / static_cast<double>(t_passes);
  for (std::size_t i = 0; i < acc.size(); ++i) out.values()[i] = static_cast<float>(acc[i] * inv);
  // renormalise: replicated borders can leave pixels slightly off unit mass
  const std::size_t c = model.cfg.num_classes, hw = model.cfg.height * model.cfg.width;
  for (std::size_t i = 0; i < hw; ++i) {
    float s = 0;
    for (std::size_t ch = 0; ch < c; ++ch) s += out.values()[ch * hw + i];
    if (s > 0)
      for (std::size_t ch = 0; ch < c; ++ch) out.values()[ch * hw + i] /= s;
  }
  return out;
}

struct ScoreOpts {
  std::size_t t_passes = 50;
  double kl_eps = 1e-8;
};

/// Unified per-pixel uncertainty scoring. `y_hat`/`taps` are the target's
/// deterministic forward on this image; the observer and student are only
/// consulted by their methods. Returns an (H*W) map, higher = more uncertain.
inline std::vector<double> score_method(Method method, SegModel<float>& target, ObserverModel<float>* observer,
                                        SegModel<float>* student, const Tensor<float>& image,
                                        const Tensor<float>& y_hat, const std::vector<Tensor<float>>& taps,
                                        const ScoreOpts& opts, Rng& rng) {
  NoGradGuard ng;
  switch (method) {
    case Method::softmax: return score_softmax(y_hat);
    case Method::void_class: return score_void_class(y_hat);
    case Method::mc_dropout: return score_entropy(mc_dropout_mean(target, image, opts.t_passes, rng));
    case Method::mcda: return score_entropy(mcda_mean(target, image, opts.t_passes, rng));
    case Method::observer: {
      require(observer != nullptr, "score_method: observer model missing");
      auto y_o = observer_forward(*observer, image, taps);
      return score_observer(y_hat, y_o, opts.kl_eps);
    }
    case Method::distilled: {
      require(student != nullptr, "score_method: student model missing");
      auto probs = student->forward(image, ForwardOpts::eval());
      return score_entropy(probs);
    }
  }
  fail("score_method: unknown method");
}

/// Deterministic forward passes charged per image by each method.
inline std::size_t forward_passes_per_image(Method method, std::size_t t_passes) {
  switch (method) {
    case Method::softmax:
    case Method::void_class:
      return 1;
    case Method::mc_dropout:
    case Method::mcda:
      return t_passes;
    case Method::observer:
      return 2;  // target + observer
    case Method::distilled:
      return 1;  // student only scores; the target's pass is shared
  }
  return 0;
}

// ---- map rendering -----------------------------------------------------------

enum class MapKind { uncertainty, safety, labels };

/// uncertainty: per-image normalised greyscale. safety: class-colored
/// prediction with rejected pixels overlaid (black = correct-rejected,
/// red = incorrect-rejected). labels: blue for c=+1, red for c=-1.
inline Tensor<float> render_map(MapKind kind, std::size_t h, std::size_t w, const std::vector<double>* scores,
                                const std::vector<std::uint8_t>* predicted, const std::vector<std::uint8_t>* correct,
                                const std::vector<std::int8_t>* c_labels, double precision = 0.95) {
  Tensor<float> img(Shape{3, h, w});
  const std::size_t hw = h * w;
  switch (kind) {
    case MapKind::uncertainty: {
      require(scores && scores->size() == hw, "render_map: uncertainty needs scores");
      double lo = (*scores)[0], hi = (*scores)[0];
      for (double s : *scores) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
      }
      for (std::size_t i = 0; i < hw; ++i) {
        const float g = hi > lo ? static_cast<float>(((*scores)[i] - lo) / (hi - lo)) : 0.5f;
        img.values()[i] = img.values()[hw + i] = img.values()[2 * hw + i] = g;
      }
      break;
    }
    case MapKind::safety: {
      require(scores && predicted && correct, "render_map: safety needs scores/predictions/correctness");
      require(scores->size() == hw && predicted->size() == hw && correct->size() == hw, "render_map: size mismatch");
      const double cov = image_coverage(*scores, *correct, precision);
      const auto accepted_count = static_cast<std::size_t>(std::llround(cov * static_cast<double>(hw)));
      std::vector<std::uint32_t> order(hw);
      std::iota(order.begin(), order.end(), 0u);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return (*scores)[a] < (*scores)[b]; });
      std::vector<std::uint8_t> accepted(hw, 0);
      for (std::size_t k = 0; k < accepted_count; ++k) accepted[order[k]] = 1;
      for (std::size_t i = 0; i < hw; ++i) {
        float r, g, b;
        if (accepted[i]) {
          const auto cls = std::min<std::size_t>((*predicted)[i], kNumClasses - 1);
          r = kClassPalette[cls][0];
          g = kClassPalette[cls][1];
          b = kClassPalette[cls][2];
        } else if ((*correct)[i]) {
          r = g = b = 0.0f;  // correct but rejected
        } else {
          r = 0.85f;  // incorrect and rejected
          g = b = 0.05f;
        }
        img.values()[i] = r;
        img.values()[hw + i] = g;
        img.values()[2 * hw + i] = b;
      }
      break;
    }
    case MapKind::labels: {
      require(c_labels && c_labels->size() == hw, "render_map: labels need a c map");
      for (std::size_t i = 0; i < hw; ++i) {
        const bool pos = (*c_labels)[i] > 0;
        img.values()[i] = pos ? 0.10f : 0.85f;
        img.values()[hw + i] = 0.10f;
        img.values()[2 * hw + i] = pos ? 0.85f : 0.10f;
      }
      break;
    }
  }
  return img;
}

// ---- PR curve files ------------------------------------------------------------

inline void write_pr_csv(const std::filesystem::path& path, const PRCurve& curve) {
  std::ofstream os(path);
  require(static_cast<bool>(os), "write_pr_csv: cannot open " + path.string());
  os << "threshold,precision,recall\n";
  os.setf(std::ios::fmtflags(0), std::ios::floatfield);
  os.precision(10);
  for (const auto& p : curve.points) os << p.threshold << "," << p.precision << "," << p.recall << "\n";
}

/// Minimal self-contained SVG line plot of precision vs recall.
inline void write_pr_svg(const std::filesystem::path& path, const PRCurve& curve, const std::string& title) {
  const double W = 480, H = 360, ml = 50, mb = 40, mt = 30, mr = 15;
  const double pw = W - ml - mr, ph = H - mt - mb;
  std::ofstream os(path);
  require(static_cast<bool>(os), "write_pr_svg: cannot open " + path.string());
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "' viewBox='0 0 " << W << " "
     << H << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << W / 2 << "' y='18' text-anchor='middle' font-size='13' font-family='sans-serif'>" << title
     << "</text>\n";
  os << "<rect x='" << ml << "' y='" << mt << "' width='" << pw << "' height='" << ph
     << "' fill='none' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double frac = i / 4.0;
    const double x = ml + frac * pw, y = mt + ph - frac * ph;
    os << "<text x='" << x << "' y='" << H - mb + 16 << "' text-anchor='middle' font-size='10'>" << frac << "</text>\n";
    os << "<text x='" << ml - 8 << "' y='" << y + 3 << "' text-anchor='end' font-size='10'>" << frac << "</text>\n";
  }
  os << "<text x='" << ml + pw / 2 << "' y='" << H - 8 << "' text-anchor='middle' font-size='11'>recall</text>\n";
  os << "<text x='14' y='" << mt + ph / 2 << "' text-anchor='middle' font-size='11' transform='rotate(-90 14 "
     << mt + ph / 2 << ")'>precision</text>\n";
  os << "<polyline fill='none' stroke='#2a7f2a' stroke-width='1.5' points='";
  for (const auto& p : curve.points) {
    const double x = ml + p.recall * pw;
    const double y = mt + ph - p.precision * ph;
    os << x << "," << y << " ";
  }
  os << "'/>\n</svg>\n";
}

}  // namespace segobs
