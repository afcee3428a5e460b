// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "segobs/tensor.hpp"

namespace segobs {

enum class CorruptionKind { none, glare, rain, patch, all };

inline const char* corruption_kind_name(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::none: return "none";
    case CorruptionKind::glare: return "glare";
    case CorruptionKind::rain: return "rain";
    case CorruptionKind::patch: return "patch";
    case CorruptionKind::all: return "all";
  }
  return "?";
}

inline CorruptionKind corruption_kind_from_name(const std::string& name) {
  if (name == "none") return CorruptionKind::none;
  if (name == "glare") return CorruptionKind::glare;
  if (name == "rain") return CorruptionKind::rain;
  if (name == "patch") return CorruptionKind::patch;
  if (name == "all") return CorruptionKind::all;
  fail("unknown corruption kind: " + name);
}

enum class PatchPalette { train, test };

/// Disjoint uniform-color palettes for occluding patches.
inline const float kPatchPaletteTrain[4][3] = {
    {0.00f, 0.00f, 1.00f},  // blue
    {1.00f, 0.00f, 1.00f},  // magenta
    {1.00f, 1.00f, 1.00f},  // white
    {0.25f, 0.88f, 0.82f},  // turquoise
};
inline const float kPatchPaletteTest[4][3] = {
    {0.00f, 0.00f, 0.00f},  // black
    {1.00f, 0.00f, 0.00f},  // red
    {0.00f, 1.00f, 0.00f},  // green
    {1.00f, 1.00f, 0.00f},  // yellow
};

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::none;

  // glare: brightened ellipse
  double glare_axis_min = 0.15;  // semi-axis as a fraction of the image dimension
  double glare_axis_max = 0.45;
  double glare_alpha = 0.9;

  // rain: grey 1-px streaks
  std::size_t rain_count_min = 20;
  std::size_t rain_count_max = 60;
  double rain_grey = 0.7;
  double rain_alpha = 0.8;
  double rain_angle_min_deg = 60.0;
  double rain_angle_max_deg = 120.0;

  // patch: uniform-color rectangles
  std::size_t patch_count_min = 1;
  std::size_t patch_count_max = 3;
  double patch_size_min = 0.10;  // side as a fraction of the image dimension
  double patch_size_max = 0.40;
  PatchPalette patch_palette = PatchPalette::train;

  void validate() const {
    require(glare_axis_min > 0 && glare_axis_min <= glare_axis_max, "CorruptionSpec: bad glare axis range");
    require(glare_alpha >= 0.0 && glare_alpha <= 1.0, "CorruptionSpec: glare alpha must be in [0,1]");
    require(rain_count_min <= rain_count_max, "CorruptionSpec: bad rain count range");
    require(rain_grey >= 0.0 && rain_grey <= 1.0, "CorruptionSpec: rain grey must be in [0,1]");
    require(rain_alpha >= 0.0 && rain_alpha <= 1.0, "CorruptionSpec: rain alpha must be in [0,1]");
    require(rain_angle_min_deg <= rain_angle_max_deg, "CorruptionSpec: bad rain angle range");
    require(patch_count_min <= patch_count_max, "CorruptionSpec: bad patch count range");
    require(patch_size_min > 0 && patch_size_min <= patch_size_max && patch_size_max <= 1.0,
            "CorruptionSpec: bad patch size range");
  }
};

struct CorruptionRecord {
  CorruptionKind kind = CorruptionKind::none;
  std::vector<std::uint8_t> mask;  // (H*W), 1 where the pixel value changed
  std::string params;              // realized draw, for logs and figures
};

namespace detail {

inline void check_image(const Tensor<float>& image) {
  require(image.rank() == 3 && image.dim(0) == 3, "corruption: expected (3,H,W) image, got " +
                                                      shape_str(image.shape()));
}

inline std::vector<std::uint8_t> changed_mask(const Tensor<float>& before, const Tensor<float>& after) {
  const std::size_t hw = before.dim(1) * before.dim(2);
  std::vector<std::uint8_t> mask(hw, 0);
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      if (before.data()[c * hw + i] != after.data()[c * hw + i]) {
        mask[i] = 1;
        break;
      }
  return mask;
}

}  // namespace detail

/// Brightness burst: inside a random rotated ellipse every channel is blended
/// toward white, out = (1-alpha)*in + alpha.
inline std::pair<Tensor<float>, CorruptionRecord> apply_glare(const Tensor<float>& image, const CorruptionSpec& spec,
                                                              Rng& rng) {
  detail::check_image(image);
  const std::size_t h = image.dim(1), w = image.dim(2), hw = h * w;
  const double cx = rng.uniform(0.0, 1.0) * w;
  const double cy = rng.uniform(0.0, 1.0) * h;
  const double ax = rng.uniform(spec.glare_axis_min, spec.glare_axis_max) * w;
  const double ay = rng.uniform(spec.glare_axis_min, spec.glare_axis_max) * h;
  const double theta = rng.uniform(0.0, 3.14159265358979323846);
  const double ct = std::cos(theta), st = std::sin(theta);
  const float alpha = static_cast<float>(spec.glare_alpha);

  Tensor<float> out = image.detached();
  std::vector<std::uint8_t> inside(hw, 0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double u = (dx * ct + dy * st) / ax;
      const double v = (-dx * st + dy * ct) / ay;
      if (u * u + v * v > 1.0) continue;
      inside[y * w + x] = 1;
      for (std::size_t c = 0; c < 3; ++c) {
        float& p = out.values()[c * hw + y * w + x];
        p = std::min(1.0f, (1.0f - alpha) * p + alpha);
      }
    }

  CorruptionRecord rec;
  rec.kind = CorruptionKind::glare;
  rec.mask = alpha > 0 ? detail::changed_mask(image, out) : inside;
  std::ostringstream ps;
  ps << "glare cx=" << cx << " cy=" << cy << " ax=" << ax << " ay=" << ay << " theta=" << theta
     << " alpha=" << spec.glare_alpha;
  rec.params = ps.str();
  return {std::move(out), std::move(rec)};
}

/// Grey streaks: N one-pixel-wide segments at steep angles, each covered pixel
/// blended once toward the grey level.
inline std::pair<Tensor<float>, CorruptionRecord> apply_rain(const Tensor<float>& image, const CorruptionSpec& spec,
                                                             Rng& rng) {
  detail::check_image(image);
  const std::size_t h = image.dim(1), w = image.dim(2), hw = h * w;
  const std::size_t n =
      spec.rain_count_min + rng.uniform_int(spec.rain_count_max - spec.rain_count_min + 1);
  std::vector<std::uint8_t> covered(hw, 0);
  constexpr double deg = 3.14159265358979323846 / 180.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = rng.uniform(0.0, 1.0) * w;
    const double y0 = rng.uniform(0.0, 1.0) * h;
    const double theta = rng.uniform(spec.rain_angle_min_deg, spec.rain_angle_max_deg) * deg;
    const double len = rng.uniform(0.3, 0.8) * h;
    const double dx = std::cos(theta), dy = std::sin(theta);
    const int steps = static_cast<int>(len);
    for (int t = 0; t <= steps; ++t) {
      const long x = std::lround(x0 + dx * t);
      const long y = std::lround(y0 + dy * t);
      if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h)) continue;
      covered[static_cast<std::size_t>(y) * w + x] = 1;
    }
  }

  Tensor<float> out = image.detached();
  const float alpha = static_cast<float>(spec.rain_alpha);
  const float grey = static_cast<float>(spec.rain_grey);
  for (std::size_t i = 0; i < hw; ++i) {
    if (!covered[i]) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      float& p = out.values()[c * hw + i];
      p = std::min(1.0f, std::max(0.0f, (1.0f - alpha) * p + alpha * grey));
    }
  }

  CorruptionRecord rec;
  rec.kind = CorruptionKind::rain;
  rec.mask = alpha > 0 ? detail::changed_mask(image, out) : covered;
  std::ostringstream ps;
  ps << "rain n=" << n << " grey=" << spec.rain_grey << " alpha=" << spec.rain_alpha;
  rec.params = ps.str();
  return {std::move(out), std::move(rec)};
}

/// Occluding rectangles filled with a uniform color from the selected palette.
inline std::pair<Tensor<float>, CorruptionRecord> apply_patch(const Tensor<float>& image, const CorruptionSpec& spec,
                                                              Rng& rng) {
  detail::check_image(image);
  const std::size_t h = image.dim(1), w = image.dim(2), hw = h * w;
  const auto* palette = spec.patch_palette == PatchPalette::train ? kPatchPaletteTrain : kPatchPaletteTest;
  const std::size_t k =
      spec.patch_count_min + rng.uniform_int(spec.patch_count_max - spec.patch_count_min + 1);

  Tensor<float> out = image.detached();
  std::ostringstream ps;
  ps << "patch k=" << k << " palette=" << (spec.patch_palette == PatchPalette::train ? "train" : "test");
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t pw = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                        std::lround(rng.uniform(spec.patch_size_min, spec.patch_size_max) * w)));
    const std::size_t ph = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                        std::lround(rng.uniform(spec.patch_size_min, spec.patch_size_max) * h)));
    const std::size_t x0 = rng.uniform_int(w - pw + 1);
    const std::size_t y0 = rng.uniform_int(h - ph + 1);
    const float* color = palette[rng.uniform_int(4)];
    for (std::size_t y = y0; y < y0 + ph; ++y)
      for (std::size_t x = x0; x < x0 + pw; ++x)
        for (std::size_t c = 0; c < 3; ++c) out.values()[c * hw + y * w + x] = color[c];
    ps << " rect" << i << "=(" << x0 << "," << y0 << "," << pw << "," << ph << ")";
  }

  CorruptionRecord rec;
  rec.kind = CorruptionKind::patch;
  rec.mask = detail::changed_mask(image, out);
  rec.params = ps.str();
  return {std::move(out), std::move(rec)};
}

/// kind=all: uniform choice among the three noises, then apply it.
inline std::pair<Tensor<float>, CorruptionRecord> sample_corruption(const Tensor<float>& image,
                                                                    const CorruptionSpec& spec, Rng& rng) {
  require(spec.kind == CorruptionKind::all, "sample_corruption: spec kind must be `all`, got " +
                                                std::string(corruption_kind_name(spec.kind)));
  CorruptionSpec chosen = spec;
  switch (rng.uniform_int(3)) {
    case 0: chosen.kind = CorruptionKind::glare; break;
    case 1: chosen.kind = CorruptionKind::rain; break;
    default: chosen.kind = CorruptionKind::patch; break;
  }
  switch (chosen.kind) {
    case CorruptionKind::glare: return apply_glare(image, chosen, rng);
    case CorruptionKind::rain: return apply_rain(image, chosen, rng);
    default: return apply_patch(image, chosen, rng);
  }
}

/// Generic dispatch, including the degenerate `none` (identity, empty mask).
inline std::pair<Tensor<float>, CorruptionRecord> apply_corruption(const Tensor<float>& image,
                                                                   const CorruptionSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case CorruptionKind::none: {
      CorruptionRecord rec;
      rec.kind = CorruptionKind::none;
      rec.mask.assign(image.dim(1) * image.dim(2), 0);
      rec.params = "none";
      return {image.detached(), std::move(rec)};
    }
    case CorruptionKind::glare: return apply_glare(image, spec, rng);
    case CorruptionKind::rain: return apply_rain(image, spec, rng);
    case CorruptionKind::patch: return apply_patch(image, spec, rng);
    case CorruptionKind::all: return sample_corruption(image, spec, rng);
  }
  fail("apply_corruption: unknown kind");
}

}  // namespace segobs
