// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>

#include "segobs/io.hpp"

namespace segobs {

// class indices
inline constexpr std::uint8_t kClassVoid = 0;
inline constexpr std::uint8_t kClassSky = 1;
inline constexpr std::uint8_t kClassRoad = 2;
inline constexpr std::uint8_t kClassLane = 3;
inline constexpr std::uint8_t kClassVehicle = 4;
inline constexpr std::uint8_t kClassObstacle = 5;
inline constexpr std::size_t kNumClasses = 6;

/// Display palette, class index -> RGB.
inline const float kClassPalette[kNumClasses][3] = {
    {0.00f, 0.00f, 0.00f},  // void
    {0.35f, 0.60f, 0.95f},  // sky
    {0.45f, 0.45f, 0.45f},  // road
    {0.95f, 0.90f, 0.40f},  // lane marking
    {0.80f, 0.20f, 0.20f},  // vehicle
    {0.95f, 0.55f, 0.10f},  // obstacle
};

struct SceneParams {
  std::uint64_t seed = 0;
  std::size_t height = 64;
  std::size_t width = 64;
  bool ood_enabled = false;       // insert one blob of a texture unseen elsewhere, labeled void
  std::size_t max_vehicles = 4;   // per scene, uniform in [0,max]
  std::size_t max_obstacles = 3;
  double pixel_noise_sigma = 0.02;

  void validate() const {
    require(height >= 16 && width >= 16, "SceneParams: image too small");
    require(pixel_noise_sigma >= 0.0, "SceneParams: negative noise sigma");
  }
};

struct Sample {
  Tensor<float> image;               // (3,H,W) in [0,1]
  std::vector<std::uint8_t> labels;  // (H*W) class indices
  std::uint64_t seed = 0;
};

namespace detail {

struct Painter {
  std::size_t h, w;
  float* img;                 // (3,h,w)
  std::uint8_t* lab;
  std::size_t hw;

  void put(std::size_t y, std::size_t x, float r, float g, float b, std::uint8_t cls) {
    const std::size_t i = y * w + x;
    img[i] = r;
    img[hw + i] = g;
    img[2 * hw + i] = b;
    lab[i] = cls;
  }
};

inline void paint_rect(Painter& p, long x0, long y0, long rw, long rh, const float rgb[3], std::uint8_t cls) {
  for (long y = std::max(0l, y0); y < std::min<long>(p.h, y0 + rh); ++y)
    for (long x = std::max(0l, x0); x < std::min<long>(p.w, x0 + rw); ++x)
      p.put(static_cast<std::size_t>(y), static_cast<std::size_t>(x), rgb[0], rgb[1], rgb[2], cls);
}

inline void paint_ellipse(Painter& p, double cx, double cy, double ax, double ay, const float rgb[3],
                          std::uint8_t cls) {
  const long y0 = std::max(0l, static_cast<long>(std::floor(cy - ay)));
  const long y1 = std::min<long>(p.h - 1, static_cast<long>(std::ceil(cy + ay)));
  const long x0 = std::max(0l, static_cast<long>(std::floor(cx - ax)));
  const long x1 = std::min<long>(p.w - 1, static_cast<long>(std::ceil(cx + ax)));
  for (long y = y0; y <= y1; ++y)
    for (long x = x0; x <= x1; ++x) {
      const double dx = (x - cx) / ax, dy = (y - cy) / ay;
      if (dx * dx + dy * dy <= 1.0)
        p.put(static_cast<std::size_t>(y), static_cast<std::size_t>(x), rgb[0], rgb[1], rgb[2], cls);
    }
}

}  // namespace detail

/// Procedural road scene: sky above a random horizon, road with dashed lane
/// markings below, up to 4 vehicles and 3 obstacles with per-object jitter,
/// additive pixel noise, and a void-labeled 1-pixel border. Deterministic in
/// the seed.
inline Sample generate_scene(const SceneParams& params) {
  params.validate();
  Rng rng(params.seed);
  const std::size_t h = params.height, w = params.width, hw = h * w;

  Sample s;
  s.seed = params.seed;
  s.image = Tensor<float>(Shape{3, h, w});
  s.labels.assign(hw, kClassVoid);
  detail::Painter p{h, w, s.image.data(), s.labels.data(), hw};

  const std::size_t horizon = static_cast<std::size_t>(h * rng.uniform(0.35, 0.55));

  // sky: vertical gradient around a jittered blue
  const float sky_r = static_cast<float>(rng.uniform(0.40, 0.60));
  const float sky_g = static_cast<float>(rng.uniform(0.60, 0.78));
  const float sky_b = static_cast<float>(rng.uniform(0.85, 1.00));
  for (std::size_t y = 0; y < horizon; ++y) {
    const float t = 1.0f - 0.25f * static_cast<float>(y) / static_cast<float>(horizon);
    for (std::size_t x = 0; x < w; ++x) p.put(y, x, sky_r * t, sky_g * t, sky_b, kClassSky);
  }

  // road: mid grey with mild horizontal banding
  const float road_g0 = static_cast<float>(rng.uniform(0.28, 0.42));
  for (std::size_t y = horizon; y < h; ++y) {
    const float band = 1.0f + 0.05f * static_cast<float>(rng.uniform(-1, 1));
    const float g = road_g0 * band;
    for (std::size_t x = 0; x < w; ++x) p.put(y, x, g, g, g * 1.05f, kClassRoad);
  }

  // dashed lane markings, slightly sloped
  const std::size_t n_lanes = 2 + rng.uniform_int(2);
  for (std::size_t lane = 0; lane < n_lanes; ++lane) {
    const double base_x = rng.uniform(0.1, 0.9) * w;
    const double slope = rng.uniform(-0.25, 0.25);
    const std::size_t lane_w = 1 + rng.uniform_int(2);
    const bool yellow = rng.bernoulli(0.3);
    const float lr = yellow ? 0.9f : 0.88f, lg = yellow ? 0.8f : 0.88f, lb = yellow ? 0.25f : 0.85f;
    const std::size_t dash = 4 + rng.uniform_int(4);
    for (std::size_t y = horizon; y < h; ++y) {
      if ((y / dash) % 2 == 1) continue;
      const long x0 = static_cast<long>(base_x + slope * (static_cast<double>(y) - horizon));
      for (std::size_t dx = 0; dx < lane_w; ++dx) {
        const long x = x0 + static_cast<long>(dx);
        if (x >= 0 && x < static_cast<long>(w)) p.put(y, static_cast<std::size_t>(x), lr, lg, lb, kClassLane);
      }
    }
  }

  // obstacles: warm-toned ellipses on the road
  const std::size_t n_obstacles = rng.uniform_int(params.max_obstacles + 1);
  for (std::size_t i = 0; i < n_obstacles; ++i) {
    const double ax = rng.uniform(2.0, 5.0), ay = rng.uniform(2.0, 5.0);
    const double cx = rng.uniform(0.05, 0.95) * w;
    const double cy = rng.uniform(static_cast<double>(horizon) + ay, static_cast<double>(h) - 1.0);
    const bool light = rng.bernoulli(0.5);
    float rgb[3] = {light ? 0.72f : 0.50f, light ? 0.48f : 0.34f, light ? 0.16f : 0.20f};
    for (auto& c : rgb) c = std::min(1.0f, std::max(0.0f, c + static_cast<float>(rng.uniform(-0.06, 0.06))));
    detail::paint_ellipse(p, cx, cy, ax, ay, rgb, kClassObstacle);
  }

  // vehicles: boxes with a darker cabin strip, drawn last (closest)
  const float car_colors[5][3] = {
      {0.62f, 0.10f, 0.12f}, {0.12f, 0.16f, 0.52f}, {0.10f, 0.40f, 0.16f}, {0.58f, 0.58f, 0.62f}, {0.10f, 0.10f, 0.12f}};
  const std::size_t n_vehicles = rng.uniform_int(params.max_vehicles + 1);
  for (std::size_t i = 0; i < n_vehicles; ++i) {
    const long vw = 8 + static_cast<long>(rng.uniform_int(10));
    const long vh = 5 + static_cast<long>(rng.uniform_int(6));
    const long x0 = static_cast<long>(rng.uniform(0.0, 1.0) * (w - vw));
    const long ymin = static_cast<long>(horizon) - vh / 3;  // may poke above the horizon
    const long ymax = static_cast<long>(h) - vh - 1;
    if (ymax <= ymin) continue;
    const long y0 = ymin + static_cast<long>(rng.uniform_int(static_cast<std::uint64_t>(ymax - ymin)));
    const auto& base = car_colors[rng.uniform_int(5)];
    float body[3], cabin[3];
    for (std::size_t c = 0; c < 3; ++c) {
      body[c] = std::min(1.0f, std::max(0.0f, base[c] + static_cast<float>(rng.uniform(-0.08, 0.08))));
      cabin[c] = body[c] * 0.55f;
    }
    detail::paint_rect(p, x0, y0, vw, vh, body, kClassVehicle);
    detail::paint_rect(p, x0 + 1, y0, vw - 2, std::max(1l, vh / 3), cabin, kClassVehicle);
  }

  // optional out-of-distribution blob: striped "fur" texture never used above
  if (params.ood_enabled) {
    const double cx = rng.uniform(0.15, 0.85) * w;
    const double cy = rng.uniform(0.2, 0.9) * h;
    const std::size_t lobes = 3 + rng.uniform_int(3);
    for (std::size_t i = 0; i < lobes; ++i) {
      const double ox = cx + rng.uniform(-5, 5), oy = cy + rng.uniform(-4, 4);
      const double ax = rng.uniform(3.0, 7.0), ay = rng.uniform(3.0, 7.0);
      const long y0 = std::max(0l, static_cast<long>(oy - ay)), y1 = std::min<long>(h - 1, static_cast<long>(oy + ay));
      const long x0 = std::max(0l, static_cast<long>(ox - ax)), x1 = std::min<long>(w - 1, static_cast<long>(ox + ax));
      for (long y = y0; y <= y1; ++y)
        for (long x = x0; x <= x1; ++x) {
          const double dx = (x - ox) / ax, dy = (y - oy) / ay;
          if (dx * dx + dy * dy > 1.0) continue;
          const bool stripe = ((x + 2 * y) / 2) % 2 == 0;
          p.put(static_cast<std::size_t>(y), static_cast<std::size_t>(x), stripe ? 0.46f : 0.92f,
                stripe ? 0.30f : 0.86f, stripe ? 0.16f : 0.78f, kClassVoid);
        }
    }
  }

  // additive pixel noise, clamped
  if (params.pixel_noise_sigma > 0) {
    for (auto& v : s.image.values()) {
      v += static_cast<float>(rng.normal() * params.pixel_noise_sigma);
      v = std::min(1.0f, std::max(0.0f, v));
    }
  }

  // 1-pixel border is void in the labels
  for (std::size_t x = 0; x < w; ++x) {
    s.labels[x] = kClassVoid;
    s.labels[(h - 1) * w + x] = kClassVoid;
  }
  for (std::size_t y = 0; y < h; ++y) {
    s.labels[y * w] = kClassVoid;
    s.labels[y * w + w - 1] = kClassVoid;
  }
  return s;
}

// ---- dataset directories ----------------------------------------------------

struct DatasetManifest {
  std::string split;       // train / val / test
  std::size_t count = 0;
  std::uint64_t seed_base = 0;
};

inline std::string sample_image_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%05zu.ppm", i);
  return buf;
}

inline std::string sample_label_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "lab_%05zu.otns", i);
  return buf;
}

/// Writes one split directory: images, label tensors, and a manifest.txt.
/// Splits in one call must have disjoint seed ranges. Idempotent for a fixed
/// manifest (bytes are a pure function of the inputs).
inline void build_dataset(const std::filesystem::path& root, const std::vector<DatasetManifest>& splits,
                          const SceneParams& proto) {
  for (std::size_t i = 0; i < splits.size(); ++i) {
    require(splits[i].count > 0, "build_dataset: split " + splits[i].split + " has zero samples");
    for (std::size_t j = i + 1; j < splits.size(); ++j) {
      const auto &a = splits[i], &b = splits[j];
      const bool disjoint = a.seed_base + a.count <= b.seed_base || b.seed_base + b.count <= a.seed_base;
      require(disjoint, "build_dataset: seed ranges of splits " + a.split + " and " + b.split + " overlap");
    }
  }
  for (const auto& m : splits) {
    const auto dir = root / m.split;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    require(!ec, "build_dataset: cannot create " + dir.string());
    for (std::size_t i = 0; i < m.count; ++i) {
      SceneParams sp = proto;
      sp.seed = m.seed_base + i;
      const Sample s = generate_scene(sp);
      write_image(dir / sample_image_name(i), s.image);
      Tensor<float> lab(Shape{proto.height, proto.width});
      for (std::size_t k = 0; k < s.labels.size(); ++k) lab.values()[k] = static_cast<float>(s.labels[k]);
      write_tensor(dir / sample_label_name(i), lab);
    }
    std::ofstream os(dir / "manifest.txt");
    require(static_cast<bool>(os), "build_dataset: cannot write manifest in " + dir.string());
    os << "# dataset split manifest\n";
    os << "split = " << m.split << "\n";
    os << "count = " << m.count << "\n";
    os << "seed_base = " << m.seed_base << "\n";
    os << "height = " << proto.height << "\n";
    os << "width = " << proto.width << "\n";
    os << "classes = " << kNumClasses << "\n";
    os << "ood = " << (proto.ood_enabled ? "true" : "false") << "\n";
    os << "image_pattern = img_%05d.ppm\n";
    os << "label_pattern = lab_%05d.otns\n";
  }
}

/// Flat `key = value` grammar with '#' comments; shared by manifests,
/// checkpoint metadata and experiment configs.
inline std::map<std::string, std::string> parse_kv_text(std::istream& is, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string v) {
    const auto b = v.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = v.find_last_not_of(" \t\r");
    return v.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    require(eq != std::string::npos, origin + ":" + std::to_string(lineno) + ": expected `key = value`");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    require(!key.empty(), origin + ":" + std::to_string(lineno) + ": empty key");
    out[key] = val;
  }
  return out;
}

inline std::map<std::string, std::string> parse_kv_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "cannot open " + path.string());
  return parse_kv_text(is, path.string());
}

struct Dataset {
  std::string split;
  std::size_t height = 0, width = 0, classes = 0;
  std::vector<Tensor<float>> images;
  std::vector<std::vector<std::uint8_t>> labels;

  std::size_t size() const { return images.size(); }
};

inline Dataset load_dataset(const std::filesystem::path& root, const std::string& split) {
  const auto dir = root / split;
  const auto kv = parse_kv_file(dir / "manifest.txt");
  auto get = [&](const char* key) {
    auto it = kv.find(key);
    require(it != kv.end(), "manifest " + dir.string() + ": missing key " + key);
    return it->second;
  };
  Dataset ds;
  ds.split = get("split");
  require(ds.split == split, "manifest split name mismatch in " + dir.string());
  const std::size_t count = std::stoul(get("count"));
  ds.height = std::stoul(get("height"));
  ds.width = std::stoul(get("width"));
  ds.classes = std::stoul(get("classes"));
  ds.images.reserve(count);
  ds.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ds.images.push_back(read_image(dir / sample_image_name(i)));
    require(ds.images.back().dim(1) == ds.height && ds.images.back().dim(2) == ds.width,
            "dataset image size mismatch at index " + std::to_string(i));
    auto lab = read_tensor(dir / sample_label_name(i));
    require(lab.size() == ds.height * ds.width, "dataset label size mismatch at index " + std::to_string(i));
    std::vector<std::uint8_t> l(lab.size());
    for (std::size_t k = 0; k < l.size(); ++k) {
      const long v = std::lround(lab.values()[k]);
      require(v >= 0 && v < static_cast<long>(ds.classes), "dataset label out of range at index " + std::to_string(i));
      l[k] = static_cast<std::uint8_t>(v);
    }
    ds.labels.push_back(std::move(l));
  }
  return ds;
}

}  // namespace segobs
