#include "sdinet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "sdinet/error.hpp"
#include "sdinet/image.hpp"

namespace sdinet {

void SynthConfig::validate() const {
  if (height <= 0 || width <= 0 || height % 4 != 0 || width % 4 != 0) {
    throw ConfigError("synthetic image size must be positive and divisible by 4");
  }
  if (layer_count < 0) throw ConfigError("layer_count must be >= 0");
  if (disparity_min < 0 || disparity_min > disparity_max) {
    throw ConfigError("disparity range must satisfy 0 <= min <= max");
  }
  if (disparity_max * 8 >= width) {
    throw ConfigError("disparity_max " + std::to_string(disparity_max) +
                      " must be below width / 8 = " + std::to_string(width / 8.0));
  }
  if (!(alpha_min > 0.0) || alpha_min > alpha_max || alpha_max > 1.0) {
    throw ConfigError("alpha range must lie in (0, 1] with min <= max");
  }
  if (gamma_min < 1.0 || gamma_min > gamma_max) {
    throw ConfigError("gamma range must satisfy 1 <= min <= max");
  }
  if (sigma_min < 0.0 || sigma_min > sigma_max) {
    throw ConfigError("sigma range must satisfy 0 <= min <= max");
  }
}

bool SceneLayer::covers(double x, double y) const {
  const double dx = (x - cx) / half_w;
  const double dy = (y - cy) / half_h;
  switch (shape) {
    case LayerShape::Ellipse:
      return dx * dx + dy * dy <= 1.0;
    case LayerShape::Rectangle:
    case LayerShape::Stripes:
      return std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
  }
  return false;
}

Rgb SceneLayer::shade(double x, double y) const {
  double t = 0.0;
  switch (shape) {
    case LayerShape::Rectangle:
      t = std::clamp((x - (cx - half_w)) / (2.0 * half_w), 0.0, 1.0);
      break;
    case LayerShape::Ellipse:
      t = 0.25 + 0.25 * std::sin(frequency * std::hypot(x - cx, y - cy) + phase);
      break;
    case LayerShape::Stripes:
      t = 0.5 + 0.5 * std::sin(frequency * (x * std::cos(angle) + y * std::sin(angle)) + phase);
      break;
  }
  Rgb out;
  for (int c = 0; c < 3; ++c) out[c] = std::clamp(color[c] + t * (accent[c] - color[c]), 0.0, 1.0);
  return out;
}

std::vector<int> SynthScene::disparities() const {
  std::vector<int> d;
  for (const auto& l : layers) d.push_back(l.disparity);
  return d;
}

SynthScene make_scene(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto color = [&](double lo, double hi) {
    return Rgb{uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)};
  };

  SynthScene s;
  s.seed = config.seed;
  s.height = config.height;
  s.width = config.width;
  s.background_top = color(0.2, 0.6);
  s.background_bottom = color(0.3, 0.8);
  s.background_frequency = uniform(0.1, 0.4);
  s.background_phase = uniform(0.0, 2.0 * std::numbers::pi);

  std::uniform_int_distribution<int> disp(config.disparity_min, config.disparity_max);
  std::uniform_int_distribution<int> kind(0, 2);
  const double w = config.width;
  const double h = config.height;
  for (int i = 0; i < config.layer_count; ++i) {
    SceneLayer l;
    l.shape = static_cast<LayerShape>(kind(rng));
    l.disparity = disp(rng);
    l.cx = uniform(0.2 * w, 0.8 * w);
    l.cy = uniform(0.2 * h, 0.8 * h);
    l.half_w = uniform(0.08 * w, 0.22 * w);
    l.half_h = uniform(0.08 * h, 0.22 * h);
    l.color = color(0.05, 1.0);
    l.accent = color(0.05, 1.0);
    l.frequency = uniform(0.3, 1.2);
    l.angle = uniform(0.0, std::numbers::pi);
    l.phase = uniform(0.0, 2.0 * std::numbers::pi);
    s.layers.push_back(l);
  }
  std::stable_sort(s.layers.begin(), s.layers.end(),
                   [](const SceneLayer& a, const SceneLayer& b) { return a.disparity < b.disparity; });
  s.alpha = uniform(config.alpha_min, config.alpha_max);
  s.gamma = uniform(config.gamma_min, config.gamma_max);
  s.sigma = uniform(config.sigma_min, config.sigma_max);
  return s;
}

namespace {

double layer_x(const SceneLayer& l, double x, View view) {
  return view == View::Left ? x : x + l.disparity;
}

}  // namespace

Tensor<float> render_view(const SynthScene& scene, View view) {
  const std::int64_t h = scene.height, w = scene.width;
  std::vector<float> out(static_cast<std::size_t>(3 * h * w));
  for (std::int64_t y = 0; y < h; ++y) {
    const double py = y + 0.5;
    const double v = py / double(h);
    for (std::int64_t x = 0; x < w; ++x) {
      const double px = x + 0.5;
      // background sits at zero disparity in both views
      const double ripple = 0.08 * std::sin(scene.background_frequency * (px + 0.5 * py) +
                                            scene.background_phase);
      Rgb c;
      for (int ch = 0; ch < 3; ++ch) {
        c[ch] = std::clamp(
            scene.background_top[ch] + v * (scene.background_bottom[ch] - scene.background_top[ch]) +
                ripple,
            0.0, 1.0);
      }
      for (const auto& layer : scene.layers) {
        const double lx = layer_x(layer, px, view);
        if (layer.covers(lx, py)) c = layer.shade(lx, py);
      }
      for (int ch = 0; ch < 3; ++ch) out[(ch * h + y) * w + x] = static_cast<float>(c[ch]);
    }
  }
  return Tensor<float>::from({3, h, w}, std::move(out));
}

Tensor<float> layer_mask(const SynthScene& scene, std::size_t layer, View view) {
  if (layer >= scene.layers.size()) throw ConfigError("layer index out of range");
  const auto& l = scene.layers[layer];
  const std::int64_t h = scene.height, w = scene.width;
  std::vector<float> out(static_cast<std::size_t>(h * w), 0.0f);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      if (l.covers(layer_x(l, x + 0.5, view), y + 0.5)) out[y * w + x] = 1.0f;
    }
  return Tensor<float>::from({1, h, w}, std::move(out));
}

namespace {

Tensor<float> degrade(const Tensor<float>& gt, const SynthScene& scene, std::mt19937_64& rng) {
  std::vector<float> out(gt.values());
  std::normal_distribution<double> noise(0.0, scene.sigma > 0.0 ? scene.sigma : 1.0);
  for (auto& v : out) {
    double x = v;
    if (scene.gamma != 1.0) x = std::pow(x, scene.gamma);
    x = scene.alpha * x;
    if (scene.sigma > 0.0) x += noise(rng);
    v = static_cast<float>(std::clamp(x, 0.0, 1.0));
  }
  return quantize_to_bytes(Tensor<float>::from(gt.shape(), std::move(out)));
}

}  // namespace

SynthScene synth_scene_for(const SynthConfig& config) { return make_scene(config); }

StereoSample synth_generate(const SynthConfig& config, const std::string& id) {
  const SynthScene scene = make_scene(config);
  StereoSample s;
  s.id = id.empty() ? "synth_" + std::to_string(config.seed) : id;
  s.gt_left = quantize_to_bytes(render_view(scene, View::Left));
  s.gt_right = quantize_to_bytes(render_view(scene, View::Right));
  // noise stream independent of scene construction
  std::mt19937_64 rng(config.seed ^ 0x5eed5eed5eed5eedULL);
  s.low_left = degrade(s.gt_left, scene, rng);
  s.low_right = degrade(s.gt_right, scene, rng);
  return s;
}

std::string manifest_line(const std::string& id, const SynthScene& scene) {
  std::ostringstream os;
  os << id << '\t' << scene.seed << '\t';
  const auto d = scene.disparities();
  for (std::size_t i = 0; i < d.size(); ++i) os << (i ? "," : "") << d[i];
  char buf[96];
  std::snprintf(buf, sizeof(buf), "\t%.6f\t%.6f\t%.6f", scene.alpha, scene.gamma, scene.sigma);
  os << buf;
  return os.str();
}

std::vector<std::string> write_synthetic_dataset(const std::filesystem::path& root,
                                                 const SynthConfig& base, int count) {
  if (count < 0) throw ConfigError("sample count must be >= 0");
  base.validate();
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
  std::ofstream manifest(root / "manifest.txt");
  if (!manifest) throw IoError("cannot write " + (root / "manifest.txt").string());

  std::vector<std::string> ids;
  for (int i = 0; i < count; ++i) {
    SynthConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(i);
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%04d", i);
    const auto sample = synth_generate(cfg, name);
    write_sample(root, sample);
    manifest << manifest_line(name, make_scene(cfg)) << '\n';
    ids.emplace_back(name);
  }
  if (!manifest) throw IoError("failed writing manifest in " + root.string());
  return ids;
}

}  // namespace sdinet
