#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sdinet/dataset.hpp"

namespace sdinet {

struct SynthConfig {
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  int layer_count = 4;
  // Integer disparities, must stay below width / 8.
  int disparity_min = 1;
  int disparity_max = 6;
  // low = clip(alpha * gt^gamma + N(0, sigma^2))
  double alpha_min = 0.2;
  double alpha_max = 0.5;
  double gamma_min = 1.0;
  double gamma_max = 1.5;
  double sigma_min = 0.0;
  double sigma_max = 0.01;

  void validate() const;
};

enum class LayerShape { Rectangle, Ellipse, Stripes };
enum class View { Left, Right };

using Rgb = std::array<double, 3>;

struct SceneLayer {
  LayerShape shape = LayerShape::Rectangle;
  int disparity = 0;
  double cx = 0, cy = 0;
  double half_w = 1, half_h = 1;
  Rgb color{};
  Rgb accent{};
  double frequency = 0;
  double angle = 0;
  double phase = 0;

  bool covers(double x, double y) const;
  Rgb shade(double x, double y) const;
};

/// Procedural layered scene: a zero-disparity textured background and
/// foreground layers ordered far to near (non-decreasing disparity).
struct SynthScene {
  std::uint64_t seed = 0;
  int height = 0;
  int width = 0;
  Rgb background_top{};
  Rgb background_bottom{};
  double background_frequency = 0;
  double background_phase = 0;
  std::vector<SceneLayer> layers;
  double alpha = 1;
  double gamma = 1;
  double sigma = 0;

  std::vector<int> disparities() const;
};

SynthScene make_scene(const SynthConfig& config);

/// Ground-truth view. The right view samples every layer at x + disparity;
/// nearer layers overwrite farther ones.
Tensor<float> render_view(const SynthScene& scene, View view);

/// [1,H,W] 0/1 coverage of one layer in one view, ignoring occlusion.
Tensor<float> layer_mask(const SynthScene& scene, std::size_t layer, View view);

/// Renders, degrades and snaps to the 8-bit grid. Deterministic in `config.seed`.
StereoSample synth_generate(const SynthConfig& config, const std::string& id = "");

/// Scene parameters used by synth_generate for the same config.
SynthScene synth_scene_for(const SynthConfig& config);

/// "id<TAB>seed<TAB>d1,d2,...<TAB>alpha<TAB>gamma<TAB>sigma"
std::string manifest_line(const std::string& id, const SynthScene& scene);

/// Writes `count` samples (seeds base.seed + i) in the dataset layout plus
/// manifest.txt. Returns the sample ids.
std::vector<std::string> write_synthetic_dataset(const std::filesystem::path& root,
                                                 const SynthConfig& base, int count);

}  // namespace sdinet
