#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sdinet/tensor.hpp"

namespace sdinet {

/// Low-light stereo pair and its ground truth, each [3,H,W] in [0,1].
struct StereoSample {
  std::string id;
  Tensor<float> low_left;
  Tensor<float> low_right;
  Tensor<float> gt_left;
  Tensor<float> gt_right;

  std::int64_t height() const { return gt_left.dim(1); }
  std::int64_t width() const { return gt_left.dim(2); }
  /// All four images [3,H,W] with one H,W, both divisible by 4.
  void validate() const;
};

inline constexpr const char* kDatasetDirs[4] = {"low_left", "low_right", "gt_left", "gt_right"};

/// Reads root/{low_left,low_right,gt_left,gt_right}/<id>.png, sorted by id.
/// An empty root yields an empty list and a missing root raises DatasetError,
/// as does an id that is not present in all four directories.
std::vector<StereoSample> load_dataset(const std::filesystem::path& root);

/// Writes the sample's four images in the dataset layout, creating folders.
void write_sample(const std::filesystem::path& root, const StereoSample& sample);

struct CropWindow {
  std::int64_t y = 0;
  std::int64_t x = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
};

/// Uniform window of the given size inside an image_h x image_w image.
CropWindow random_window(std::int64_t image_h, std::int64_t image_w, std::int64_t h,
                         std::int64_t w, std::mt19937_64& rng);

StereoSample crop(const StereoSample& sample, const CropWindow& window);

/// Same window for all four images, chosen by `seed`.
StereoSample random_crop_pair(const StereoSample& sample, std::int64_t h, std::int64_t w,
                              std::uint64_t seed);

/// Stacks [3,H,W] images into [N,3,H,W].
Tensor<float> stack_images(const std::vector<Tensor<float>>& images);

}  // namespace sdinet
