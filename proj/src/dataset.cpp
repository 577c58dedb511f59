#include "sdinet/dataset.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "sdinet/error.hpp"
#include "sdinet/image.hpp"

namespace fs = std::filesystem;

namespace sdinet {

void StereoSample::validate() const {
  const Tensor<float>* images[4] = {&low_left, &low_right, &gt_left, &gt_right};
  for (const auto* img : images) {
    if (!img->defined() || img->rank() != 3 || img->dim(0) != 3) {
      throw DatasetError("sample '" + id + "': images must be [3,H,W]");
    }
    if (img->shape() != gt_left.shape()) {
      throw DatasetError("sample '" + id + "': image sizes differ (" + shape_str(img->shape()) +
                         " vs " + shape_str(gt_left.shape()) + ")");
    }
  }
  if (height() % 4 != 0 || width() % 4 != 0) {
    throw DatasetError("sample '" + id + "': height and width must be divisible by 4, got " +
                       std::to_string(height()) + "x" + std::to_string(width()));
  }
}

std::vector<StereoSample> load_dataset(const fs::path& root) {
  if (!fs::exists(root)) throw DatasetError("dataset root does not exist: " + root.string());
  if (!fs::is_directory(root)) throw DatasetError("dataset root is not a directory: " + root.string());

  std::map<std::string, std::set<std::string>> present;  // id -> dirs
  for (const char* dir : kDatasetDirs) {
    const fs::path sub = root / dir;
    if (!fs::is_directory(sub)) continue;
    for (const auto& entry : fs::directory_iterator(sub)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
      present[entry.path().stem().string()].insert(dir);
    }
  }

  std::vector<StereoSample> samples;
  for (const auto& [id, dirs] : present) {
    for (const char* dir : kDatasetDirs) {
      if (!dirs.count(dir)) {
        throw DatasetError("sample '" + id + "' is missing " + std::string(dir) + "/" + id +
                           ".png");
      }
    }
    StereoSample s;
    s.id = id;
    Tensor<float>* slots[4] = {&s.low_left, &s.low_right, &s.gt_left, &s.gt_right};
    for (int i = 0; i < 4; ++i) {
      try {
        *slots[i] = read_image(root / kDatasetDirs[i] / (id + ".png"));
      } catch (const IoError& e) {
        throw DatasetError("sample '" + id + "': " + e.what());
      }
    }
    s.validate();
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_sample(const fs::path& root, const StereoSample& sample) {
  sample.validate();
  const Tensor<float>* images[4] = {&sample.low_left, &sample.low_right, &sample.gt_left,
                                    &sample.gt_right};
  for (int i = 0; i < 4; ++i) {
    const fs::path dir = root / kDatasetDirs[i];
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_image(dir / (sample.id + ".png"), *images[i]);
  }
}

CropWindow random_window(std::int64_t image_h, std::int64_t image_w, std::int64_t h,
                         std::int64_t w, std::mt19937_64& rng) {
  if (h <= 0 || w <= 0 || h > image_h || w > image_w) {
    throw ConfigError("crop " + std::to_string(h) + "x" + std::to_string(w) +
                      " does not fit image " + std::to_string(image_h) + "x" +
                      std::to_string(image_w));
  }
  std::uniform_int_distribution<std::int64_t> dy(0, image_h - h);
  std::uniform_int_distribution<std::int64_t> dx(0, image_w - w);
  CropWindow win;
  win.y = dy(rng);
  win.x = dx(rng);
  win.height = h;
  win.width = w;
  return win;
}

namespace {

Tensor<float> crop_image(const Tensor<float>& img, const CropWindow& win) {
  const std::int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (win.y < 0 || win.x < 0 || win.y + win.height > h || win.x + win.width > w) {
    throw ConfigError("crop window outside image");
  }
  const auto v = img.data();
  std::vector<float> out(static_cast<std::size_t>(c * win.height * win.width));
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < win.height; ++y) {
      const float* src = v.data() + (ch * h + win.y + y) * w + win.x;
      std::copy(src, src + win.width, out.begin() + (ch * win.height + y) * win.width);
    }
  return Tensor<float>::from({c, win.height, win.width}, std::move(out));
}

}  // namespace

StereoSample crop(const StereoSample& sample, const CropWindow& window) {
  StereoSample out;
  out.id = sample.id;
  out.low_left = crop_image(sample.low_left, window);
  out.low_right = crop_image(sample.low_right, window);
  out.gt_left = crop_image(sample.gt_left, window);
  out.gt_right = crop_image(sample.gt_right, window);
  return out;
}

StereoSample random_crop_pair(const StereoSample& sample, std::int64_t h, std::int64_t w,
                              std::uint64_t seed) {
  if (h % 4 != 0 || w % 4 != 0) {
    throw ConfigError("crop size must be divisible by 4, got " + std::to_string(h) + "x" +
                      std::to_string(w));
  }
  std::mt19937_64 rng(seed);
  return crop(sample, random_window(sample.height(), sample.width(), h, w, rng));
}

Tensor<float> stack_images(const std::vector<Tensor<float>>& images) {
  if (images.empty()) throw DimensionError("stack_images: no images");
  const Shape& s = images.front().shape();
  std::vector<float> out;
  out.reserve(images.size() * images.front().values().size());
  for (const auto& img : images) {
    if (img.shape() != s) throw DimensionError("stack_images: shapes differ");
    out.insert(out.end(), img.values().begin(), img.values().end());
  }
  Shape stacked{static_cast<std::int64_t>(images.size())};
  stacked.insert(stacked.end(), s.begin(), s.end());
  return Tensor<float>::from(stacked, std::move(out));
}

}  // namespace sdinet
