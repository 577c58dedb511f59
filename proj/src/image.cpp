#include "sdinet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "sdinet/error.hpp"

namespace sdinet {

std::uint8_t to_byte(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

Tensor<float> read_image(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    const std::string why = img.message;
    png_image_free(&img);
    throw IoError("cannot read image " + path.string() + ": " + why);
  }
  if (img.format != PNG_FORMAT_RGB) {
    png_image_free(&img);
    throw IoError("image " + path.string() + " is not 8-bit RGB");
  }
  const std::int64_t h = img.height;
  const std::int64_t w = img.width;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
    const std::string why = img.message;
    png_image_free(&img);
    throw IoError("corrupt image " + path.string() + ": " + why);
  }
  std::vector<float> values(static_cast<std::size_t>(3 * h * w));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        values[(c * h + y) * w + x] = from_byte(bytes[(y * w + x) * 3 + c]);
      }
  return Tensor<float>::from({3, h, w}, std::move(values));
}

void write_image(const std::filesystem::path& path, const Tensor<float>& image) {
  if (image.rank() != 3 || (image.dim(0) != 3 && image.dim(0) != 1)) {
    throw DimensionError("write_image expects [3,H,W] or [1,H,W], got " +
                         shape_str(image.shape()));
  }
  const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const auto v = image.data();
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(c * h * w));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        bytes[(y * w + x) * c + ch] = to_byte(v[(ch * h + y) * w + x]);
      }
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    const std::string why = img.message;
    png_image_free(&img);
    throw IoError("cannot write image " + path.string() + ": " + why);
  }
}

Tensor<float> quantize_to_bytes(const Tensor<float>& image) {
  std::vector<float> out(image.values());
  for (auto& v : out) v = from_byte(to_byte(v));
  return Tensor<float>::from(image.shape(), std::move(out));
}

}  // namespace sdinet
