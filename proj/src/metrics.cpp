#include "sdinet/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "sdinet/error.hpp"

namespace sdinet {

namespace {

struct ImageDims {
  std::int64_t channels;
  std::int64_t height;
  std::int64_t width;
};

template <class T>
ImageDims image_dims(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const auto& s = a.shape();
  if (s.size() == 3) return {s[0], s[1], s[2]};
  if (s.size() == 4 && s[0] == 1) return {s[1], s[2], s[3]};
  throw DimensionError(std::string(what) + ": expected [C,H,W] or [1,C,H,W], got " +
                       shape_str(s));
}

// Valid-mode separable filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::int64_t h, std::int64_t w,
                                 const std::vector<double>& taps) {
  const auto k = static_cast<std::int64_t>(taps.size());
  const std::int64_t ow = w - k + 1;
  const std::int64_t oh = h - k + 1;
  std::vector<double> horiz(static_cast<std::size_t>(h * ow));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::int64_t t = 0; t < k; ++t) acc += taps[t] * plane[y * w + x + t];
      horiz[y * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (std::int64_t y = 0; y < oh; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::int64_t t = 0; t < k; ++t) acc += taps[t] * horiz[(y + t) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace

std::vector<double> gaussian_taps(int window, double sigma) {
  std::vector<double> taps(static_cast<std::size_t>(window));
  const double center = (window - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - center;
    taps[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    total += taps[i];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

template <class T>
double psnr(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("psnr: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
  }
  const auto a = pred.data();
  const auto b = target.data();
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    sq += d * d;
  }
  const double mse = sq / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / mse);
}

template <class T>
double ssim(const Tensor<T>& pred, const Tensor<T>& target, const SsimOptions& o) {
  const auto dims = image_dims(pred, target, "ssim");
  if (dims.height < o.window || dims.width < o.window) {
    throw ConfigError("ssim: image " + std::to_string(dims.height) + "x" +
                      std::to_string(dims.width) + " is smaller than the " +
                      std::to_string(o.window) + "x" + std::to_string(o.window) + " window");
  }
  const auto taps = gaussian_taps(o.window, o.sigma);
  const double c1 = (o.k1 * o.data_range) * (o.k1 * o.data_range);
  const double c2 = (o.k2 * o.data_range) * (o.k2 * o.data_range);
  const std::int64_t plane = dims.height * dims.width;
  const auto a = pred.data();
  const auto b = target.data();

  double total = 0.0;
  for (std::int64_t c = 0; c < dims.channels; ++c) {
    std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
    for (std::int64_t i = 0; i < plane; ++i) {
      x[i] = a[c * plane + i];
      y[i] = b[c * plane + i];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, dims.height, dims.width, taps);
    const auto my = filter_valid(y, dims.height, dims.width, taps);
    const auto mxx = filter_valid(xx, dims.height, dims.width, taps);
    const auto myy = filter_valid(yy, dims.height, dims.width, taps);
    const auto mxy = filter_valid(xy, dims.height, dims.width, taps);
    double channel_sum = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cov = mxy[i] - mx[i] * my[i];
      channel_sum += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
                     ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += channel_sum / static_cast<double>(mx.size());
  }
  return total / static_cast<double>(dims.channels);
}

template <class T>
Tensor<float> error_map(const Tensor<T>& pred, const Tensor<T>& target, double display_max) {
  const auto dims = image_dims(pred, target, "error_map");
  if (!(display_max > 0.0)) throw ConfigError("error_map: display_max must be positive");
  const std::int64_t plane = dims.height * dims.width;
  const auto a = pred.data();
  const auto b = target.data();
  std::vector<float> out(static_cast<std::size_t>(plane));
  for (std::int64_t i = 0; i < plane; ++i) {
    double e = 0.0;
    for (std::int64_t c = 0; c < dims.channels; ++c) {
      e += std::abs(double(a[c * plane + i]) - double(b[c * plane + i]));
    }
    e /= static_cast<double>(dims.channels);
    out[i] = static_cast<float>(1.0 - std::min(1.0, e / display_max));
  }
  return Tensor<float>::from({1, dims.height, dims.width}, std::move(out));
}

template double psnr<float>(const Tensor<float>&, const Tensor<float>&);
template double psnr<double>(const Tensor<double>&, const Tensor<double>&);
template double ssim<float>(const Tensor<float>&, const Tensor<float>&, const SsimOptions&);
template double ssim<double>(const Tensor<double>&, const Tensor<double>&, const SsimOptions&);
template Tensor<float> error_map<float>(const Tensor<float>&, const Tensor<float>&, double);
template Tensor<float> error_map<double>(const Tensor<double>&, const Tensor<double>&, double);

}  // namespace sdinet
