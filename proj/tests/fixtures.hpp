#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sdinet/tensor.hpp"

// Integer-defined image fixtures shared with tests/reference/metrics_reference.py.
namespace fixtures {

using Bytes = std::vector<std::int64_t>;  // [C,H,W] values 0..255

struct ByteImage {
  std::int64_t c = 0, h = 0, w = 0;
  Bytes v;
  std::int64_t& at(std::int64_t ch, std::int64_t y, std::int64_t x) { return v[(ch * h + y) * w + x]; }
  std::int64_t at(std::int64_t ch, std::int64_t y, std::int64_t x) const {
    return v[(ch * h + y) * w + x];
  }
};

inline std::int64_t hash_byte(std::uint64_t seed, std::uint64_t c, std::uint64_t y, std::uint64_t x) {
  std::uint32_t v = static_cast<std::uint32_t>(seed * 0x9E3779B1u + c * 0x85EBCA77u + y * 0xC2B2AE3Du +
                                               x * 0x27D4EB2Fu);
  v ^= v >> 15;
  v *= 0x2C1B3C6Du;
  v ^= v >> 12;
  return v & 0xFF;
}

inline ByteImage blank(std::int64_t c, std::int64_t h, std::int64_t w) {
  return {c, h, w, Bytes(static_cast<std::size_t>(c * h * w), 0)};
}

inline ByteImage textured(std::uint64_t seed, std::int64_t c, std::int64_t h, std::int64_t w) {
  auto img = blank(c, h, w);
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        img.at(ch, y, x) = (x * 5 + y * 3 + ch * 40 + hash_byte(seed, ch, y, x) % 48) % 256;
  return img;
}

// Floor division matching Python's // for negative numerators.
inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline ByteImage noisy(const ByteImage& base, std::uint64_t seed, std::int64_t amplitude) {
  auto out = base;
  for (std::int64_t ch = 0; ch < base.c; ++ch)
    for (std::int64_t y = 0; y < base.h; ++y)
      for (std::int64_t x = 0; x < base.w; ++x) {
        const auto d = floor_div((hash_byte(seed, ch, y, x) - 128) * amplitude, 128);
        out.at(ch, y, x) = std::clamp<std::int64_t>(base.at(ch, y, x) + d, 0, 255);
      }
  return out;
}

inline ByteImage box_blur(const ByteImage& base) {
  auto out = base;
  for (std::int64_t ch = 0; ch < base.c; ++ch)
    for (std::int64_t y = 0; y < base.h; ++y)
      for (std::int64_t x = 0; x < base.w; ++x) {
        std::int64_t s = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            s += base.at(ch, std::clamp<std::int64_t>(y + dy, 0, base.h - 1),
                         std::clamp<std::int64_t>(x + dx, 0, base.w - 1));
        out.at(ch, y, x) = (s + 4) / 9;
      }
  return out;
}

inline ByteImage shift_right(const ByteImage& base) {
  auto out = base;
  for (std::int64_t ch = 0; ch < base.c; ++ch)
    for (std::int64_t y = 0; y < base.h; ++y)
      for (std::int64_t x = 0; x < base.w; ++x) out.at(ch, y, x) = base.at(ch, y, std::max<std::int64_t>(0, x - 1));
  return out;
}

inline ByteImage checker(std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t block) {
  auto img = blank(c, h, w);
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) img.at(ch, y, x) = ((y / block + x / block) % 2) ? 255 : 0;
  return img;
}

inline ByteImage map_bytes(ByteImage img, std::int64_t (*f)(std::int64_t)) {
  for (auto& v : img.v) v = f(v);
  return img;
}

inline sdinet::Tensor<double> to_tensor(const ByteImage& img) {
  std::vector<double> v(img.v.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(img.v[i]) / 255.0;
  return sdinet::Tensor<double>::from({img.c, img.h, img.w}, std::move(v));
}

struct MetricPair {
  std::string name;
  sdinet::Tensor<double> pred;
  sdinet::Tensor<double> gt;
};

inline std::vector<MetricPair> metric_pairs() {
  std::vector<MetricPair> out;
  const auto base = textured(1, 3, 32, 32);
  const auto dark = map_bytes(textured(2, 3, 32, 32), [](std::int64_t v) { return v * 9 / 10; });
  {
    const auto g = to_tensor(dark);
    std::vector<double> p(g.values());
    for (auto& v : p) v += 0.1;
    out.push_back({"constant_offset", sdinet::Tensor<double>::from(g.shape(), p), g});
  }
  out.push_back({"small_noise", to_tensor(noisy(base, 11, 6)), to_tensor(base)});
  out.push_back({"large_noise", to_tensor(noisy(base, 12, 90)), to_tensor(base)});
  out.push_back({"darkened", to_tensor(map_bytes(base, [](std::int64_t v) { return v / 2; })), to_tensor(base)});
  out.push_back({"box_blur", to_tensor(box_blur(base)), to_tensor(base)});
  out.push_back({"shift_one", to_tensor(shift_right(base)), to_tensor(base)});
  const auto chk = checker(3, 32, 32, 4);
  out.push_back({"inverted_checker", to_tensor(map_bytes(chk, [](std::int64_t v) { return 255 - v; })),
                 to_tensor(chk)});
  const auto wide = textured(3, 3, 40, 48);
  out.push_back({"non_square", to_tensor(noisy(wide, 13, 40)), to_tensor(wide)});
  return out;
}

struct FrozenMetrics {
  const char* name;
  double psnr;
  double ssim;
};

// Generated by tests/reference/metrics_reference.py (scikit-image 0.25).
inline constexpr FrozenMetrics kFrozenMetrics[] = {
    {"constant_offset", 20.000000000000, 0.979602890357},
    {"small_noise", 37.263660863297, 0.985177757717},
    {"large_noise", 14.770719485647, 0.333911765796},
    {"darkened", 9.902544850578, 0.656994462466},
    {"box_blur", 16.317705937796, 0.502378353266},
    {"shift_one", 12.719293842575, 0.269245492121},
    {"inverted_checker", 0.000000000000, -0.903411668366},
    {"non_square", 21.243411403953, 0.681033015105},
};

template <class T>
sdinet::Tensor<T> random_tensor(sdinet::Shape shape, std::uint64_t seed, double lo = -1.0,
                                double hi = 1.0, bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> v(static_cast<std::size_t>(sdinet::shape_numel(shape)));
  for (auto& x : v) x = static_cast<T>(u(rng));
  return sdinet::Tensor<T>::from(std::move(shape), std::move(v), requires_grad);
}

}  // namespace fixtures
