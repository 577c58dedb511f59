#pragma once

#include <complex>
#include <cstdint>
#include <span>

// Raw compute kernels behind the tensor ops.
//
// The top-level namespace holds the OpenMP versions used by the ops. Every
// parallel loop splits over independent output elements and keeps a fixed
// per-element summation order, so results do not depend on the thread count.
// `reference` holds plain serial loops kept as the test oracle and the
// benchmark baseline.
namespace sdinet::kernels {

// Loops with fewer scalar operations than this run on the calling thread;
// below it a parallel region costs more than it saves.
inline constexpr std::int64_t kParallelWork = 1 << 15;

struct ConvGeometry {
  std::int64_t batch = 0;
  std::int64_t in_channels = 0;
  std::int64_t in_h = 0;
  std::int64_t in_w = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel_h = 0;
  std::int64_t kernel_w = 0;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t out_h = 0;
  std::int64_t out_w = 0;

  static ConvGeometry make(std::int64_t batch, std::int64_t in_channels, std::int64_t in_h,
                           std::int64_t in_w, std::int64_t out_channels, std::int64_t kernel_h,
                           std::int64_t kernel_w, std::int64_t stride, std::int64_t padding);
};

// y = conv(x, w) + bias. `bias` may be empty. Overwrites y.
template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y);
// dx += conv^T(dy, w)
template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w,
                           std::span<T> dx);
// dw += correlate(x, dy)
template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy,
                            std::span<T> dw);

struct GemmShape {
  std::int64_t batch = 1;
  std::int64_t m = 0;
  std::int64_t n = 0;
  std::int64_t k = 0;
  bool trans_a = false;  // a stored as [k,m] per batch
  bool trans_b = false;  // b stored as [n,k] per batch
};

// c[b] = op(a[b]) · op(b[b]), or c[b] += ... when `accumulate`.
template <class T>
void gemm(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate);

// In-place unnormalized 2-D DFT of `count` contiguous [h,w] planes.
// `inverse` flips the exponent sign (no 1/(hw) factor).
void fft2_planes(std::span<std::complex<double>> planes, std::int64_t count, std::int64_t h,
                 std::int64_t w, bool inverse);

bool is_power_of_two(std::int64_t n);

namespace reference {

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y);
template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w,
                           std::span<T> dx);
template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy,
                            std::span<T> dw);
template <class T>
void gemm(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate);
// O((hw)^2) per plane.
void dft2_planes(std::span<std::complex<double>> planes, std::int64_t count, std::int64_t h,
                 std::int64_t w, bool inverse);

}  // namespace reference
}  // namespace sdinet::kernels
