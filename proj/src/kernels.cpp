#include "sdinet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "sdinet/error.hpp"

namespace sdinet::kernels {

ConvGeometry ConvGeometry::make(std::int64_t batch, std::int64_t in_channels, std::int64_t in_h,
                                std::int64_t in_w, std::int64_t out_channels,
                                std::int64_t kernel_h, std::int64_t kernel_w, std::int64_t stride,
                                std::int64_t padding) {
  ConvGeometry g;
  g.batch = batch;
  g.in_channels = in_channels;
  g.in_h = in_h;
  g.in_w = in_w;
  g.out_channels = out_channels;
  g.kernel_h = kernel_h;
  g.kernel_w = kernel_w;
  g.stride = stride;
  g.padding = padding;
  g.out_h = (in_h + 2 * padding - kernel_h) / stride + 1;
  g.out_w = (in_w + 2 * padding - kernel_w) / stride + 1;
  if (g.out_h <= 0 || g.out_w <= 0) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  return g;
}

namespace {

// Output columns whose input column ox*stride - pad + k lies in [0, in_w).
struct Span1 {
  std::int64_t lo;
  std::int64_t hi;
};

Span1 valid_outputs(std::int64_t k, std::int64_t pad, std::int64_t stride, std::int64_t in_size,
                    std::int64_t out_size) {
  const std::int64_t first = pad - k;
  const std::int64_t lo = first <= 0 ? 0 : (first + stride - 1) / stride;
  const std::int64_t last = in_size - 1 + pad - k;
  if (last < 0) return {0, 0};
  const std::int64_t hi = std::min(out_size, last / stride + 1);
  return {lo, std::max(lo, hi)};
}

}  // namespace

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  const std::int64_t plane_in = g.in_h * g.in_w;
  const std::int64_t plane_out = g.out_h * g.out_w;
  const std::int64_t ksize = g.kernel_h * g.kernel_w;
  const std::int64_t s = g.stride;

#pragma omp parallel for collapse(2) schedule(static) if(g.batch * g.out_channels * plane_out * g.in_channels * ksize >= kParallelWork)
  for (std::int64_t n = 0; n < g.batch; ++n) {
    for (std::int64_t co = 0; co < g.out_channels; ++co) {
      T* out = y.data() + (n * g.out_channels + co) * plane_out;
      std::fill(out, out + plane_out, bias.empty() ? T(0) : bias[co]);
      for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
        const T* in = x.data() + (n * g.in_channels + ci) * plane_in;
        const T* wk = w.data() + (co * g.in_channels + ci) * ksize;
        for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
          const Span1 rows = valid_outputs(ky, g.padding, s, g.in_h, g.out_h);
          for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
            const T wv = wk[ky * g.kernel_w + kx];
            const Span1 cols = valid_outputs(kx, g.padding, s, g.in_w, g.out_w);
            for (std::int64_t oy = rows.lo; oy < rows.hi; ++oy) {
              const std::int64_t iy = oy * s - g.padding + ky;
              T* orow = out + oy * g.out_w;
              const T* irow = in + iy * g.in_w - g.padding + kx;
              if (s == 1) {
                for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox) orow[ox] += wv * irow[ox];
              } else {
                for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox) orow[ox] += wv * irow[ox * s];
              }
            }
          }
        }
      }
    }
  }
}

template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w,
                           std::span<T> dx) {
  const std::int64_t plane_in = g.in_h * g.in_w;
  const std::int64_t plane_out = g.out_h * g.out_w;
  const std::int64_t ksize = g.kernel_h * g.kernel_w;
  const std::int64_t s = g.stride;

#pragma omp parallel for collapse(2) schedule(static) if(g.batch * g.in_channels * g.out_channels * plane_out * ksize >= kParallelWork)
  for (std::int64_t n = 0; n < g.batch; ++n) {
    for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
      T* din = dx.data() + (n * g.in_channels + ci) * plane_in;
      for (std::int64_t co = 0; co < g.out_channels; ++co) {
        const T* dout = dy.data() + (n * g.out_channels + co) * plane_out;
        const T* wk = w.data() + (co * g.in_channels + ci) * ksize;
        for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
          const Span1 rows = valid_outputs(ky, g.padding, s, g.in_h, g.out_h);
          for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
            const T wv = wk[ky * g.kernel_w + kx];
            const Span1 cols = valid_outputs(kx, g.padding, s, g.in_w, g.out_w);
            for (std::int64_t oy = rows.lo; oy < rows.hi; ++oy) {
              const std::int64_t iy = oy * s - g.padding + ky;
              const T* drow = dout + oy * g.out_w;
              T* irow = din + iy * g.in_w - g.padding + kx;
              if (s == 1) {
                for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox) irow[ox] += wv * drow[ox];
              } else {
                for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox) irow[ox * s] += wv * drow[ox];
              }
            }
          }
        }
      }
    }
  }
}

template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy,
                            std::span<T> dw) {
  const std::int64_t plane_in = g.in_h * g.in_w;
  const std::int64_t plane_out = g.out_h * g.out_w;
  const std::int64_t ksize = g.kernel_h * g.kernel_w;
  const std::int64_t s = g.stride;

#pragma omp parallel for collapse(2) schedule(static) if(g.batch * g.out_channels * g.in_channels * plane_out * ksize >= kParallelWork)
  for (std::int64_t co = 0; co < g.out_channels; ++co) {
    for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
      T* dwk = dw.data() + (co * g.in_channels + ci) * ksize;
      for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
        const Span1 rows = valid_outputs(ky, g.padding, s, g.in_h, g.out_h);
        for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
          const Span1 cols = valid_outputs(kx, g.padding, s, g.in_w, g.out_w);
          T acc = 0;
          for (std::int64_t n = 0; n < g.batch; ++n) {
            const T* in = x.data() + (n * g.in_channels + ci) * plane_in;
            const T* dout = dy.data() + (n * g.out_channels + co) * plane_out;
            for (std::int64_t oy = rows.lo; oy < rows.hi; ++oy) {
              const std::int64_t iy = oy * s - g.padding + ky;
              const T* drow = dout + oy * g.out_w;
              const T* irow = in + iy * g.in_w - g.padding + kx;
              if (s == 1) {
                for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox) acc += drow[ox] * irow[ox];
              } else {
                for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox) acc += drow[ox] * irow[ox * s];
              }
            }
          }
          dwk[ky * g.kernel_w + kx] += acc;
        }
      }
    }
  }
}

template <class T>
void gemm(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate) {
  const std::int64_t a_stride = s.m * s.k;
  const std::int64_t b_stride = s.k * s.n;
  const std::int64_t c_stride = s.m * s.n;

#pragma omp parallel for collapse(2) schedule(static) if(s.batch * s.m * s.n * s.k >= kParallelWork)
  for (std::int64_t bi = 0; bi < s.batch; ++bi) {
    for (std::int64_t i = 0; i < s.m; ++i) {
      const T* ab = a.data() + bi * a_stride;
      const T* bb = b.data() + bi * b_stride;
      T* crow = c.data() + bi * c_stride + i * s.n;
      if (!accumulate) std::fill(crow, crow + s.n, T(0));
      if (!s.trans_b) {
        // i-p-j order: contiguous rows of b
        for (std::int64_t p = 0; p < s.k; ++p) {
          const T av = s.trans_a ? ab[p * s.m + i] : ab[i * s.k + p];
          const T* brow = bb + p * s.n;
          for (std::int64_t j = 0; j < s.n; ++j) crow[j] += av * brow[j];
        }
      } else {
        for (std::int64_t j = 0; j < s.n; ++j) {
          const T* brow = bb + j * s.k;
          T acc = 0;
          if (s.trans_a) {
            for (std::int64_t p = 0; p < s.k; ++p) acc += ab[p * s.m + i] * brow[p];
          } else {
            const T* arow = ab + i * s.k;
            for (std::int64_t p = 0; p < s.k; ++p) acc += arow[p] * brow[p];
          }
          crow[j] += acc;
        }
      }
    }
  }
}

bool is_power_of_two(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

namespace {

using cplx = std::complex<double>;

void fft_radix2(std::vector<cplx>& buf, bool inverse) {
  const std::size_t n = buf.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(buf[i], buf[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const cplx tw = std::polar(1.0, sign * 2.0 * std::numbers::pi * double(k) / double(len));
      for (std::size_t start = 0; start < n; start += len) {
        const cplx u = buf[start + k];
        const cplx v = buf[start + k + half] * tw;
        buf[start + k] = u + v;
        buf[start + k + half] = u - v;
      }
    }
  }
}

void dft_direct(std::vector<cplx>& buf, std::vector<cplx>& scratch, bool inverse) {
  const std::size_t n = buf.size();
  const double sign = inverse ? 1.0 : -1.0;
  scratch.assign(n, cplx(0.0, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc(0.0, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t phase = (k * t) % n;
      acc += buf[t] * std::polar(1.0, sign * 2.0 * std::numbers::pi * double(phase) / double(n));
    }
    scratch[k] = acc;
  }
  buf.swap(scratch);
}

void transform_line(std::vector<cplx>& buf, std::vector<cplx>& scratch, bool inverse) {
  if (is_power_of_two(static_cast<std::int64_t>(buf.size()))) {
    fft_radix2(buf, inverse);
  } else {
    dft_direct(buf, scratch, inverse);
  }
}

}  // namespace

void fft2_planes(std::span<std::complex<double>> planes, std::int64_t count, std::int64_t h,
                 std::int64_t w, bool inverse) {
#pragma omp parallel for schedule(static) if(count * h * w * 16 >= kParallelWork)
  for (std::int64_t p = 0; p < count; ++p) {
    cplx* plane = planes.data() + p * h * w;
    std::vector<cplx> line;
    std::vector<cplx> scratch;
    line.resize(static_cast<std::size_t>(w));
    for (std::int64_t y = 0; y < h; ++y) {
      std::copy(plane + y * w, plane + (y + 1) * w, line.begin());
      transform_line(line, scratch, inverse);
      std::copy(line.begin(), line.end(), plane + y * w);
    }
    line.resize(static_cast<std::size_t>(h));
    for (std::int64_t x = 0; x < w; ++x) {
      for (std::int64_t y = 0; y < h; ++y) line[y] = plane[y * w + x];
      transform_line(line, scratch, inverse);
      for (std::int64_t y = 0; y < h; ++y) plane[y * w + x] = line[y];
    }
  }
}

#define SDINET_INSTANTIATE_KERNELS(T)                                                         \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, \
                                  std::span<const T>, std::span<T>);                          \
  template void conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>,             \
                                         std::span<const T>, std::span<T>);                   \
  template void conv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>,            \
                                          std::span<const T>, std::span<T>);                  \
  template void gemm<T>(const GemmShape&, std::span<const T>, std::span<const T>, std::span<T>, \
                        bool);

SDINET_INSTANTIATE_KERNELS(float)
SDINET_INSTANTIATE_KERNELS(double)

#undef SDINET_INSTANTIATE_KERNELS

}  // namespace sdinet::kernels
