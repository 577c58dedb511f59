#include <cmath>
#include <numbers>
#include <vector>

#include "sdinet/kernels.hpp"

namespace sdinet::kernels::reference {

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t co = 0; co < g.out_channels; ++co)
      for (std::int64_t oy = 0; oy < g.out_h; ++oy)
        for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
          T acc = bias.empty() ? T(0) : bias[co];
          for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
            for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::int64_t iy = oy * g.stride - g.padding + ky;
                const std::int64_t ix = ox * g.stride - g.padding + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                acc += w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] *
                       x[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix];
              }
          y[((n * g.out_channels + co) * g.out_h + oy) * g.out_w + ox] = acc;
        }
}

template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w,
                           std::span<T> dx) {
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t co = 0; co < g.out_channels; ++co)
      for (std::int64_t oy = 0; oy < g.out_h; ++oy)
        for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
          const T d = dy[((n * g.out_channels + co) * g.out_h + oy) * g.out_w + ox];
          for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
            for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::int64_t iy = oy * g.stride - g.padding + ky;
                const std::int64_t ix = ox * g.stride - g.padding + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                dx[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix] +=
                    d * w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
              }
        }
}

template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy,
                            std::span<T> dw) {
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t co = 0; co < g.out_channels; ++co)
      for (std::int64_t oy = 0; oy < g.out_h; ++oy)
        for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
          const T d = dy[((n * g.out_channels + co) * g.out_h + oy) * g.out_w + ox];
          for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
            for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::int64_t iy = oy * g.stride - g.padding + ky;
                const std::int64_t ix = ox * g.stride - g.padding + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                dw[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] +=
                    d * x[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix];
              }
        }
}

template <class T>
void gemm(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate) {
  for (std::int64_t bi = 0; bi < s.batch; ++bi)
    for (std::int64_t i = 0; i < s.m; ++i)
      for (std::int64_t j = 0; j < s.n; ++j) {
        T acc = 0;
        for (std::int64_t p = 0; p < s.k; ++p) {
          const T av = s.trans_a ? a[bi * s.m * s.k + p * s.m + i] : a[bi * s.m * s.k + i * s.k + p];
          const T bv = s.trans_b ? b[bi * s.k * s.n + j * s.k + p] : b[bi * s.k * s.n + p * s.n + j];
          acc += av * bv;
        }
        T& out = c[bi * s.m * s.n + i * s.n + j];
        out = accumulate ? out + acc : acc;
      }
}

void dft2_planes(std::span<std::complex<double>> planes, std::int64_t count, std::int64_t h,
                 std::int64_t w, bool inverse) {
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<std::complex<double>> out(static_cast<std::size_t>(h * w));
  for (std::int64_t p = 0; p < count; ++p) {
    std::complex<double>* plane = planes.data() + p * h * w;
    for (std::int64_t u = 0; u < h; ++u)
      for (std::int64_t v = 0; v < w; ++v) {
        std::complex<double> acc(0.0, 0.0);
        for (std::int64_t y = 0; y < h; ++y)
          for (std::int64_t x = 0; x < w; ++x) {
            const double phase = double((u * y) % h) / double(h) + double((v * x) % w) / double(w);
            acc += plane[y * w + x] * std::polar(1.0, sign * 2.0 * std::numbers::pi * phase);
          }
        out[u * w + v] = acc;
      }
    std::copy(out.begin(), out.end(), plane);
  }
}

#define SDINET_INSTANTIATE_REFERENCE(T)                                                       \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, \
                                  std::span<const T>, std::span<T>);                          \
  template void conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>,             \
                                         std::span<const T>, std::span<T>);                   \
  template void conv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>,            \
                                          std::span<const T>, std::span<T>);                  \
  template void gemm<T>(const GemmShape&, std::span<const T>, std::span<const T>, std::span<T>, \
                        bool);

SDINET_INSTANTIATE_REFERENCE(float)
SDINET_INSTANTIATE_REFERENCE(double)

#undef SDINET_INSTANTIATE_REFERENCE

}  // namespace sdinet::kernels::reference
