#include <gtest/gtest.h>
#include <omp.h>

#include <array>
#include <complex>
#include <random>
#include <vector>

#include "sdinet/error.hpp"
#include "sdinet/kernels.hpp"

using namespace sdinet;
namespace k = sdinet::kernels;

namespace {

template <class T>
std::vector<T> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return v;
}

struct ConvCase {
  std::int64_t n, cin, h, w, cout, kernel, stride;
};

const ConvCase kConvCases[] = {
    {1, 1, 5, 5, 1, 3, 1}, {2, 3, 8, 6, 4, 3, 1}, {1, 4, 9, 7, 2, 3, 2},
    {2, 2, 8, 8, 3, 1, 1}, {1, 3, 6, 10, 5, 5, 2}, {3, 2, 4, 4, 2, 3, 2},
    {2, 8, 16, 16, 8, 3, 1},  // above kParallelWork
};

template <class T>
void expect_close(const std::vector<T>& a, const std::vector<T>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

}  // namespace

template <class T>
class ConvKernels : public ::testing::Test {};
using KernelTypes = ::testing::Types<float, double>;
TYPED_TEST_SUITE(ConvKernels, KernelTypes);

TYPED_TEST(ConvKernels, ParallelMatchesReference) {
  using T = TypeParam;
  const double tol = std::is_same_v<T, float> ? 1e-5 : 1e-12;
  std::uint64_t seed = 1;
  for (const auto& c : kConvCases) {
    const auto g = k::ConvGeometry::make(c.n, c.cin, c.h, c.w, c.cout, c.kernel, c.kernel, c.stride,
                                         (c.kernel - 1) / 2);
    const auto x = random_vec<T>(c.n * c.cin * c.h * c.w, seed++);
    const auto w = random_vec<T>(c.cout * c.cin * c.kernel * c.kernel, seed++);
    const auto bias = random_vec<T>(c.cout, seed++);
    const std::size_t ny = g.batch * g.out_channels * g.out_h * g.out_w;
    std::vector<T> y1(ny), y2(ny);
    k::conv2d_forward<T>(g, x, w, bias, y1);
    k::reference::conv2d_forward<T>(g, x, w, bias, y2);
    expect_close(y1, y2, tol);

    const auto dy = random_vec<T>(ny, seed++);
    std::vector<T> dx1(x.size(), T(0.5)), dx2(x.size(), T(0.5));
    k::conv2d_backward_input<T>(g, dy, w, dx1);
    k::reference::conv2d_backward_input<T>(g, dy, w, dx2);
    expect_close(dx1, dx2, tol);

    std::vector<T> dw1(w.size(), T(-0.25)), dw2(w.size(), T(-0.25));
    k::conv2d_backward_weight<T>(g, x, dy, dw1);
    k::reference::conv2d_backward_weight<T>(g, x, dy, dw2);
    expect_close(dw1, dw2, tol * 10);
  }
}

TEST(ConvKernels, BackwardIsAdjointOfForward) {
  // <conv(x), dy> == <x, conv^T(dy)> and == <w, dW(x, dy)>
  const auto g = k::ConvGeometry::make(2, 3, 7, 6, 4, 3, 3, 2, 1);
  const auto x = random_vec<double>(2 * 3 * 7 * 6, 10);
  const auto w = random_vec<double>(4 * 3 * 9, 11);
  const std::size_t ny = g.batch * g.out_channels * g.out_h * g.out_w;
  const auto dy = random_vec<double>(ny, 12);
  std::vector<double> y(ny), dx(x.size(), 0.0), dw(w.size(), 0.0);
  k::conv2d_forward<double>(g, x, w, {}, y);
  k::conv2d_backward_input<double>(g, dy, w, dx);
  k::conv2d_backward_weight<double>(g, x, dy, dw);
  double lhs = 0, rx = 0, rw = 0;
  for (std::size_t i = 0; i < ny; ++i) lhs += y[i] * dy[i];
  for (std::size_t i = 0; i < x.size(); ++i) rx += x[i] * dx[i];
  for (std::size_t i = 0; i < w.size(); ++i) rw += w[i] * dw[i];
  EXPECT_NEAR(lhs, rx, 1e-11);
  EXPECT_NEAR(lhs, rw, 1e-11);
}

TEST(ConvKernels, GeometryValidation) {
  const auto g = k::ConvGeometry::make(1, 1, 8, 8, 1, 3, 3, 2, 1);
  EXPECT_EQ(g.out_h, 4);
  EXPECT_EQ(g.out_w, 4);
  EXPECT_THROW(k::ConvGeometry::make(1, 1, 2, 2, 1, 5, 5, 1, 0), DimensionError);
}

TEST(ConvKernels, ResultIndependentOfThreadCount) {
  const auto g = k::ConvGeometry::make(2, 8, 16, 16, 8, 3, 3, 1, 1);
  const auto x = random_vec<float>(2 * 8 * 256, 20);
  const auto w = random_vec<float>(8 * 8 * 9, 21);
  const std::size_t ny = 2 * 8 * 256;
  const auto dy = random_vec<float>(ny, 22);
  const int saved = omp_get_max_threads();
  std::vector<float> y1(ny), y4(ny), dw1(w.size()), dw4(w.size()), dx1(x.size()), dx4(x.size());
  omp_set_num_threads(1);
  k::conv2d_forward<float>(g, x, w, {}, y1);
  k::conv2d_backward_weight<float>(g, x, dy, dw1);
  k::conv2d_backward_input<float>(g, dy, w, dx1);
  omp_set_num_threads(4);
  k::conv2d_forward<float>(g, x, w, {}, y4);
  k::conv2d_backward_weight<float>(g, x, dy, dw4);
  k::conv2d_backward_input<float>(g, dy, w, dx4);
  omp_set_num_threads(saved);
  EXPECT_EQ(y1, y4);
  EXPECT_EQ(dw1, dw4);
  EXPECT_EQ(dx1, dx4);
}

TEST(Gemm, AllTransposeCombinationsMatchReference) {
  std::uint64_t seed = 40;
  // the second shape is above kParallelWork
  for (auto [batch, m, n, kk] : {std::array<std::int64_t, 4>{3, 5, 7, 4}, {4, 32, 24, 16}})
  for (bool ta : {false, true})
    for (bool tb : {false, true})
      for (bool acc : {false, true}) {
        k::GemmShape s{batch, m, n, kk, ta, tb};
        const auto a = random_vec<double>(s.batch * s.m * s.k, seed++);
        const auto b = random_vec<double>(s.batch * s.k * s.n, seed++);
        auto c1 = random_vec<double>(s.batch * s.m * s.n, seed++);
        auto c2 = c1;
        k::gemm<double>(s, a, b, c1, acc);
        k::reference::gemm<double>(s, a, b, c2, acc);
        expect_close(c1, c2, 1e-12);
      }
}

TEST(Gemm, ReferenceAgainstHandComputed) {
  // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
  k::GemmShape s{1, 2, 2, 2, false, false};
  std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8}, c(4);
  k::reference::gemm<double>(s, a, b, c, false);
  EXPECT_EQ(c, (std::vector<double>{19, 22, 43, 50}));
  s.trans_b = true;  // b read as [n,k]: rows (5,6),(7,8) -> b^T = [5 7; 6 8]
  k::gemm<double>(s, a, b, c, false);
  EXPECT_EQ(c, (std::vector<double>{17, 23, 39, 53}));
}

TEST(Fft, FastMatchesNaiveDft) {
  std::uint64_t seed = 60;
  const std::pair<std::int64_t, std::int64_t> sizes[] = {{4, 4}, {8, 8}, {16, 8}, {6, 4}, {5, 7}, {1, 8}, {12, 10}};
  for (auto [h, w] : sizes) {
    for (bool inverse : {false, true}) {
      const std::int64_t count = 3;
      const auto re = random_vec<double>(count * h * w, seed++);
      const auto im = random_vec<double>(count * h * w, seed++);
      std::vector<std::complex<double>> a(re.size()), b(re.size());
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = b[i] = {re[i], im[i]};
      k::fft2_planes(a, count, h, w, inverse);
      k::reference::dft2_planes(b, count, h, w, inverse);
      for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(a[i].real(), b[i].real(), 1e-10) << h << "x" << w;
        EXPECT_NEAR(a[i].imag(), b[i].imag(), 1e-10) << h << "x" << w;
      }
    }
  }
}

TEST(Fft, InverseUndoesForwardUpToScale) {
  const std::int64_t h = 8, w = 4;
  const auto re = random_vec<double>(h * w, 70);
  std::vector<std::complex<double>> a(re.begin(), re.end());
  k::fft2_planes(a, 1, h, w, false);
  k::fft2_planes(a, 1, h, w, true);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i].real() / double(h * w), re[i], 1e-13);
    EXPECT_NEAR(a[i].imag(), 0.0, 1e-12);
  }
}

TEST(Fft, PowerOfTwo) {
  EXPECT_TRUE(k::is_power_of_two(1));
  EXPECT_TRUE(k::is_power_of_two(64));
  EXPECT_FALSE(k::is_power_of_two(0));
  EXPECT_FALSE(k::is_power_of_two(12));
}
