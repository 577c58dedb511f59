#include "sdinet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "sdinet/error.hpp"
#include "sdinet/kernels.hpp"

namespace sdinet::ops {

namespace {

template <class T>
bool tracks(const Tensor<T>& t) {
  return t.defined() && t.requires_grad();
}

template <class T>
bool any_tracks(std::initializer_list<const Tensor<T>*> inputs) {
  if (!grad_enabled()) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>* t) { return tracks(*t); });
}

template <class T>
Tensor<T> result(Shape shape, std::vector<T> values) {
  return Tensor<T>::from(std::move(shape), std::move(values));
}

// Registers `fn` on the tape with the given inputs/outputs and marks the
// outputs as requiring grad.
template <class T, class Fn>
void record(std::string_view op, std::initializer_list<Tensor<T>> inputs,
            std::initializer_list<Tensor<T>> outputs, Fn&& fn) {
  TapeNode<T> node;
  node.op = op;
  for (const auto& t : inputs)
    if (t.defined()) node.inputs.push_back(t.storage());
  for (auto t : outputs) {
    t.set_requires_grad(true);
    node.outputs.push_back(t.storage());
  }
  node.backward = std::forward<Fn>(fn);
  active_tape<T>().record(std::move(node));
}

template <class T>
std::span<T> grad_of(const Tensor<T>& t) {
  return t.storage()->grad_buffer();
}

struct BroadcastPlan {
  Shape out;
  std::vector<std::int64_t> stride_a;
  std::vector<std::int64_t> stride_b;
};

std::vector<std::int64_t> aligned_strides(const Shape& shape, const Shape& out) {
  const std::size_t r = out.size();
  const std::size_t offset = r - shape.size();
  std::vector<std::int64_t> strides(r, 0);
  std::int64_t s = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    strides[i + offset] = shape[i] == 1 ? 0 : s;
    s *= shape[i];
  }
  return strides;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  p.out = broadcast_shape(a, b);
  p.stride_a = aligned_strides(a, p.out);
  p.stride_b = aligned_strides(b, p.out);
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element in order.
template <class F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const int r = static_cast<int>(p.out.size());
  const std::int64_t n = shape_numel(p.out);
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  const std::int64_t inner = p.out[r - 1];
  const std::int64_t sa = p.stride_a[r - 1];
  const std::int64_t sb = p.stride_b[r - 1];
  std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
  std::int64_t ia = 0;
  std::int64_t ib = 0;
  for (std::int64_t base = 0; base < n; base += inner) {
    for (std::int64_t j = 0; j < inner; ++j) f(base + j, ia + j * sa, ib + j * sb);
    for (int d = r - 2; d >= 0; --d) {
      ++idx[d];
      ia += p.stride_a[d];
      ib += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.stride_a[d] * p.out[d];
      ib -= p.stride_b[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

enum class BinaryOp { Add, Sub, Mul };

template <class T>
Tensor<T> binary(const char* name, BinaryOp op, const Tensor<T>& a, const Tensor<T>& b) {
  const auto av = a.data();
  const auto bv = b.data();
  const bool same = a.shape() == b.shape();
  const BroadcastPlan plan = same ? BroadcastPlan{a.shape(), {}, {}} : plan_broadcast(a.shape(), b.shape());
  std::vector<T> out(static_cast<std::size_t>(shape_numel(plan.out)));

  auto apply = [op](T x, T y) {
    switch (op) {
      case BinaryOp::Add: return x + y;
      case BinaryOp::Sub: return x - y;
      case BinaryOp::Mul: return x * y;
    }
    return T(0);
  };
  if (same) {
    const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static) if(n >= kernels::kParallelWork)
    for (std::int64_t i = 0; i < n; ++i) out[i] = apply(av[i], bv[i]);
  } else {
    for_each_broadcast(plan, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
      out[o] = apply(av[ia], bv[ib]);
    });
  }
  auto y = result(plan.out, std::move(out));
  if (any_tracks({&a, &b})) {
    record<T>(name, {a, b}, {y}, [a, b, y, plan, same, op]() {
      const auto g = y.grad();
      const auto av = a.data();
      const auto bv = b.data();
      const bool ta = a.requires_grad();
      const bool tb = b.requires_grad();
      std::span<T> ga = ta ? grad_of(a) : std::span<T>{};
      std::span<T> gb = tb ? grad_of(b) : std::span<T>{};
      auto step = [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
        switch (op) {
          case BinaryOp::Add:
            if (ta) ga[ia] += g[o];
            if (tb) gb[ib] += g[o];
            break;
          case BinaryOp::Sub:
            if (ta) ga[ia] += g[o];
            if (tb) gb[ib] -= g[o];
            break;
          case BinaryOp::Mul:
            if (ta) ga[ia] += g[o] * bv[ib];
            if (tb) gb[ib] += g[o] * av[ia];
            break;
        }
      };
      if (same) {
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(g.size()); ++i) step(i, i, i);
      } else {
        for_each_broadcast(plan, step);
      }
    });
  }
  return y;
}

// Elementwise unary op with derivative expressed through (x, y).
template <class T, class F, class DF>
Tensor<T> unary(const char* name, const Tensor<T>& x, F f, DF df) {
  const auto xv = x.data();
  const auto n = static_cast<std::int64_t>(xv.size());
  std::vector<T> out(xv.size());
#pragma omp parallel for schedule(static) if(n >= kernels::kParallelWork)
  for (std::int64_t i = 0; i < n; ++i) out[i] = f(xv[i]);
  auto y = result(x.shape(), std::move(out));
  if (any_tracks({&x})) {
    record<T>(name, {x}, {y}, [x, y, df]() {
      const auto g = y.grad();
      const auto xv = x.data();
      const auto yv = y.data();
      auto gx = grad_of(x);
      const auto n = static_cast<std::int64_t>(g.size());
#pragma omp parallel for schedule(static) if(n >= kernels::kParallelWork)
      for (std::int64_t i = 0; i < n; ++i) gx[i] += g[i] * df(xv[i], yv[i]);
    });
  }
  return y;
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(s));
  }
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary("add", BinaryOp::Add, a, b);
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary("sub", BinaryOp::Sub, a, b);
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary("mul", BinaryOp::Mul, a, b);
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary(
      "scale", x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <class T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary(
      "abs", x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)); });
}

template <class T>
Tensor<T> clamp01(const Tensor<T>& x) {
  return unary(
      "clamp01", x, [](T v) { return std::clamp(v, T(0), T(1)); },
      [](T v, T) { return (v > 0 && v < 1) ? T(1) : T(0); });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  return unary(
      "gelu", x,
      [](T v) { return T(0.5) * v * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>)); },
      [](T v, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>));
        const T pdf = std::exp(T(-0.5) * v * v) * std::numbers::inv_sqrtpi_v<T> /
                      std::numbers::sqrt2_v<T>;
        return cdf + v * pdf;
      });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(
      "relu", x, [](T v) { return (v > 0 || std::isnan(v)) ? v : T(0); },  // NaN propagates
      [](T v, T) { return v > 0 ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      "sigmoid", x,
      [](T v) {
        if (v >= 0) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& x) {
  double acc = 0.0;
  for (const T v : x.data()) acc += v;
  auto y = Tensor<T>::scalar(static_cast<T>(acc));
  if (any_tracks({&x})) {
    record<T>("sum_all", {x}, {y}, [x, y]() {
      const T g = y.grad()[0];
      for (auto& v : grad_of(x)) v += g;
    });
  }
  return y;
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& x) {
  double acc = 0.0;
  for (const T v : x.data()) acc += v;
  const double n = static_cast<double>(x.numel());
  auto y = Tensor<T>::scalar(static_cast<T>(acc / n));
  if (any_tracks({&x})) {
    record<T>("mean_all", {x}, {y}, [x, y, n]() {
      const T g = static_cast<T>(y.grad()[0] / n);
      for (auto& v : grad_of(x)) v += g;
    });
  }
  return y;
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const int r = a.rank();
  if (r != b.rank() || (r != 2 && r != 3)) {
    throw DimensionError("matmul: expected two rank-2 or two rank-3 tensors, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  kernels::GemmShape s;
  s.batch = r == 3 ? a.dim(0) : 1;
  s.m = a.dim(-2);
  s.k = a.dim(-1);
  s.n = b.dim(-1);
  if (b.dim(-2) != s.k || (r == 3 && b.dim(0) != s.batch)) {
    throw DimensionError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Shape out_shape = r == 3 ? Shape{s.batch, s.m, s.n} : Shape{s.m, s.n};
  std::vector<T> out(static_cast<std::size_t>(s.batch * s.m * s.n));
  kernels::gemm<T>(s, a.data(), b.data(), out, false);
  auto y = result(out_shape, std::move(out));
  if (any_tracks({&a, &b})) {
    record<T>("matmul", {a, b}, {y}, [a, b, y, s]() {
      const auto g = y.grad();
      if (a.requires_grad()) {
        // dA = dC · Bᵀ
        kernels::GemmShape sa{s.batch, s.m, s.k, s.n, false, true};
        kernels::gemm<T>(sa, g, b.data(), grad_of(a), true);
      }
      if (b.requires_grad()) {
        // dB = Aᵀ · dC
        kernels::GemmShape sb{s.batch, s.k, s.n, s.m, true, false};
        kernels::gemm<T>(sb, a.data(), g, grad_of(b), true);
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  const auto xv = x.data();
  if (!all_finite(xv)) throw NumericError("softmax_lastdim: non-finite input");
  const std::int64_t cols = x.dim(-1);
  const std::int64_t rows = x.numel() / cols;
  std::vector<T> out(xv.size());
#pragma omp parallel for schedule(static) if(rows * cols >= kernels::kParallelWork)
  for (std::int64_t rIdx = 0; rIdx < rows; ++rIdx) {
    const T* in = xv.data() + rIdx * cols;
    T* o = out.data() + rIdx * cols;
    const T mx = *std::max_element(in, in + cols);
    T total = 0;
    for (std::int64_t j = 0; j < cols; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::int64_t j = 0; j < cols; ++j) o[j] /= total;
  }
  auto y = result(x.shape(), std::move(out));
  if (any_tracks({&x})) {
    record<T>("softmax_lastdim", {x}, {y}, [x, y, rows, cols]() {
      const auto g = y.grad();
      const auto yv = y.data();
      auto gx = grad_of(x);
#pragma omp parallel for schedule(static) if(rows * cols >= kernels::kParallelWork)
      for (std::int64_t rIdx = 0; rIdx < rows; ++rIdx) {
        const std::int64_t base = rIdx * cols;
        T dot = 0;
        for (std::int64_t j = 0; j < cols; ++j) dot += g[base + j] * yv[base + j];
        for (std::int64_t j = 0; j < cols; ++j) gx[base + j] += yv[base + j] * (g[base + j] - dot);
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int padding) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(weight.shape(), 4, "conv2d weight");
  if (weight.dim(1) != x.dim(1)) {
    throw DimensionError("conv2d: input has " + std::to_string(x.dim(1)) +
                         " channels, weight expects " + std::to_string(weight.dim(1)));
  }
  if (weight.dim(2) % 2 == 0 || weight.dim(3) % 2 == 0) {
    throw DimensionError("conv2d: kernel sides must be odd, got " + shape_str(weight.shape()));
  }
  if (stride != 1 && stride != 2) throw DimensionError("conv2d: stride must be 1 or 2");
  if (padding < 0) throw DimensionError("conv2d: negative padding");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
    throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(weight.dim(0)) + " output channels");
  }
  const auto g = kernels::ConvGeometry::make(x.dim(0), x.dim(1), x.dim(2), x.dim(3),
                                             weight.dim(0), weight.dim(2), weight.dim(3), stride,
                                             padding);
  std::vector<T> out(static_cast<std::size_t>(g.batch * g.out_channels * g.out_h * g.out_w));
  kernels::conv2d_forward<T>(g, x.data(), weight.data(),
                             bias.defined() ? bias.data() : std::span<const T>{}, out);
  auto y = result({g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out));
  if (any_tracks({&x, &weight, &bias})) {
    record<T>("conv2d", {x, weight, bias}, {y}, [x, weight, bias, y, g]() {
      const auto dy = y.grad();
      if (x.requires_grad()) kernels::conv2d_backward_input<T>(g, dy, weight.data(), grad_of(x));
      if (weight.requires_grad()) {
        kernels::conv2d_backward_weight<T>(g, x.data(), dy, grad_of(weight));
      }
      if (tracks(bias)) {
        auto gb = grad_of(bias);
        const std::int64_t plane = g.out_h * g.out_w;
        for (std::int64_t co = 0; co < g.out_channels; ++co) {
          T acc = 0;
          for (std::int64_t n = 0; n < g.batch; ++n) {
            const T* d = dy.data() + (n * g.out_channels + co) * plane;
            for (std::int64_t i = 0; i < plane; ++i) acc += d[i];
          }
          gb[co] += acc;
        }
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> layer_norm_channels(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                              double eps) {
  require_rank(x.shape(), 4, "layer_norm input");
  const std::int64_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("layer_norm: gamma/beta must have " + std::to_string(c) + " entries");
  }
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  std::vector<T> normalized(xv.size());
  std::vector<T> inv_std(static_cast<std::size_t>(n * plane));
  std::vector<T> out(xv.size());
#pragma omp parallel for collapse(2) schedule(static) if(n * plane * c >= kernels::kParallelWork)
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t p = 0; p < plane; ++p) {
      const T* base = xv.data() + b * c * plane + p;
      T mean = 0;
      for (std::int64_t ch = 0; ch < c; ++ch) mean += base[ch * plane];
      mean /= T(c);
      T var = 0;
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const T d = base[ch * plane] - mean;
        var += d * d;
      }
      var /= T(c);
      const T istd = T(1) / std::sqrt(var + T(eps));
      inv_std[b * plane + p] = istd;
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const std::int64_t i = (b * c + ch) * plane + p;
        normalized[i] = (xv[i] - mean) * istd;
        out[i] = gv[ch] * normalized[i] + bv[ch];
      }
    }
  }
  auto y = result(x.shape(), std::move(out));
  if (any_tracks({&x, &gamma, &beta})) {
    record<T>("layer_norm", {x, gamma, beta}, {y},
              [x, gamma, beta, y, normalized = std::move(normalized),
               inv_std = std::move(inv_std), n, c, plane]() {
                const auto g = y.grad();
                const auto gv = gamma.data();
                if (x.requires_grad()) {
                  auto gx = grad_of(x);
#pragma omp parallel for collapse(2) schedule(static) if(n * plane * c >= kernels::kParallelWork)
                  for (std::int64_t b = 0; b < n; ++b) {
                    for (std::int64_t p = 0; p < plane; ++p) {
                      T mean_d = 0;
                      T mean_dx = 0;
                      for (std::int64_t ch = 0; ch < c; ++ch) {
                        const std::int64_t i = (b * c + ch) * plane + p;
                        const T d = g[i] * gv[ch];
                        mean_d += d;
                        mean_dx += d * normalized[i];
                      }
                      mean_d /= T(c);
                      mean_dx /= T(c);
                      const T istd = inv_std[b * plane + p];
                      for (std::int64_t ch = 0; ch < c; ++ch) {
                        const std::int64_t i = (b * c + ch) * plane + p;
                        gx[i] += istd * (g[i] * gv[ch] - mean_d - normalized[i] * mean_dx);
                      }
                    }
                  }
                }
                if (gamma.requires_grad() || beta.requires_grad()) {
                  for (std::int64_t ch = 0; ch < c; ++ch) {
                    T dg = 0;
                    T db = 0;
                    for (std::int64_t b = 0; b < n; ++b) {
                      for (std::int64_t p = 0; p < plane; ++p) {
                        const std::int64_t i = (b * c + ch) * plane + p;
                        dg += g[i] * normalized[i];
                        db += g[i];
                      }
                    }
                    if (gamma.requires_grad()) grad_of(gamma)[ch] += dg;
                    if (beta.requires_grad()) grad_of(beta)[ch] += db;
                  }
                }
              });
  }
  return y;
}

template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool");
  const std::int64_t planes = x.dim(0) * x.dim(1);
  const std::int64_t plane = x.dim(2) * x.dim(3);
  const auto xv = x.data();
  std::vector<T> out(static_cast<std::size_t>(planes));
  for (std::int64_t i = 0; i < planes; ++i) {
    T acc = 0;
    for (std::int64_t j = 0; j < plane; ++j) acc += xv[i * plane + j];
    out[i] = acc / T(plane);
  }
  auto y = result({x.dim(0), x.dim(1), 1, 1}, std::move(out));
  if (any_tracks({&x})) {
    record<T>("global_avg_pool", {x}, {y}, [x, y, planes, plane]() {
      const auto g = y.grad();
      auto gx = grad_of(x);
      for (std::int64_t i = 0; i < planes; ++i) {
        const T share = g[i] / T(plane);
        for (std::int64_t j = 0; j < plane; ++j) gx[i * plane + j] += share;
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const Shape& first = parts.front().shape();
  if (first.size() < 2) throw DimensionError("concat_channels: inputs need rank >= 2");
  std::int64_t channels = 0;
  for (const auto& p : parts) {
    Shape a = p.shape();
    Shape b = first;
    if (a.size() != b.size()) throw DimensionError("concat_channels: rank mismatch");
    channels += a[1];
    a[1] = b[1] = 0;
    if (a != b) {
      throw DimensionError("concat_channels: non-channel dims differ: " + shape_str(p.shape()) +
                           " vs " + shape_str(first));
    }
  }
  const std::int64_t batch = first[0];
  std::int64_t inner = 1;
  for (std::size_t i = 2; i < first.size(); ++i) inner *= first[i];
  Shape out_shape = first;
  out_shape[1] = channels;
  std::vector<T> out(static_cast<std::size_t>(batch * channels * inner));
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const std::int64_t chunk = p.dim(1) * inner;
    const auto pv = p.data();
    for (std::int64_t b = 0; b < batch; ++b) {
      std::copy(pv.begin() + b * chunk, pv.begin() + (b + 1) * chunk,
                out.begin() + b * channels * inner + offset);
    }
    offset += chunk;
  }
  auto y = result(out_shape, std::move(out));
  bool need = false;
  if (grad_enabled())
    for (const auto& p : parts) need = need || p.requires_grad();
  if (need) {
    TapeNode<T> node;
    node.op = "concat_channels";
    for (const auto& p : parts) node.inputs.push_back(p.storage());
    y.set_requires_grad(true);
    node.outputs.push_back(y.storage());
    node.backward = [parts, y, batch, channels, inner]() {
      const auto g = y.grad();
      std::int64_t offset = 0;
      for (const auto& p : parts) {
        const std::int64_t chunk = p.dim(1) * inner;
        if (p.requires_grad()) {
          auto gp = grad_of(p);
          for (std::int64_t b = 0; b < batch; ++b) {
            const T* src = g.data() + b * channels * inner + offset;
            T* dst = gp.data() + b * chunk;
            for (std::int64_t i = 0; i < chunk; ++i) dst[i] += src[i];
          }
        }
        offset += chunk;
      }
    };
    active_tape<T>().record(std::move(node));
  }
  return y;
}

namespace {

// Source taps for half-pixel bilinear x2 along one axis.
struct Taps {
  std::vector<std::int64_t> lo;
  std::vector<std::int64_t> hi;
  std::vector<double> w_hi;
};

Taps upsample_taps(std::int64_t in_size) {
  Taps t;
  const std::int64_t out_size = in_size * 2;
  t.lo.resize(out_size);
  t.hi.resize(out_size);
  t.w_hi.resize(out_size);
  for (std::int64_t o = 0; o < out_size; ++o) {
    const double src = std::max(0.0, (double(o) + 0.5) / 2.0 - 0.5);
    const auto lo = static_cast<std::int64_t>(std::floor(src));
    t.lo[o] = std::min(lo, in_size - 1);
    t.hi[o] = std::min(lo + 1, in_size - 1);
    t.w_hi[o] = src - double(lo);
  }
  return t;
}

}  // namespace

template <class T>
Tensor<T> upsample_bilinear_x2(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "upsample_bilinear_x2");
  const std::int64_t planes = x.dim(0) * x.dim(1);
  const std::int64_t h = x.dim(2), w = x.dim(3);
  const std::int64_t oh = 2 * h, ow = 2 * w;
  const Taps ty = upsample_taps(h);
  const Taps tx = upsample_taps(w);
  const auto xv = x.data();
  std::vector<T> out(static_cast<std::size_t>(planes * oh * ow));
#pragma omp parallel for schedule(static) if(planes * oh * ow * 4 >= kernels::kParallelWork)
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* in = xv.data() + p * h * w;
    T* o = out.data() + p * oh * ow;
    for (std::int64_t y = 0; y < oh; ++y) {
      const T wy = T(ty.w_hi[y]);
      const T* r0 = in + ty.lo[y] * w;
      const T* r1 = in + ty.hi[y] * w;
      for (std::int64_t xx = 0; xx < ow; ++xx) {
        const T wx = T(tx.w_hi[xx]);
        const T top = r0[tx.lo[xx]] * (T(1) - wx) + r0[tx.hi[xx]] * wx;
        const T bot = r1[tx.lo[xx]] * (T(1) - wx) + r1[tx.hi[xx]] * wx;
        o[y * ow + xx] = top * (T(1) - wy) + bot * wy;
      }
    }
  }
  auto y = result({x.dim(0), x.dim(1), oh, ow}, std::move(out));
  if (any_tracks({&x})) {
    record<T>("upsample_bilinear_x2", {x}, {y}, [x, y, planes, h, w, oh, ow, ty, tx]() {
      const auto g = y.grad();
      auto gx = grad_of(x);
#pragma omp parallel for schedule(static) if(planes * oh * ow * 4 >= kernels::kParallelWork)
      for (std::int64_t p = 0; p < planes; ++p) {
        const T* go = g.data() + p * oh * ow;
        T* gi = gx.data() + p * h * w;
        for (std::int64_t yy = 0; yy < oh; ++yy) {
          const T wy = T(ty.w_hi[yy]);
          T* r0 = gi + ty.lo[yy] * w;
          T* r1 = gi + ty.hi[yy] * w;
          for (std::int64_t xx = 0; xx < ow; ++xx) {
            const T wx = T(tx.w_hi[xx]);
            const T d = go[yy * ow + xx];
            r0[tx.lo[xx]] += d * (T(1) - wy) * (T(1) - wx);
            r0[tx.hi[xx]] += d * (T(1) - wy) * wx;
            r1[tx.lo[xx]] += d * wy * (T(1) - wx);
            r1[tx.hi[xx]] += d * wy * wx;
          }
        }
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  auto y = result(std::move(shape), x.values());
  if (any_tracks({&x})) {
    record<T>("reshape", {x}, {y}, [x, y]() {
      const auto g = y.grad();
      auto gx = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return y;
}

template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& order) {
  const int r = x.rank();
  if (static_cast<int>(order.size()) != r) throw DimensionError("permute: order has wrong rank");
  std::vector<int> seen(order);
  std::sort(seen.begin(), seen.end());
  for (int i = 0; i < r; ++i)
    if (seen[i] != i) throw DimensionError("permute: order is not a permutation");

  const Shape& in_shape = x.shape();
  std::vector<std::int64_t> in_strides(r, 1);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  Shape out_shape(r);
  std::vector<std::int64_t> gather(r);  // input stride for each output axis
  for (int i = 0; i < r; ++i) {
    out_shape[i] = in_shape[order[i]];
    gather[i] = in_strides[order[i]];
  }
  const std::int64_t n = x.numel();
  std::vector<std::int64_t> src(static_cast<std::size_t>(n));
  {
    std::vector<std::int64_t> idx(r, 0);
    std::int64_t offset = 0;
    for (std::int64_t o = 0; o < n; ++o) {
      src[o] = offset;
      for (int d = r - 1; d >= 0; --d) {
        ++idx[d];
        offset += gather[d];
        if (idx[d] < out_shape[d]) break;
        offset -= gather[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  }
  const auto xv = x.data();
  std::vector<T> out(static_cast<std::size_t>(n));
  for (std::int64_t o = 0; o < n; ++o) out[o] = xv[src[o]];
  auto y = result(out_shape, std::move(out));
  if (any_tracks({&x})) {
    record<T>("permute", {x}, {y}, [x, y, src = std::move(src)]() {
      const auto g = y.grad();
      auto gx = grad_of(x);
      for (std::size_t o = 0; o < g.size(); ++o) gx[src[o]] += g[o];
    });
  }
  return y;
}

template <class T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
  const int r = x.rank();
  if (r < 2) throw DimensionError("transpose_last2: rank < 2");
  std::vector<int> order(r);
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[r - 1], order[r - 2]);
  return permute(x, order);
}

namespace {

// Flat [h,w] offsets of bins k with k == -k (mod h, w).
std::vector<std::int64_t> self_conjugate_bins(std::int64_t h, std::int64_t w) {
  std::vector<std::int64_t> bins;
  for (const auto ky : {std::int64_t(0), h % 2 == 0 ? h / 2 : std::int64_t(-1)})
    for (const auto kx : {std::int64_t(0), w % 2 == 0 ? w / 2 : std::int64_t(-1)})
      if (ky >= 0 && kx >= 0) bins.push_back(ky * w + kx);
  std::sort(bins.begin(), bins.end());
  bins.erase(std::unique(bins.begin(), bins.end()), bins.end());
  return bins;
}

}  // namespace

template <class T>
std::pair<Tensor<T>, Tensor<T>> fft2_per_channel(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "fft2_per_channel");
  const std::int64_t planes = x.dim(0) * x.dim(1);
  const std::int64_t h = x.dim(2), w = x.dim(3);
  const auto xv = x.data();
  std::vector<std::complex<double>> buf(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) buf[i] = {double(xv[i]), 0.0};
  kernels::fft2_planes(buf, planes, h, w, false);
  std::vector<T> re(buf.size());
  std::vector<T> im(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    re[i] = static_cast<T>(buf[i].real());
    im[i] = static_cast<T>(buf[i].imag());
  }
  // Self-conjugate bins of a real signal have exactly zero imaginary part.
  const auto conjugate_bins = self_conjugate_bins(h, w);
  for (std::int64_t p = 0; p < planes; ++p)
    for (const auto b : conjugate_bins) im[static_cast<std::size_t>(p * h * w + b)] = T(0);
  auto real = result(x.shape(), std::move(re));
  auto imag = result(x.shape(), std::move(im));
  if (any_tracks({&x})) {
    // Re(F x) = C x and Im(F x) = -S x, so dx = C gR - S gI = Re(conj(F) (gR + i gI)),
    // which is the unnormalized inverse transform.
    record<T>("fft2_per_channel", {x}, {real, imag}, [x, real, imag, planes, h, w]() {
      const auto gr = real.grad();
      const auto gi = imag.grad();
      std::vector<std::complex<double>> z(static_cast<std::size_t>(x.numel()));
      for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = {gr.empty() ? 0.0 : double(gr[i]), gi.empty() ? 0.0 : double(gi[i])};
      }
      for (std::int64_t p = 0; p < planes; ++p)
        for (const auto b : self_conjugate_bins(h, w)) z[static_cast<std::size_t>(p * h * w + b)].imag(0.0);
      kernels::fft2_planes(z, planes, h, w, true);
      auto gx = grad_of(x);
      for (std::size_t i = 0; i < z.size(); ++i) gx[i] += static_cast<T>(z[i].real());
    });
  }
  return {real, imag};
}

#define SDINET_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                            \
  template Tensor<T> abs<T>(const Tensor<T>&);                                                 \
  template Tensor<T> clamp01<T>(const Tensor<T>&);                                             \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                                \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                             \
  template Tensor<T> sum_all<T>(const Tensor<T>&);                                             \
  template Tensor<T> mean_all<T>(const Tensor<T>&);                                            \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> softmax_lastdim<T>(const Tensor<T>&);                                     \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int); \
  template Tensor<T> layer_norm_channels<T>(const Tensor<T>&, const Tensor<T>&,                \
                                            const Tensor<T>&, double);                         \
  template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                                     \
  template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);                        \
  template Tensor<T> upsample_bilinear_x2<T>(const Tensor<T>&);                                \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                      \
  template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<int>&);                    \
  template Tensor<T> transpose_last2<T>(const Tensor<T>&);                                     \
  template std::pair<Tensor<T>, Tensor<T>> fft2_per_channel<T>(const Tensor<T>&);

SDINET_INSTANTIATE_OPS(float)
SDINET_INSTANTIATE_OPS(double)

#undef SDINET_INSTANTIATE_OPS

}  // namespace sdinet::ops
