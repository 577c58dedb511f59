#pragma once

#include <utility>
#include <vector>

#include "sdinet/tensor.hpp"

// Differentiable tensor ops. Every op records a tape node when grad mode is
// enabled and at least one input requires grad.
//
// Broadcasting (add/sub/mul): shapes are right-aligned; a missing leading
// axis or an axis of size 1 stretches to match the other operand. Any other
// mismatch raises DimensionError.
namespace sdinet::ops {

Shape broadcast_shape(const Shape& a, const Shape& b);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <class T>
Tensor<T> abs(const Tensor<T>& x);
template <class T>
Tensor<T> clamp01(const Tensor<T>& x);
/// Exact erf formulation: 0.5 x (1 + erf(x / sqrt 2)).
template <class T>
Tensor<T> gelu(const Tensor<T>& x);
template <class T>
Tensor<T> relu(const Tensor<T>& x);
template <class T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <class T>
Tensor<T> sum_all(const Tensor<T>& x);
template <class T>
Tensor<T> mean_all(const Tensor<T>& x);

/// [m,k]·[k,n] or batched [B,m,k]·[B,k,n].
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Max-subtracted softmax over the last axis. NaN input raises NumericError.
template <class T>
Tensor<T> softmax_lastdim(const Tensor<T>& x);

/// NCHW cross-correlation. `bias` may be undefined. Kernel sides must be odd.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding);

/// Normalizes over the channel axis of [N,C,H,W] at each spatial location,
/// then applies per-channel gamma/beta.
template <class T>
Tensor<T> layer_norm_channels(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                              double eps = 1e-5);

/// [N,C,H,W] -> [N,C,1,1]
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

/// Concatenates along axis 1; all other axes must agree.
template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

/// Bilinear x2 on [N,C,H,W] with half-pixel centers (edge-clamped).
template <class T>
Tensor<T> upsample_bilinear_x2(const Tensor<T>& x);

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& order);
/// Swaps the last two axes.
template <class T>
Tensor<T> transpose_last2(const Tensor<T>& x);

/// Unnormalized forward 2-D DFT of every [H,W] plane of [N,C,H,W].
/// Radix-2 when H and W are powers of two, direct DFT otherwise.
template <class T>
std::pair<Tensor<T>, Tensor<T>> fft2_per_channel(const Tensor<T>& x);

}  // namespace sdinet::ops
