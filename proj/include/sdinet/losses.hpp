#pragma once

#include "sdinet/tensor.hpp"

namespace sdinet {

inline constexpr double kDefaultLambda = 0.1;

/// Mean absolute difference.
template <class T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);

/// Mean over bins and channels of |Re(F(pred) - F(target))| + |Im(F(pred) - F(target))|
/// with F the unnormalized per-channel 2-D DFT.
template <class T>
Tensor<T> fft_loss(const Tensor<T>& pred, const Tensor<T>& target);

template <class T>
struct LossBreakdown {
  T l1_left = 0;
  T l1_right = 0;
  T fre_left = 0;
  T fre_right = 0;
  T total = 0;
  double lambda = kDefaultLambda;
  bool frequency_term = true;
  Tensor<T> objective;  // differentiable scalar equal to `total`

  T l1_sum() const { return l1_left + l1_right; }
  T fre_sum() const { return fre_left + fre_right; }
};

/// total = (l1_left + l1_right) + lambda * (fre_left + fre_right). With
/// `frequency_term` off the frequency losses are not computed and the total
/// is the L1 sum.
template <class T>
LossBreakdown<T> total_loss(const Tensor<T>& pred_left, const Tensor<T>& pred_right,
                            const Tensor<T>& gt_left, const Tensor<T>& gt_right,
                            double lambda = kDefaultLambda, bool frequency_term = true);

}  // namespace sdinet
