#include "sdinet/losses.hpp"

#include "sdinet/error.hpp"
#include "sdinet/ops.hpp"

namespace sdinet {

namespace {

template <class T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": prediction " + shape_str(a.shape()) +
                         " vs target " + shape_str(b.shape()));
  }
}

}  // namespace

template <class T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same(pred, target, "l1_loss");
  return ops::mean_all(ops::abs(ops::sub(pred, target)));
}

template <class T>
Tensor<T> fft_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same(pred, target, "fft_loss");
  const auto [pr, pi] = ops::fft2_per_channel(pred);
  const auto [tr, ti] = ops::fft2_per_channel(target);
  return ops::mean_all(ops::add(ops::abs(ops::sub(pr, tr)), ops::abs(ops::sub(pi, ti))));
}

template <class T>
LossBreakdown<T> total_loss(const Tensor<T>& pred_left, const Tensor<T>& pred_right,
                            const Tensor<T>& gt_left, const Tensor<T>& gt_right, double lambda,
                            bool frequency_term) {
  require_same(pred_left, pred_right, "total_loss (views)");
  require_same(pred_left, gt_left, "total_loss (left)");
  require_same(pred_right, gt_right, "total_loss (right)");
  LossBreakdown<T> b;
  b.lambda = lambda;
  b.frequency_term = frequency_term;
  const auto l1l = l1_loss(pred_left, gt_left);
  const auto l1r = l1_loss(pred_right, gt_right);
  b.l1_left = l1l.item();
  b.l1_right = l1r.item();
  b.objective = ops::add(l1l, l1r);
  if (frequency_term) {
    const auto fl = fft_loss(pred_left, gt_left);
    const auto fr = fft_loss(pred_right, gt_right);
    b.fre_left = fl.item();
    b.fre_right = fr.item();
    b.objective = ops::add(b.objective, ops::scale(ops::add(fl, fr), static_cast<T>(lambda)));
  }
  b.total = b.objective.item();
  return b;
}

template Tensor<float> l1_loss<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> l1_loss<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> fft_loss<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> fft_loss<double>(const Tensor<double>&, const Tensor<double>&);
template LossBreakdown<float> total_loss<float>(const Tensor<float>&, const Tensor<float>&,
                                                const Tensor<float>&, const Tensor<float>&,
                                                double, bool);
template LossBreakdown<double> total_loss<double>(const Tensor<double>&, const Tensor<double>&,
                                                  const Tensor<double>&, const Tensor<double>&,
                                                  double, bool);

}  // namespace sdinet
