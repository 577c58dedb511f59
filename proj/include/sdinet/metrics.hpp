#pragma once

#include <limits>
#include <vector>

#include "sdinet/tensor.hpp"

namespace sdinet {

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(1 / MSE) over every element, peak 1.0. Identical inputs give +inf.
template <class T>
double psnr(const Tensor<T>& pred, const Tensor<T>& target);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Single-scale SSIM with a Gaussian window, evaluated over the positions
/// where the window fits entirely inside the image, averaged over channels.
/// Accepts [C,H,W] or [1,C,H,W].
template <class T>
double ssim(const Tensor<T>& pred, const Tensor<T>& target, const SsimOptions& options = {});

/// Per-pixel mean absolute channel error e, rendered as 1 - min(1, e / display_max)
/// so larger errors are darker. Returns [1,H,W].
template <class T>
Tensor<float> error_map(const Tensor<T>& pred, const Tensor<T>& target, double display_max = 0.25);

/// Normalized 1-D Gaussian taps.
std::vector<double> gaussian_taps(int window, double sigma);

}  // namespace sdinet
