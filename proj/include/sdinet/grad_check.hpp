#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sdinet/tensor.hpp"

namespace sdinet {

struct GradCheckOptions {
  double eps = 1e-6;
  double tol = 1e-4;
  // Coordinates sampled per input tensor; <= 0 checks every coordinate.
  std::int64_t coords_per_input = 0;
  std::uint64_t seed = 0;
  // Scalarize non-scalar outputs with sum(out) instead of a random projection.
  bool unit_projection = false;
  // Lower bound on the relative-error denominator. Central differences carry
  // roundoff near 1e-16 * |f| / eps, so exactly-zero gradients are compared
  // against an absolute error of tol * abs_floor.
  double abs_floor = 1e-6;
  // Skip coordinates whose one-sided slopes, or whose central slopes at eps
  // and eps / 2, disagree by more than kink_tol (tol when <= 0): the step
  // straddles a kink (ReLU, |x|) where no derivative exists. Detection uses
  // forward values only. More than max_skip_fraction skipped fails.
  bool skip_kinks = true;
  double kink_tol = 0.0;
  double max_skip_fraction = 0.25;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double output_value = 0.0;  // scalarized f at the unperturbed point
  std::int64_t coords_checked = 0;
  std::int64_t coords_skipped = 0;  // straddled a kink
  bool passed = false;
  std::string failure;  // non-empty when a non-finite value was seen
};

/// Central-difference check of reverse-mode gradients.
///
/// `f` is evaluated with `inputs` perturbed in place one coordinate at a
/// time. A non-scalar output is reduced to sum(out * R) with a fixed random R
/// so every output element contributes. Relative error per coordinate is
/// |a - n| / max(|a| + |n|, abs_floor); the check passes when the maximum is
/// below `tol`.
GradCheckReport grad_check(const std::function<Tensor<double>()>& f,
                           std::vector<Tensor<double>> inputs, const GradCheckOptions& options);

/// Convenience form for a function of one tensor.
GradCheckReport grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                           Tensor<double> x, const GradCheckOptions& options);

}  // namespace sdinet
