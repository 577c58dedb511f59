#include "sdinet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sdinet/ops.hpp"

namespace sdinet {

namespace {

double project(const Tensor<double>& out, const std::vector<double>& weights) {
  double acc = 0.0;
  const auto v = out.data();
  for (std::size_t i = 0; i < v.size(); ++i) acc += v[i] * weights[i];
  return acc;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor<double>()>& f,
                           std::vector<Tensor<double>> inputs, const GradCheckOptions& options) {
  GradCheckReport report;
  std::mt19937_64 rng(options.seed);

  for (auto& x : inputs) {
    x.zero_grad();
    x.set_requires_grad(true);
  }
  active_tape<double>().clear();

  Tensor<double> out = f();
  std::vector<double> weights(static_cast<std::size_t>(out.numel()), 1.0);
  if (!options.unit_projection && out.numel() > 1) {
    std::uniform_real_distribution<double> dist(0.5, 1.5);
    for (auto& w : weights) w = std::bernoulli_distribution(0.5)(rng) ? dist(rng) : -dist(rng);
  }
  if (!all_finite(out.data())) {
    report.failure = "non-finite value in function output";
    return report;
  }
  const auto loss = ops::sum_all(ops::mul(out, Tensor<double>::from(out.shape(), weights)));
  // An output disconnected from every input has a zero analytic gradient.
  if (loss.requires_grad()) {
    backward(loss);
  } else {
    active_tape<double>().clear();
  }

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& x = inputs[i];
    if (!x.has_grad()) {
      analytic.emplace_back(static_cast<std::size_t>(x.numel()), 0.0);
    } else {
      analytic.emplace_back(x.grad().begin(), x.grad().end());
    }
    if (!all_finite<double>(analytic.back())) {
      report.failure = "non-finite analytic gradient in input " + std::to_string(i);
      return report;
    }
  }

  NoGradGuard no_grad;
  const double base = project(out, weights);
  report.output_value = base;
  const double kink_tol = options.kink_tol > 0 ? options.kink_tol : options.tol;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& x = inputs[i];
    std::vector<std::int64_t> coords(static_cast<std::size_t>(x.numel()));
    std::iota(coords.begin(), coords.end(), 0);
    if (options.coords_per_input > 0 &&
        options.coords_per_input < static_cast<std::int64_t>(coords.size())) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(options.coords_per_input));
      std::sort(coords.begin(), coords.end());
    }
    auto values = x.mutable_data();
    for (const auto c : coords) {
      const double saved = values[c];
      values[c] = saved + options.eps;
      const double plus = project(f(), weights);
      values[c] = saved - options.eps;
      const double minus = project(f(), weights);
      double half_plus = plus, half_minus = minus;
      if (options.skip_kinks) {
        values[c] = saved + 0.5 * options.eps;
        half_plus = project(f(), weights);
        values[c] = saved - 0.5 * options.eps;
        half_minus = project(f(), weights);
      }
      values[c] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus) || !std::isfinite(half_plus) ||
          !std::isfinite(half_minus)) {
        report.failure = "non-finite value perturbing input " + std::to_string(i) + " at index " +
                         std::to_string(c);
        return report;
      }
      if (options.skip_kinks) {
        const double forward = (plus - base) / options.eps;
        const double backward_slope = (base - minus) / options.eps;
        const double spread = std::abs(forward - backward_slope);
        // A kink on each side can balance the one-sided slopes; the central
        // slope then still moves between step eps and eps / 2.
        const double full = (plus - minus) / (2.0 * options.eps);
        const double half = (half_plus - half_minus) / options.eps;
        const auto exceeds = [&](double gap, double a, double b) {
          return gap > kink_tol * std::max(std::abs(a) + std::abs(b), options.abs_floor);
        };
        if (exceeds(spread, forward, backward_slope) || exceeds(std::abs(full - half), full, half)) {
          ++report.coords_skipped;
          continue;
        }
      }
      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double a = analytic[i][static_cast<std::size_t>(c)];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), options.abs_floor);
      ++report.coords_checked;
      if (rel > report.max_rel_error || report.worst_index < 0) {
        report.max_rel_error = rel;
        report.worst_input = i;
        report.worst_index = c;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  const auto total = report.coords_checked + report.coords_skipped;
  const bool coverage = total == 0 || static_cast<double>(report.coords_skipped) <=
                                          options.max_skip_fraction * static_cast<double>(total);
  if (!coverage) {
    report.failure = std::to_string(report.coords_skipped) + " of " + std::to_string(total) +
                     " coordinates straddle a kink";
  }
  report.passed = coverage && report.coords_checked > 0 && report.max_rel_error < options.tol;
  return report;
}

GradCheckReport grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                           Tensor<double> x, const GradCheckOptions& options) {
  return grad_check([&f, x]() { return f(x); }, {x}, options);
}

}  // namespace sdinet
