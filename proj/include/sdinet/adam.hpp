#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sdinet/nn.hpp"

namespace sdinet {

struct AdamOptions {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamOptions&) const = default;
};

template <class T>
struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::map<std::string, std::vector<T>> first_moment;
  std::map<std::string, std::vector<T>> second_moment;
};

/// One bias-corrected Adam update of every parameter in the registry, then
/// clears the gradients. A parameter without a gradient raises UsageError.
template <class T>
void adam_step(nn::ParamRegistry<T>& params, AdamState<T>& state, double lr);

/// lr0 * 0.5^floor(epoch / period)
double lr_schedule(std::int64_t epoch, double lr0 = 1e-4, std::int64_t period = 100);

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <class T>
double clip_grad_norm(nn::ParamRegistry<T>& params, double max_norm);

}  // namespace sdinet
