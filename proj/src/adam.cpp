#include "sdinet/adam.hpp"

#include <cmath>

#include "sdinet/error.hpp"

namespace sdinet {

template <class T>
void adam_step(nn::ParamRegistry<T>& params, AdamState<T>& state, double lr) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) {
      throw UsageError("adam_step: parameter '" + p.name + "' has no gradient");
    }
  }
  state.step += 1;
  const auto& o = state.options;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(o.beta1);
  const T b2 = static_cast<T>(o.beta2);
  for (auto& p : params) {
    auto& m = state.first_moment[p.name];
    auto& v = state.second_moment[p.name];
    const auto n = static_cast<std::size_t>(p.tensor.numel());
    if (m.size() != n) m.assign(n, T(0));
    if (v.size() != n) v.assign(n, T(0));
    auto w = p.tensor.mutable_data();
    const auto g = p.tensor.grad();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const double m_hat = double(m[i]) / c1;
      const double v_hat = double(v[i]) / c2;
      w[i] = static_cast<T>(double(w[i]) - lr * m_hat / (std::sqrt(v_hat) + o.eps));
    }
    p.tensor.zero_grad();
  }
}

double lr_schedule(std::int64_t epoch, double lr0, std::int64_t period) {
  if (epoch < 0) throw ConfigError("lr_schedule: negative epoch");
  if (period <= 0) throw ConfigError("lr_schedule: period must be positive");
  return lr0 * std::pow(0.5, static_cast<double>(epoch / period));
}

template <class T>
double clip_grad_norm(nn::ParamRegistry<T>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (const T g : p.tensor.grad()) sq += double(g) * double(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      for (auto& g : p.tensor.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

template void adam_step<float>(nn::ParamRegistry<float>&, AdamState<float>&, double);
template void adam_step<double>(nn::ParamRegistry<double>&, AdamState<double>&, double);
template double clip_grad_norm<float>(nn::ParamRegistry<float>&, double);
template double clip_grad_norm<double>(nn::ParamRegistry<double>&, double);

}  // namespace sdinet
