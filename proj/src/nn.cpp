#include "sdinet/nn.hpp"

#include <cmath>
#include <random>

#include "sdinet/error.hpp"
#include "sdinet/ops.hpp"

namespace sdinet::nn {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

template <class T>
Tensor<T> ParamRegistry<T>::add(const std::string& name, Shape shape, ParamKind kind,
                                std::int64_t fan_in) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  auto t = Tensor<T>::zeros(std::move(shape), true);
  index_.emplace(name, params_.size());
  params_.push_back(Param<T>{name, t, kind, fan_in});
  return t;
}

template <class T>
const Tensor<T>& ParamRegistry<T>::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second].tensor;
}

template <class T>
Tensor<T>& ParamRegistry<T>::get(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second].tensor;
}

template <class T>
std::int64_t ParamRegistry<T>::total_elements() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <class T>
void ParamRegistry<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <class T>
void init_parameters(ParamRegistry<T>& registry, std::uint64_t seed) {
  for (auto& p : registry) {
    auto values = p.tensor.mutable_data();
    switch (p.kind) {
      case ParamKind::ConvWeight: {
        const double bound = std::sqrt(1.0 / static_cast<double>(p.fan_in));
        std::mt19937_64 rng(splitmix64(seed ^ fnv1a(p.name)));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : values) v = static_cast<T>(dist(rng));
        break;
      }
      case ParamKind::NormScale:
        std::fill(values.begin(), values.end(), T(1));
        break;
      case ParamKind::Bias:
      case ParamKind::NormShift:
      case ParamKind::Gate:
        std::fill(values.begin(), values.end(), T(0));
        break;
    }
    p.tensor.zero_grad();
  }
}

template <class T>
Tensor<T> Conv2d<T>::operator()(const Tensor<T>& x) const {
  return ops::conv2d(x, weight, bias, stride, padding);
}

template <class T>
Conv2d<T> make_conv(ParamRegistry<T>& reg, const std::string& name, std::int64_t in_channels,
                    std::int64_t out_channels, int kernel, int stride) {
  Conv2d<T> c;
  const std::int64_t fan_in = in_channels * kernel * kernel;
  c.weight = reg.add(name + ".weight", {out_channels, in_channels, kernel, kernel},
                     ParamKind::ConvWeight, fan_in);
  c.bias = reg.add(name + ".bias", {out_channels}, ParamKind::Bias);
  c.stride = stride;
  c.padding = (kernel - 1) / 2;
  return c;
}

template <class T>
Tensor<T> LayerNorm<T>::operator()(const Tensor<T>& x) const {
  return ops::layer_norm_channels(x, gamma, beta, 1e-5);
}

template <class T>
LayerNorm<T> make_layer_norm(ParamRegistry<T>& reg, const std::string& name,
                             std::int64_t channels) {
  if (channels <= 0) throw DimensionError("layer norm needs at least one channel");
  LayerNorm<T> ln;
  ln.gamma = reg.add(name + ".gamma", {channels}, ParamKind::NormScale);
  ln.beta = reg.add(name + ".beta", {channels}, ParamKind::NormShift);
  return ln;
}

template <class T>
Tensor<T> ChannelAttention<T>::gate(const Tensor<T>& x) const {
  return ops::sigmoid(excite(ops::relu(squeeze(ops::global_avg_pool(x)))));
}

template <class T>
Tensor<T> ChannelAttention<T>::operator()(const Tensor<T>& x) const {
  return ops::mul(x, gate(x));
}

template <class T>
ChannelAttention<T> make_channel_attention(ParamRegistry<T>& reg, const std::string& name,
                                           std::int64_t channels, int reduction) {
  const auto mid = reduced_channels(channels, reduction);
  return {make_conv(reg, name + ".squeeze", channels, mid, 1),
          make_conv(reg, name + ".excite", mid, channels, 1)};
}

template <class T>
Tensor<T> PixelAttention<T>::gate(const Tensor<T>& x) const {
  return ops::sigmoid(excite(ops::relu(squeeze(x))));
}

template <class T>
Tensor<T> PixelAttention<T>::operator()(const Tensor<T>& x) const {
  return ops::mul(x, gate(x));
}

template <class T>
PixelAttention<T> make_pixel_attention(ParamRegistry<T>& reg, const std::string& name,
                                       std::int64_t channels, int reduction) {
  const auto mid = reduced_channels(channels, reduction);
  return {make_conv(reg, name + ".squeeze", channels, mid, 1),
          make_conv(reg, name + ".excite", mid, 1, 1)};
}

template <class T>
Tensor<T> FeatureEnhancingBlock<T>::operator()(const Tensor<T>& x) const {
  const auto pre = conv_out(ops::add(ops::gelu(conv_in(x)), x));
  return pixel(channel(pre));
}

template <class T>
FeatureEnhancingBlock<T> make_feb(ParamRegistry<T>& reg, const std::string& name,
                                  std::int64_t channels, int reduction) {
  return {make_conv(reg, name + ".conv_in", channels, channels, 3),
          make_conv(reg, name + ".conv_out", channels, channels, 3),
          make_channel_attention(reg, name + ".ca", channels, reduction),
          make_pixel_attention(reg, name + ".pa", channels, reduction)};
}

template <class T>
Tensor<T> ResidualBlock<T>::operator()(const Tensor<T>& x) const {
  return ops::add(x, conv2(ops::relu(conv1(x))));
}

template <class T>
ResidualBlock<T> make_residual_block(ParamRegistry<T>& reg, const std::string& name,
                                     std::int64_t channels) {
  return {make_conv(reg, name + ".conv1", channels, channels, 3),
          make_conv(reg, name + ".conv2", channels, channels, 3)};
}

#define SDINET_INSTANTIATE_NN(T)                                                               \
  template class ParamRegistry<T>;                                                             \
  template void init_parameters<T>(ParamRegistry<T>&, std::uint64_t);                          \
  template struct Conv2d<T>;                                                                   \
  template Conv2d<T> make_conv<T>(ParamRegistry<T>&, const std::string&, std::int64_t,         \
                                  std::int64_t, int, int);                                     \
  template struct LayerNorm<T>;                                                                \
  template LayerNorm<T> make_layer_norm<T>(ParamRegistry<T>&, const std::string&, std::int64_t); \
  template struct ChannelAttention<T>;                                                         \
  template ChannelAttention<T> make_channel_attention<T>(ParamRegistry<T>&, const std::string&, \
                                                         std::int64_t, int);                   \
  template struct PixelAttention<T>;                                                           \
  template PixelAttention<T> make_pixel_attention<T>(ParamRegistry<T>&, const std::string&,    \
                                                     std::int64_t, int);                       \
  template struct FeatureEnhancingBlock<T>;                                                    \
  template FeatureEnhancingBlock<T> make_feb<T>(ParamRegistry<T>&, const std::string&,         \
                                                std::int64_t, int);                            \
  template struct ResidualBlock<T>;                                                            \
  template ResidualBlock<T> make_residual_block<T>(ParamRegistry<T>&, const std::string&,      \
                                                   std::int64_t);

SDINET_INSTANTIATE_NN(float)
SDINET_INSTANTIATE_NN(double)

#undef SDINET_INSTANTIATE_NN

}  // namespace sdinet::nn
