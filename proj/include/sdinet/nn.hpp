#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "sdinet/tensor.hpp"

namespace sdinet::nn {

enum class ParamKind { ConvWeight, Bias, NormScale, NormShift, Gate };

template <class T>
struct Param {
  std::string name;
  Tensor<T> tensor;
  ParamKind kind;
  std::int64_t fan_in = 0;  // ConvWeight only
};

/// Insertion-ordered name -> parameter map. Layers hold handles into the same
/// storage, so one registry serves both stereo branches.
template <class T>
class ParamRegistry {
 public:
  Tensor<T> add(const std::string& name, Shape shape, ParamKind kind, std::int64_t fan_in = 0);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<T>& get(const std::string& name) const;
  Tensor<T>& get(const std::string& name);

  std::size_t size() const { return params_.size(); }
  std::int64_t total_elements() const;
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  void zero_grad();

 private:
  std::vector<Param<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Conv weights ~ U(-b, b), b = sqrt(1 / fan_in); biases and fusion gates 0;
/// norm scale 1 and shift 0. Each tensor draws from its own stream seeded by
/// (seed, name), so shared sub-networks initialize identically across model
/// variants.
template <class T>
void init_parameters(ParamRegistry<T>& registry, std::uint64_t seed);

template <class T>
struct Conv2d {
  Tensor<T> weight;
  Tensor<T> bias;
  int stride = 1;
  int padding = 0;

  Tensor<T> operator()(const Tensor<T>& x) const;
};

/// "Same" zero padding of (k-1)/2; stride 2 halves H and W for even sizes.
template <class T>
Conv2d<T> make_conv(ParamRegistry<T>& reg, const std::string& name, std::int64_t in_channels,
                    std::int64_t out_channels, int kernel, int stride = 1);

template <class T>
struct LayerNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <class T>
LayerNorm<T> make_layer_norm(ParamRegistry<T>& reg, const std::string& name,
                             std::int64_t channels);

inline std::int64_t reduced_channels(std::int64_t channels, int reduction) {
  return std::max<std::int64_t>(1, channels / reduction);
}

/// x * sigmoid(conv(relu(conv(gap(x))))) with a per-channel gate.
template <class T>
struct ChannelAttention {
  Conv2d<T> squeeze;
  Conv2d<T> excite;
  Tensor<T> gate(const Tensor<T>& x) const;
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <class T>
ChannelAttention<T> make_channel_attention(ParamRegistry<T>& reg, const std::string& name,
                                           std::int64_t channels, int reduction = 4);

/// x * sigmoid(conv(relu(conv(x)))) with a single-channel gate per pixel.
template <class T>
struct PixelAttention {
  Conv2d<T> squeeze;
  Conv2d<T> excite;
  Tensor<T> gate(const Tensor<T>& x) const;
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <class T>
PixelAttention<T> make_pixel_attention(ParamRegistry<T>& reg, const std::string& name,
                                       std::int64_t channels, int reduction = 4);

/// PA(CA(conv_out(gelu(conv_in(x)) + x))), 3x3 convs, shape preserving.
template <class T>
struct FeatureEnhancingBlock {
  Conv2d<T> conv_in;
  Conv2d<T> conv_out;
  ChannelAttention<T> channel;
  PixelAttention<T> pixel;
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <class T>
FeatureEnhancingBlock<T> make_feb(ParamRegistry<T>& reg, const std::string& name,
                                  std::int64_t channels, int reduction = 4);

/// x + conv2(relu(conv1(x))).
template <class T>
struct ResidualBlock {
  Conv2d<T> conv1;
  Conv2d<T> conv2;
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <class T>
ResidualBlock<T> make_residual_block(ParamRegistry<T>& reg, const std::string& name,
                                     std::int64_t channels);

}  // namespace sdinet::nn
