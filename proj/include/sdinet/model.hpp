#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sdinet/nn.hpp"
#include "sdinet/tensor.hpp"

namespace sdinet {

enum class AttentionScope { Row, Full };

/// Ablation variants. V3 keeps the full architecture and drops the
/// frequency loss, so it only differs from Full at the trainer level.
enum class Variant { Full, V0, V1, V2, V3 };

std::string to_string(Variant v);
std::optional<Variant> parse_variant(const std::string& name);

struct ModelConfig {
  int base_channels = 16;
  int feb_count = 10;
  int residual_blocks = 8;
  bool use_caim = true;
  bool use_pcab = true;
  bool v0_heuristic = false;
  // Value operand taken from the opposite view instead of the residual's view.
  bool cross_value = false;
  AttentionScope attention = AttentionScope::Row;
  int attention_reduction = 4;

  void validate() const;
  int bottleneck_channels() const { return 4 * base_channels; }

  std::map<std::string, std::string> to_kv() const;
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);

  static ModelConfig for_variant(Variant v, ModelConfig base);
  static ModelConfig for_variant(Variant v) { return for_variant(v, ModelConfig()); }
  // C0 = 8, 2 FEBs, 2 residual blocks.
  static ModelConfig desk();

  bool operator==(const ModelConfig&) const = default;
};

template <class T>
struct StereoPair {
  Tensor<T> left;
  Tensor<T> right;
};

/// Encoder output for one view: the H/4 bottleneck plus skips at H and H/2.
template <class T>
struct Encoding {
  Tensor<T> feature;
  Tensor<T> skip_full;
  Tensor<T> skip_half;
};

/// Cross-view attention results. `attended_*` are the attention outputs before
/// the residual add; `value_*` the value operands that were attended over.
template <class T>
struct CaimOutput {
  Tensor<T> left;   // F_{r->l}
  Tensor<T> right;  // F_{l->r}
  Tensor<T> attended_left;
  Tensor<T> attended_right;
  Tensor<T> value_left;
  Tensor<T> value_right;
};

/// Dual-branch encoder / cross-view interaction / decoder network. Both views
/// run through the same parameter handles.
template <class T>
class SdiNet {
 public:
  explicit SdiNet(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  nn::ParamRegistry<T>& params() { return params_; }
  const nn::ParamRegistry<T>& params() const { return params_; }
  void init(std::uint64_t seed) { nn::init_parameters(params_, seed); }

  Encoding<T> encode(const Tensor<T>& image) const;
  CaimOutput<T> caim(const Tensor<T>& left, const Tensor<T>& right) const;
  StereoPair<T> pcab(const Tensor<T>& r2l, const Tensor<T>& l2r, const Tensor<T>& left,
                     const Tensor<T>& right) const;
  StereoPair<T> v0_interaction(const Tensor<T>& left, const Tensor<T>& right) const;
  /// Whatever interaction stage the config selects (identity when none).
  StereoPair<T> interact(const Tensor<T>& left, const Tensor<T>& right) const;
  Tensor<T> decode(const Tensor<T>& feature, const Encoding<T>& skips) const;

  StereoPair<T> forward(const Tensor<T>& left, const Tensor<T>& right) const;

  /// Refines one view's features through the FEB stack.
  Tensor<T> refine(const Tensor<T>& x) const;

 private:
  void check_input(const Tensor<T>& image) const;

  ModelConfig config_;
  nn::ParamRegistry<T> params_;

  std::vector<nn::Conv2d<T>> encoder_;  // H, H/2, H/4

  nn::LayerNorm<T> caim_norm_;
  nn::Conv2d<T> caim_query_;
  nn::Conv2d<T> caim_key_;
  nn::Conv2d<T> caim_value_;

  std::vector<nn::FeatureEnhancingBlock<T>> febs_;
  Tensor<T> gamma_left_;
  Tensor<T> gamma_right_;

  nn::Conv2d<T> v0_merge_;
  nn::Conv2d<T> v0_refine_;
  nn::Conv2d<T> v0_restore_;

  std::vector<nn::ResidualBlock<T>> residuals_;
  nn::Conv2d<T> up_half_;
  nn::Conv2d<T> fuse_half_;
  nn::Conv2d<T> up_full_;
  nn::Conv2d<T> fuse_full_;
  nn::Conv2d<T> head_;
};

}  // namespace sdinet
