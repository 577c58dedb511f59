#include "sdinet/model.hpp"

#include <cmath>

#include "sdinet/error.hpp"
#include "sdinet/ops.hpp"

namespace sdinet {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::V0: return "v0";
    case Variant::V1: return "v1";
    case Variant::V2: return "v2";
    case Variant::V3: return "v3";
  }
  return "full";
}

std::optional<Variant> parse_variant(const std::string& name) {
  for (const auto v : {Variant::Full, Variant::V0, Variant::V1, Variant::V2, Variant::V3}) {
    if (to_string(v) == name) return v;
  }
  return std::nullopt;
}

void ModelConfig::validate() const {
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (residual_blocks < 0) throw ConfigError("residual_blocks must be >= 0");
  if (attention_reduction < 1) throw ConfigError("attention_reduction must be >= 1");
  if (use_pcab && feb_count < 1) throw ConfigError("feb_count must be >= 1 when PCAB is enabled");
  if (v0_heuristic && (use_caim || use_pcab)) {
    throw ConfigError("the V0 heuristic interaction excludes CAIM and PCAB");
  }
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
  return {
      {"model.base_channels", std::to_string(base_channels)},
      {"model.feb_count", std::to_string(feb_count)},
      {"model.residual_blocks", std::to_string(residual_blocks)},
      {"model.use_caim", use_caim ? "1" : "0"},
      {"model.use_pcab", use_pcab ? "1" : "0"},
      {"model.v0_heuristic", v0_heuristic ? "1" : "0"},
      {"model.cross_value", cross_value ? "1" : "0"},
      {"model.attention", attention == AttentionScope::Row ? "row" : "full"},
      {"model.attention_reduction", std::to_string(attention_reduction)},
  };
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  auto need = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("missing model config key: " + key);
    return it->second;
  };
  auto as_int = [&](const std::string& key) {
    try {
      return std::stoi(need(key));
    } catch (const std::logic_error&) {
      throw ConfigError("bad integer for " + key + ": " + need(key));
    }
  };
  ModelConfig c;
  c.base_channels = as_int("model.base_channels");
  c.feb_count = as_int("model.feb_count");
  c.residual_blocks = as_int("model.residual_blocks");
  c.use_caim = need("model.use_caim") == "1";
  c.use_pcab = need("model.use_pcab") == "1";
  c.v0_heuristic = need("model.v0_heuristic") == "1";
  c.cross_value = need("model.cross_value") == "1";
  const auto& scope = need("model.attention");
  if (scope != "row" && scope != "full") throw ConfigError("bad attention scope: " + scope);
  c.attention = scope == "row" ? AttentionScope::Row : AttentionScope::Full;
  c.attention_reduction = as_int("model.attention_reduction");
  c.validate();
  return c;
}

ModelConfig ModelConfig::for_variant(Variant v, ModelConfig base) {
  base.use_caim = true;
  base.use_pcab = true;
  base.v0_heuristic = false;
  switch (v) {
    case Variant::Full:
    case Variant::V3:
      break;
    case Variant::V0:
      base.use_caim = false;
      base.use_pcab = false;
      base.v0_heuristic = true;
      break;
    case Variant::V1:
      base.use_caim = false;
      break;
    case Variant::V2:
      base.use_pcab = false;
      break;
  }
  return base;
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.base_channels = 8;
  c.feb_count = 2;
  c.residual_blocks = 2;
  return c;
}

template <class T>
SdiNet<T>::SdiNet(ModelConfig config) : config_(config) {
  config_.validate();
  const std::int64_t c0 = config_.base_channels;
  const std::int64_t c = config_.bottleneck_channels();
  auto& r = params_;

  encoder_.push_back(nn::make_conv(r, "encoder.conv1", 3, c0, 3));
  encoder_.push_back(nn::make_conv(r, "encoder.down1", c0, 2 * c0, 3, 2));
  encoder_.push_back(nn::make_conv(r, "encoder.down2", 2 * c0, c, 3, 2));

  if (config_.use_caim) {
    caim_norm_ = nn::make_layer_norm(r, "caim.norm", c);
    caim_query_ = nn::make_conv(r, "caim.query", c, c, 1);
    caim_key_ = nn::make_conv(r, "caim.key", c, c, 1);
    caim_value_ = nn::make_conv(r, "caim.value", c, c, 1);
  }
  if (config_.use_pcab) {
    for (int i = 0; i < config_.feb_count; ++i) {
      febs_.push_back(nn::make_feb(r, "pcab.feb" + std::to_string(i), c,
                                   config_.attention_reduction));
    }
    gamma_left_ = r.add("pcab.gamma_left", {1}, nn::ParamKind::Gate);
    gamma_right_ = r.add("pcab.gamma_right", {1}, nn::ParamKind::Gate);
  }
  if (config_.v0_heuristic) {
    v0_merge_ = nn::make_conv(r, "v0.merge", 2 * c, c, 3, 2);
    v0_refine_ = nn::make_conv(r, "v0.refine", 2 * c, c, 3, 2);
    v0_restore_ = nn::make_conv(r, "v0.restore", c, c, 1);
  }

  for (int i = 0; i < config_.residual_blocks; ++i) {
    residuals_.push_back(nn::make_residual_block(r, "decoder.res" + std::to_string(i), c));
  }
  up_half_ = nn::make_conv(r, "decoder.up1", c, 2 * c0, 3);
  fuse_half_ = nn::make_conv(r, "decoder.fuse1", 4 * c0, 2 * c0, 1);
  up_full_ = nn::make_conv(r, "decoder.up2", 2 * c0, c0, 3);
  fuse_full_ = nn::make_conv(r, "decoder.fuse2", 2 * c0, c0, 1);
  head_ = nn::make_conv(r, "decoder.head", c0, 3, 3);
}

template <class T>
void SdiNet<T>::check_input(const Tensor<T>& image) const {
  if (image.rank() != 4 || image.dim(1) != 3) {
    throw DimensionError("expected an [N,3,H,W] image batch, got " + shape_str(image.shape()));
  }
  const int multiple = config_.v0_heuristic ? 8 : 4;
  if (image.dim(2) % multiple != 0 || image.dim(3) % multiple != 0) {
    throw ConfigError("image height and width must be divisible by " + std::to_string(multiple) +
                      ", got " + shape_str(image.shape()));
  }
}

template <class T>
Encoding<T> SdiNet<T>::encode(const Tensor<T>& image) const {
  check_input(image);
  Encoding<T> e;
  e.skip_full = ops::relu(encoder_[0](image));
  e.skip_half = ops::relu(encoder_[1](e.skip_full));
  e.feature = ops::relu(encoder_[2](e.skip_half));
  return e;
}

namespace {

// [N,C,h,w] -> [B, L, C] token matrices.
template <class T>
Tensor<T> to_tokens(const Tensor<T>& x, AttentionScope scope) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto nhwc = ops::permute(x, {0, 2, 3, 1});
  return scope == AttentionScope::Row ? ops::reshape(nhwc, {n * h, w, c})
                                      : ops::reshape(nhwc, {n, h * w, c});
}

template <class T>
Tensor<T> from_tokens(const Tensor<T>& t, const Shape& nchw) {
  const auto nhwc = ops::reshape(t, {nchw[0], nchw[2], nchw[3], nchw[1]});
  return ops::permute(nhwc, {0, 3, 1, 2});
}

// softmax(q kᵀ / sqrt(C)) v on token matrices.
template <class T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  const T scale = T(1) / std::sqrt(static_cast<T>(q.dim(-1)));
  const auto logits = ops::scale(ops::matmul(q, ops::transpose_last2(k)), scale);
  return ops::matmul(ops::softmax_lastdim(logits), v);
}

}  // namespace

template <class T>
CaimOutput<T> SdiNet<T>::caim(const Tensor<T>& left, const Tensor<T>& right) const {
  if (!config_.use_caim) throw ConfigError("caim() called on a model without CAIM");
  if (left.shape() != right.shape()) {
    throw DimensionError("caim: view features differ in shape: " + shape_str(left.shape()) +
                         " vs " + shape_str(right.shape()));
  }
  const auto scope = config_.attention;
  const auto q = to_tokens(caim_query_(caim_norm_(left)), scope);
  const auto k = to_tokens(caim_key_(caim_norm_(right)), scope);

  CaimOutput<T> out;
  out.value_left = caim_value_(left);
  out.value_right = caim_value_(right);
  const auto& v_for_left = config_.cross_value ? out.value_right : out.value_left;
  const auto& v_for_right = config_.cross_value ? out.value_left : out.value_right;

  out.attended_left = from_tokens(attention(q, k, to_tokens(v_for_left, scope)), left.shape());
  out.attended_right = from_tokens(attention(k, q, to_tokens(v_for_right, scope)), right.shape());
  out.left = ops::add(out.attended_left, left);
  out.right = ops::add(out.attended_right, right);
  return out;
}

template <class T>
Tensor<T> SdiNet<T>::refine(const Tensor<T>& x) const {
  Tensor<T> r = x;
  for (const auto& feb : febs_) r = feb(r);
  return r;
}

template <class T>
StereoPair<T> SdiNet<T>::pcab(const Tensor<T>& r2l, const Tensor<T>& l2r, const Tensor<T>& left,
                              const Tensor<T>& right) const {
  if (!config_.use_pcab) throw ConfigError("pcab() called on a model without PCAB");
  const auto& s = left.shape();
  if (r2l.shape() != s || l2r.shape() != s || right.shape() != s) {
    throw DimensionError("pcab: all four inputs must share one shape");
  }
  return {ops::add(ops::mul(gamma_left_, refine(r2l)), left),
          ops::add(ops::mul(gamma_right_, refine(l2r)), right)};
}

template <class T>
StereoPair<T> SdiNet<T>::v0_interaction(const Tensor<T>& left, const Tensor<T>& right) const {
  if (!config_.v0_heuristic) throw ConfigError("v0_interaction() needs the V0 configuration");
  if (left.shape() != right.shape()) throw DimensionError("v0_interaction: shape mismatch");
  const auto merged = ops::relu(v0_merge_(ops::concat_channels<T>({left, right})));
  const auto up = ops::upsample_bilinear_x2(merged);
  auto second = [&](const Tensor<T>& view) {
    const auto down = ops::relu(v0_refine_(ops::concat_channels<T>({up, view})));
    return v0_restore_(ops::upsample_bilinear_x2(down));
  };
  return {second(left), second(right)};
}

template <class T>
StereoPair<T> SdiNet<T>::interact(const Tensor<T>& left, const Tensor<T>& right) const {
  if (config_.v0_heuristic) return v0_interaction(left, right);
  StereoPair<T> cur{left, right};
  if (config_.use_caim) {
    auto c = caim(left, right);
    cur = {c.left, c.right};
  }
  if (config_.use_pcab) return pcab(cur.left, cur.right, left, right);
  return cur;
}

template <class T>
Tensor<T> SdiNet<T>::decode(const Tensor<T>& feature, const Encoding<T>& skips) const {
  Tensor<T> x = feature;
  for (const auto& block : residuals_) x = block(x);
  x = ops::relu(up_half_(ops::upsample_bilinear_x2(x)));
  x = ops::relu(fuse_half_(ops::concat_channels<T>({x, skips.skip_half})));
  x = ops::relu(up_full_(ops::upsample_bilinear_x2(x)));
  x = ops::relu(fuse_full_(ops::concat_channels<T>({x, skips.skip_full})));
  return ops::sigmoid(head_(x));
}

template <class T>
StereoPair<T> SdiNet<T>::forward(const Tensor<T>& left, const Tensor<T>& right) const {
  if (left.shape() != right.shape()) {
    throw DimensionError("left and right views differ in shape: " + shape_str(left.shape()) +
                         " vs " + shape_str(right.shape()));
  }
  const auto el = encode(left);
  const auto er = encode(right);
  const auto sf = interact(el.feature, er.feature);
  return {decode(sf.left, el), decode(sf.right, er)};
}

template class SdiNet<float>;
template class SdiNet<double>;

}  // namespace sdinet
