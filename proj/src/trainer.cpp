#include "sdinet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sdinet/error.hpp"
#include "sdinet/image.hpp"
#include "sdinet/metrics.hpp"
#include "sdinet/ops.hpp"

namespace sdinet {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError("missing train config key: " + key);
  return it->second;
}

std::int64_t as_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto& s = need(kv, key);
  try {
    std::size_t used = 0;
    const auto v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("bad integer for " + key + ": " + s);
  }
}

double as_double(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto& s = need(kv, key);
  try {
    std::size_t used = 0;
    const auto v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("bad number for " + key + ": " + s);
  }
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  if (lr_halving_period <= 0) throw ConfigError("lr halving period must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (patch_h < 0 || patch_w < 0 || (patch_h == 0) != (patch_w == 0)) {
    throw ConfigError("patch size must be both zero or both positive");
  }
  if (patch_h % 4 != 0 || patch_w % 4 != 0) throw ConfigError("patch size must be divisible by 4");
  if (clip_norm < 0.0) throw ConfigError("clip norm must be >= 0");
  if (schedule_steps_per_epoch < 0) throw ConfigError("schedule steps per epoch must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.eps > 0.0)) {
    throw ConfigError("Adam betas must lie in [0, 1) and eps must be positive");
  }
}

std::map<std::string, std::string> TrainConfig::to_kv() const {
  auto kv = model.to_kv();
  kv["train.epochs"] = std::to_string(epochs);
  kv["train.batch_size"] = std::to_string(batch_size);
  kv["train.lr"] = num(lr);
  kv["train.lr_halving_period"] = std::to_string(lr_halving_period);
  kv["train.lambda"] = num(lambda);
  kv["train.frequency_loss"] = frequency_loss ? "1" : "0";
  kv["train.seed"] = std::to_string(seed);
  kv["train.patch_h"] = std::to_string(patch_h);
  kv["train.patch_w"] = std::to_string(patch_w);
  kv["train.clip_norm"] = num(clip_norm);
  kv["train.max_steps"] = std::to_string(max_steps);
  kv["train.schedule_steps_per_epoch"] = std::to_string(schedule_steps_per_epoch);
  kv["train.adam_beta1"] = num(adam.beta1);
  kv["train.adam_beta2"] = num(adam.beta2);
  kv["train.adam_eps"] = num(adam.eps);
  return kv;
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  c.model = ModelConfig::from_kv(kv);
  c.epochs = as_int(kv, "train.epochs");
  c.batch_size = as_int(kv, "train.batch_size");
  c.lr = as_double(kv, "train.lr");
  c.lr_halving_period = as_int(kv, "train.lr_halving_period");
  c.lambda = as_double(kv, "train.lambda");
  c.frequency_loss = need(kv, "train.frequency_loss") == "1";
  try {
    c.seed = std::stoull(need(kv, "train.seed"));
  } catch (const std::logic_error&) {
    throw ConfigError("bad seed: " + need(kv, "train.seed"));
  }
  c.patch_h = as_int(kv, "train.patch_h");
  c.patch_w = as_int(kv, "train.patch_w");
  c.clip_norm = as_double(kv, "train.clip_norm");
  c.max_steps = as_int(kv, "train.max_steps");
  c.schedule_steps_per_epoch = as_int(kv, "train.schedule_steps_per_epoch");
  c.adam.beta1 = as_double(kv, "train.adam_beta1");
  c.adam.beta2 = as_double(kv, "train.adam_beta2");
  c.adam.eps = as_double(kv, "train.adam_eps");
  c.validate();
  return c;
}

TrainConfig TrainConfig::for_variant(Variant v, TrainConfig base) {
  base.model = ModelConfig::for_variant(v, base.model);
  base.frequency_loss = v != Variant::V3;
  return base;
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.model = ModelConfig::desk();
  c.batch_size = 1;
  return c;
}

std::string loss_log_header() { return "step\tepoch\tlr\tl1\tfre\ttotal"; }

std::string format_loss_line(const LossRecord& r) {
  return std::to_string(r.step) + "\t" + std::to_string(r.epoch) + "\t" + num(r.lr) + "\t" +
         num(r.l1) + "\t" + num(r.fre) + "\t" + num(r.total);
}

LossRecord parse_loss_line(const std::string& line) {
  std::istringstream in(line);
  LossRecord r;
  std::string fields[6];
  for (auto& f : fields) {
    if (!std::getline(in, f, '\t')) throw ConfigError("loss log line has fewer than 6 fields: " + line);
  }
  try {
    r.step = std::stoll(fields[0]);
    r.epoch = std::stoll(fields[1]);
    r.lr = std::stod(fields[2]);
    r.l1 = std::stod(fields[3]);
    r.fre = std::stod(fields[4]);
    r.total = std::stod(fields[5]);
  } catch (const std::logic_error&) {
    throw ConfigError("bad loss log line: " + line);
  }
  return r;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::int64_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(mix(seed ^ mix(static_cast<std::uint64_t>(epoch))));
  // Fisher-Yates with explicit draws keeps the order identical across standard libraries.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

Trainer::Trainer(TrainConfig config, std::vector<StereoSample> data)
    : config_(std::move(config)), data_(std::move(data)), model_(config_.model),
      crop_rng_(mix(config_.seed ^ 0xc0fec0fec0fec0feULL)) {
  config_.validate();
  if (data_.empty()) throw DatasetError("training needs at least one sample");
  for (const auto& s : data_) {
    s.validate();
    if (config_.patch_h > 0 && (s.height() < config_.patch_h || s.width() < config_.patch_w)) {
      throw ConfigError("sample '" + s.id + "' is smaller than the training patch");
    }
    if (config_.patch_h == 0 &&
        (s.height() != data_[0].height() || s.width() != data_[0].width())) {
      throw ConfigError("samples differ in size; set a patch size");
    }
  }
  adam_.options = config_.adam;
  model_.init(config_.seed);
}

std::int64_t Trainer::batches_per_epoch() const {
  const auto n = static_cast<std::int64_t>(data_.size());
  return (n + config_.batch_size - 1) / config_.batch_size;
}

std::int64_t Trainer::total_steps() const {
  const std::int64_t all = config_.epochs * batches_per_epoch();
  return config_.max_steps >= 0 ? std::min(all, config_.max_steps) : all;
}

double Trainer::current_lr() const {
  const std::int64_t e = config_.schedule_steps_per_epoch > 0
                             ? step_ / config_.schedule_steps_per_epoch
                             : current_epoch();
  return lr_schedule(e, config_.lr, config_.lr_halving_period);
}

namespace {

std::string describe_non_finite(const GradTape<float>& tape, const nn::ParamRegistry<float>& params,
                                const std::vector<Tensor<float>>& inputs) {
  static const char* kInputNames[] = {"low_left", "low_right", "gt_left", "gt_right"};
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!all_finite<float>(inputs[i].data())) return std::string("input batch '") + kInputNames[i] + "'";
  }
  for (const auto& p : params) {
    if (!all_finite<float>(p.tensor.data())) return "parameter '" + p.name + "'";
  }
  const auto& nodes = tape.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (const auto& out : nodes[i].outputs) {
      if (!all_finite<float>(std::span<const float>(out->data))) {
        return "output of op '" + std::string(nodes[i].op) + "' (tape node " + std::to_string(i) +
               " of " + std::to_string(nodes.size()) + ")";
      }
    }
  }
  return "no recorded tensor";
}

}  // namespace

LossRecord Trainer::step() {
  if (finished()) throw UsageError("training schedule already complete");
  const std::int64_t bpe = batches_per_epoch();
  const std::int64_t epoch = step_ / bpe;
  const std::int64_t batch = step_ % bpe;
  const auto order = epoch_order(config_.seed, epoch, data_.size());
  const auto first = static_cast<std::size_t>(batch * config_.batch_size);
  const auto last = std::min(order.size(), first + static_cast<std::size_t>(config_.batch_size));

  std::vector<Tensor<float>> ll, lr, gl, gr;
  for (std::size_t k = first; k < last; ++k) {
    const StereoSample* s = &data_[order[k]];
    StereoSample cropped;
    if (config_.patch_h > 0) {
      const auto win = random_window(s->height(), s->width(), config_.patch_h, config_.patch_w, crop_rng_);
      cropped = crop(*s, win);
      s = &cropped;
    }
    ll.push_back(s->low_left);
    lr.push_back(s->low_right);
    gl.push_back(s->gt_left);
    gr.push_back(s->gt_right);
  }
  const std::vector<Tensor<float>> batch_inputs = {stack_images(ll), stack_images(lr),
                                                   stack_images(gl), stack_images(gr)};

  auto& tape = active_tape<float>();
  tape.clear();
  const double lr_now = current_lr();
  const auto fail = [&](const std::string& cause) {
    const std::string where = describe_non_finite(tape, model_.params(), batch_inputs);
    tape.clear();
    throw NumericError("non-finite loss at step " + std::to_string(step_) +
                       "; first non-finite tensor: " + where + cause);
  };
  // Ops that reject non-finite operands abort the forward pass early; the
  // diagnostic is the same as for a non-finite loss.
  std::optional<LossBreakdown<float>> loss;
  try {
    const auto out = model_.forward(batch_inputs[0], batch_inputs[1]);
    loss = total_loss(out.left, out.right, batch_inputs[2], batch_inputs[3], config_.lambda,
                      config_.frequency_loss);
  } catch (const NumericError& e) {
    fail(std::string(" (") + e.what() + ")");
  }
  if (!std::isfinite(static_cast<double>(loss->total))) fail("");
  backward(loss->objective);
  if (config_.clip_norm > 0.0) clip_grad_norm(model_.params(), config_.clip_norm);
  adam_step(model_.params(), adam_, lr_now);

  LossRecord r;
  r.step = step_;
  r.epoch = epoch;
  r.lr = lr_now;
  r.l1 = loss->l1_sum();
  r.fre = loss->frequency_term ? static_cast<double>(loss->fre_sum()) : 0.0;
  r.total = loss->total;
  ++step_;
  return r;
}

std::vector<LossRecord> Trainer::run(std::int64_t steps) {
  std::vector<LossRecord> log;
  for (std::int64_t i = 0; i < steps && !finished(); ++i) log.push_back(step());
  return log;
}

std::vector<LossRecord> Trainer::train() { return run(total_steps() - step_); }

Checkpoint make_checkpoint(const TrainConfig& config, const SdiNet<float>& model) {
  Checkpoint ckpt;
  ckpt.metadata = config.to_kv();
  ckpt.metadata["state.step"] = "0";
  ckpt.metadata["state.adam_t"] = "0";
  export_params(model.params(), ckpt);
  return ckpt;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt = make_checkpoint(config_, model_);
  ckpt.metadata["state.step"] = std::to_string(step_);
  ckpt.metadata["state.epoch"] = std::to_string(current_epoch());
  ckpt.metadata["state.adam_t"] = std::to_string(adam_.step);
  std::ostringstream rng;
  rng << crop_rng_;
  ckpt.metadata["state.crop_rng"] = rng.str();
  for (const auto& p : model_.params()) {
    for (const auto& [prefix, moments] :
         {std::pair{"adam.m.", &adam_.first_moment}, std::pair{"adam.v.", &adam_.second_moment}}) {
      const auto it = moments->find(p.name);
      if (it == moments->end()) continue;
      NamedTensor t;
      t.name = prefix + p.name;
      t.shape = p.tensor.shape();
      t.dtype = DType::F32;
      t.values.assign(it->second.begin(), it->second.end());
      ckpt.put(std::move(t));
    }
  }
  return ckpt;
}

TrainConfig checkpoint_config(const Checkpoint& ckpt) {
  try {
    return TrainConfig::from_kv(ckpt.metadata);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
}

SdiNet<float> load_model(const Checkpoint& ckpt) {
  SdiNet<float> model(checkpoint_config(ckpt).model);
  import_params(model.params(), ckpt);
  return model;
}

Trainer Trainer::resume(const Checkpoint& ckpt, std::vector<StereoSample> data) {
  Trainer t(checkpoint_config(ckpt), std::move(data));
  import_params(t.model_.params(), ckpt);
  const auto& meta = ckpt.metadata;
  auto counter = [&](const char* key) -> std::int64_t {
    const auto it = meta.find(key);
    if (it == meta.end()) return 0;
    try {
      return std::stoll(it->second);
    } catch (const std::logic_error&) {
      throw CheckpointError(std::string("bad ") + key + ": " + it->second);
    }
  };
  t.step_ = counter("state.step");
  t.adam_.step = counter("state.adam_t");
  if (t.step_ < 0 || t.adam_.step < 0) throw CheckpointError("negative counters in checkpoint");
  if (const auto it = meta.find("state.crop_rng"); it != meta.end()) {
    std::istringstream in(it->second);
    in >> t.crop_rng_;
    if (in.fail()) throw CheckpointError("bad crop RNG state in checkpoint");
  }
  if (t.adam_.step > 0) {
    for (const auto& p : t.model_.params()) {
      for (const auto& [prefix, moments] : {std::pair{"adam.m.", &t.adam_.first_moment},
                                            std::pair{"adam.v.", &t.adam_.second_moment}}) {
        const std::string name = prefix + p.name;
        const NamedTensor* nt = ckpt.find(name);
        if (!nt) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
        if (nt->shape != p.tensor.shape()) {
          throw CheckpointError("tensor '" + name + "' has shape " + shape_str(nt->shape) +
                                " but the model expects " + shape_str(p.tensor.shape()));
        }
        auto& buf = (*moments)[p.name];
        buf.resize(nt->values.size());
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(nt->values[i]);
      }
    }
  }
  return t;
}

StereoPair<float> enhance(const SdiNet<float>& model, const Tensor<float>& left,
                          const Tensor<float>& right) {
  if (left.rank() != 3 || left.dim(0) != 3 || left.shape() != right.shape()) {
    throw DimensionError("enhance expects two [3,H,W] images of one size, got " +
                         shape_str(left.shape()) + " and " + shape_str(right.shape()));
  }
  NoGradGuard no_grad;
  const auto out = model.forward(stack_images({left}), stack_images({right}));
  const Shape img = left.shape();
  return {ops::reshape(out.left, img), ops::reshape(out.right, img)};
}

EvalReport summarize(std::vector<SampleScores> samples) {
  EvalReport r;
  r.mean.id = "mean";
  if (!samples.empty()) {
    for (const auto& s : samples) {
      r.mean.psnr_left += s.psnr_left;
      r.mean.psnr_right += s.psnr_right;
      r.mean.ssim_left += s.ssim_left;
      r.mean.ssim_right += s.ssim_right;
    }
    const double n = static_cast<double>(samples.size());
    r.mean.psnr_left /= n;
    r.mean.psnr_right /= n;
    r.mean.ssim_left /= n;
    r.mean.ssim_right /= n;
  }
  r.samples = std::move(samples);
  return r;
}

EvalReport evaluate(const SdiNet<float>& model, const std::vector<StereoSample>& data,
                    const std::optional<std::filesystem::path>& error_map_dir) {
  std::vector<SampleScores> scores;
  for (const auto& s : data) {
    s.validate();
    const auto out = enhance(model, s.low_left, s.low_right);
    SampleScores sc;
    sc.id = s.id;
    sc.psnr_left = psnr(out.left, s.gt_left);
    sc.psnr_right = psnr(out.right, s.gt_right);
    sc.ssim_left = ssim(out.left, s.gt_left);
    sc.ssim_right = ssim(out.right, s.gt_right);
    if (error_map_dir) {
      write_image(*error_map_dir / (s.id + "_left.png"), error_map(out.left, s.gt_left));
      write_image(*error_map_dir / (s.id + "_right.png"), error_map(out.right, s.gt_right));
    }
    scores.push_back(sc);
  }
  return summarize(std::move(scores));
}

std::string EvalReport::table() const {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-12s %10s %10s %10s %10s\n", "sample", "PSNR Left", "PSNR Right",
                "SSIM Left", "SSIM Right");
  out += buf;
  auto row = [&](const SampleScores& s) {
    std::snprintf(buf, sizeof(buf), "%-12s %10.4f %10.4f %10.4f %10.4f\n", s.id.c_str(), s.psnr_left,
                  s.psnr_right, s.ssim_left, s.ssim_right);
    out += buf;
  };
  for (const auto& s : samples) row(s);
  row(mean);
  return out;
}

std::string EvalReport::summary() const {
  return "samples=" + std::to_string(samples.size()) + " psnr_left=" + num(mean.psnr_left) +
         " psnr_right=" + num(mean.psnr_right) + " ssim_left=" + num(mean.ssim_left) +
         " ssim_right=" + num(mean.ssim_right);
}

}  // namespace sdinet
