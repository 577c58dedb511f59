#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sdinet/adam.hpp"
#include "sdinet/checkpoint.hpp"
#include "sdinet/dataset.hpp"
#include "sdinet/losses.hpp"
#include "sdinet/model.hpp"

namespace sdinet {

struct TrainConfig {
  std::int64_t epochs = 700;
  std::int64_t batch_size = 2;
  double lr = 1e-4;
  std::int64_t lr_halving_period = 100;
  double lambda = kDefaultLambda;
  bool frequency_loss = true;
  std::uint64_t seed = 0;
  ModelConfig model;
  // 0 trains on whole images; otherwise a random window per sample per step.
  std::int64_t patch_h = 0;
  std::int64_t patch_w = 0;
  double clip_norm = 0.0;  // 0 disables clipping
  std::int64_t max_steps = -1;  // < 0 runs every epoch
  // Learning rate schedule keyed on steps instead of epochs when > 0.
  std::int64_t schedule_steps_per_epoch = 0;
  AdamOptions adam;

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv);

  /// Model switches plus the loss switch that the variant implies.
  static TrainConfig for_variant(Variant v, TrainConfig base);
  /// Desk-scale model, one-sample batches on 64x64 images.
  static TrainConfig desk();

  bool operator==(const TrainConfig&) const = default;
};

struct LossRecord {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double lr = 0;
  double l1 = 0;
  double fre = 0;
  double total = 0;

  bool operator==(const LossRecord&) const = default;
};

/// "step\tepoch\tlr\tl1\tfre\ttotal" with round-trippable numbers.
std::string format_loss_line(const LossRecord& r);
std::string loss_log_header();
LossRecord parse_loss_line(const std::string& line);

/// Sample order for one epoch, a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::int64_t epoch, std::size_t n);

class Trainer {
 public:
  Trainer(TrainConfig config, std::vector<StereoSample> data);

  /// Restores model, optimizer, counters and crop RNG from a checkpoint.
  static Trainer resume(const Checkpoint& ckpt, std::vector<StereoSample> data);

  /// One optimizer step on the next batch of the schedule.
  LossRecord step();
  /// Up to `steps` steps, stopping early once finished().
  std::vector<LossRecord> run(std::int64_t steps);
  /// Runs to completion.
  std::vector<LossRecord> train();

  bool finished() const { return step_ >= total_steps(); }
  std::int64_t total_steps() const;
  std::int64_t steps_done() const { return step_; }
  std::int64_t batches_per_epoch() const;
  std::int64_t current_epoch() const { return step_ / batches_per_epoch(); }
  double current_lr() const;

  const TrainConfig& config() const { return config_; }
  SdiNet<float>& model() { return model_; }
  const SdiNet<float>& model() const { return model_; }
  const AdamState<float>& optimizer() const { return adam_; }

  Checkpoint checkpoint() const;

 private:
  TrainConfig config_;
  std::vector<StereoSample> data_;
  SdiNet<float> model_;
  AdamState<float> adam_;
  std::mt19937_64 crop_rng_;
  std::int64_t step_ = 0;
};

/// Config + parameters only; usable for Trainer::resume with zero steps.
Checkpoint make_checkpoint(const TrainConfig& config, const SdiNet<float>& model);

/// Builds the model described by the checkpoint metadata and loads its
/// parameters. Shape or name disagreement raises CheckpointError.
SdiNet<float> load_model(const Checkpoint& ckpt);
TrainConfig checkpoint_config(const Checkpoint& ckpt);

struct SampleScores {
  std::string id;
  double psnr_left = 0;
  double psnr_right = 0;
  double ssim_left = 0;
  double ssim_right = 0;
};

struct EvalReport {
  std::vector<SampleScores> samples;
  SampleScores mean;  // id "mean"

  /// Left/Right columns for PSNR and SSIM.
  std::string table() const;
  /// Single line of key=value pairs.
  std::string summary() const;
};

EvalReport summarize(std::vector<SampleScores> samples);

/// Enhances each sample and scores both views against ground truth. With
/// `error_map_dir` set, writes <id>_left.png and <id>_right.png error maps.
EvalReport evaluate(const SdiNet<float>& model, const std::vector<StereoSample>& data,
                    const std::optional<std::filesystem::path>& error_map_dir = std::nullopt);

/// Inference for one pair of [3,H,W] images; returns [3,H,W] outputs.
StereoPair<float> enhance(const SdiNet<float>& model, const Tensor<float>& left,
                          const Tensor<float>& right);

}  // namespace sdinet
