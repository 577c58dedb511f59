#include <gtest/gtest.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "sdinet/adam.hpp"
#include "sdinet/checkpoint.hpp"
#include "sdinet/error.hpp"
#include "sdinet/metrics.hpp"
#include "sdinet/synth.hpp"
#include "sdinet/trainer.hpp"

using namespace sdinet;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("sdinet_trainer_" + std::to_string(::getpid()) + "_" + name);
}

std::vector<StereoSample> tiny_data(int count, int size = 16, std::uint64_t seed = 0) {
  std::vector<StereoSample> out;
  for (int i = 0; i < count; ++i) {
    SynthConfig c;
    c.seed = seed + static_cast<std::uint64_t>(i);
    c.height = c.width = size;
    c.disparity_min = c.disparity_max = 1;
    out.push_back(synth_generate(c, "s" + std::to_string(i)));
  }
  return out;
}

TrainConfig tiny_config(Variant v = Variant::Full) {
  TrainConfig t;
  t.model.base_channels = 2;
  t.model.feb_count = 1;
  t.model.residual_blocks = 1;
  t = TrainConfig::for_variant(v, t);
  t.epochs = 3;
  t.batch_size = 2;
  t.lr = 1e-3;
  t.seed = 5;
  return t;
}

std::vector<float> flat_params(const SdiNet<float>& m) {
  std::vector<float> v;
  for (const auto& p : m.params()) v.insert(v.end(), p.tensor.data().begin(), p.tensor.data().end());
  return v;
}

nn::ParamRegistry<double> scalar_registry(double x0) {
  nn::ParamRegistry<double> reg;
  reg.add("x", {1}, nn::ParamKind::Bias).mutable_data()[0] = x0;
  return reg;
}

void set_grad(nn::ParamRegistry<double>& reg, double g) { reg.get("x").mutable_grad()[0] = g; }

}  // namespace

TEST(Adam, ZeroGradientsLeaveParamsAndCountStep) {
  auto reg = scalar_registry(0.7);
  AdamState<double> st;
  set_grad(reg, 0.0);
  adam_step(reg, st, 1e-3);
  EXPECT_EQ(reg.get("x").item(), 0.7);
  EXPECT_EQ(st.step, 1);
  EXPECT_FALSE(reg.get("x").has_grad());
}

TEST(Adam, FirstStepIsSignStepOfSizeLr) {
  // bias correction leaves m = g and v = g^2, so the step is lr * g / (|g| + eps)
  for (double g : {1e-6, 0.3, 250.0, -4.0}) {
    auto reg = scalar_registry(1.0);
    AdamState<double> st;
    set_grad(reg, g);
    adam_step(reg, st, 0.01);
    EXPECT_NEAR(reg.get("x").item(), 1.0 - 0.01 * g / (std::abs(g) + 1e-8), 1e-12) << g;
    if (std::abs(g) >= 0.3) EXPECT_NEAR(std::abs(reg.get("x").item() - 1.0), 0.01, 1e-9) << g;
  }
}

TEST(Adam, FirstUpdateSignIndependentOfGradientScale) {
  nn::ParamRegistry<double> a, b;
  a.add("w", {4}, nn::ParamKind::Bias);
  b.add("w", {4}, nn::ParamKind::Bias);
  const double g[4] = {0.5, -2.0, 1e-3, -7.0};
  for (int i = 0; i < 4; ++i) {
    a.get("w").mutable_grad()[i] = g[i];
    b.get("w").mutable_grad()[i] = 1000.0 * g[i];
  }
  AdamState<double> sa, sb;
  adam_step(a, sa, 0.1);
  adam_step(b, sb, 0.1);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(std::signbit(a.get("w").data()[i]), std::signbit(b.get("w").data()[i]));
}

TEST(Adam, MinimizesQuadraticBowl) {
  auto reg = scalar_registry(1.0);
  AdamState<double> st;
  for (int i = 0; i < 100; ++i) {
    set_grad(reg, 2.0 * reg.get("x").item());
    adam_step(reg, st, 0.1);
  }
  EXPECT_LT(std::abs(reg.get("x").item()), 1e-2);
}

TEST(Adam, MissingGradientIsUsageError) {
  auto reg = scalar_registry(1.0);
  AdamState<double> st;
  EXPECT_THROW(adam_step(reg, st, 0.1), UsageError);
}

TEST(Adam, DefaultMoments) {
  const AdamOptions o;
  EXPECT_EQ(o.beta1, 0.5);
  EXPECT_EQ(o.beta2, 0.999);
  EXPECT_EQ(o.eps, 1e-8);
}

TEST(LrSchedule, HalvesEveryHundredEpochs) {
  EXPECT_EQ(lr_schedule(0), 1e-4);
  EXPECT_EQ(lr_schedule(99), 1e-4);
  EXPECT_EQ(lr_schedule(100), 5e-5);
  EXPECT_EQ(lr_schedule(250), 2.5e-5);
  for (int e = 0; e < 700; e += 37) EXPECT_EQ(lr_schedule(e), 1e-4 * std::pow(0.5, e / 100));
  EXPECT_THROW(lr_schedule(-1), ConfigError);
  EXPECT_THROW(lr_schedule(1, 1e-4, 0), ConfigError);
}

TEST(ClipGradNorm, RescalesOnlyAboveThreshold) {
  nn::ParamRegistry<double> reg;
  reg.add("a", {2}, nn::ParamKind::Bias);
  reg.get("a").mutable_grad()[0] = 3;
  reg.get("a").mutable_grad()[1] = 4;
  EXPECT_DOUBLE_EQ(clip_grad_norm(reg, 10.0), 5.0);
  EXPECT_EQ(reg.get("a").grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(reg, 1.0), 5.0);
  EXPECT_NEAR(reg.get("a").grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(reg.get("a").grad()[1], 0.8, 1e-12);
}

TEST(Checkpoint, SerializeRoundTripIsExact) {
  Checkpoint c;
  c.metadata = {{"a", "1"}, {"b", "x y"}};
  c.put({"t32", {2, 3}, DType::F32, {1.5, -2.25, 0, 3, 1e-3f, 7}});
  c.put({"t64", {1}, DType::F64, {0.1}});
  const auto bytes = serialize_checkpoint(c);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SDIN");
  const auto back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back.metadata, c.metadata);
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_EQ(back.find("t32")->values, c.find("t32")->values);
  EXPECT_EQ(back.find("t32")->shape, (Shape{2, 3}));
  EXPECT_EQ(back.find("t64")->values[0], 0.1);
  EXPECT_EQ(back.find("t64")->dtype, DType::F64);
}

TEST(Checkpoint, TruncationBadMagicAndVersionAreErrors) {
  Checkpoint c;
  c.metadata = {{"k", "v"}};
  c.put({"t", {4}, DType::F32, {1, 2, 3, 4}});
  const auto bytes = serialize_checkpoint(c);
  for (std::size_t cut : {std::size_t(3), std::size_t(10), bytes.size() / 2, bytes.size() - 1}) {
    const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    try {
      deserialize_checkpoint(part);
      FAIL() << "cut " << cut;
    } catch (const CheckpointError& e) {
      EXPECT_NE(std::string(e.what()).find("corrupt"), std::string::npos) << e.what();
    }
  }
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(magic), CheckpointError);
  auto version = bytes;
  version[4] = 9;
  EXPECT_THROW(deserialize_checkpoint(version), CheckpointError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(deserialize_checkpoint(extra), CheckpointError);
}

TEST(Checkpoint, SaveLoadForwardIsBitwise) {
  SdiNet<float> net(tiny_config().model);
  net.init(3);
  const auto path = temp_path("fwd.ckpt");
  save_checkpoint(path, make_checkpoint(tiny_config(), net));
  const auto loaded = load_model(load_checkpoint(path));
  fs::remove(path);
  const auto data = tiny_data(1);
  const auto a = enhance(net, data[0].low_left, data[0].low_right);
  const auto b = enhance(loaded, data[0].low_left, data[0].low_right);
  EXPECT_EQ(a.left.values(), b.left.values());
  EXPECT_EQ(a.right.values(), b.right.values());
  EXPECT_THROW(load_checkpoint(temp_path("absent.ckpt")), IoError);
}

TEST(Checkpoint, MismatchedModelNamesTheTensor) {
  auto cfg = tiny_config();
  SdiNet<float> net(cfg.model);
  auto ckpt = make_checkpoint(cfg, net);
  cfg.model.base_channels = 3;
  SdiNet<float> other(cfg.model);
  try {
    import_params(other.params(), ckpt);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.conv1.weight"), std::string::npos) << e.what();
  }
  // metadata claiming a different model than the stored tensors
  auto meta = ckpt;
  meta.metadata["model.base_channels"] = "3";
  EXPECT_THROW(load_model(meta), CheckpointError);
  auto missing = ckpt;
  missing.tensors.pop_back();
  EXPECT_THROW(load_model(missing), CheckpointError);
}

TEST(TrainConfig, DefaultsAndVariants) {
  const TrainConfig t;
  EXPECT_EQ(t.epochs, 700);
  EXPECT_EQ(t.batch_size, 2);
  EXPECT_EQ(t.lr, 1e-4);
  EXPECT_EQ(t.lr_halving_period, 100);
  EXPECT_EQ(t.lambda, 0.1);
  EXPECT_EQ(t.clip_norm, 0.0);
  EXPECT_TRUE(t.frequency_loss);
  EXPECT_FALSE(TrainConfig::for_variant(Variant::V3, t).frequency_loss);
  EXPECT_TRUE(TrainConfig::for_variant(Variant::V1, t).frequency_loss);
  EXPECT_EQ(TrainConfig::desk().model, ModelConfig::desk());
}

TEST(TrainConfig, KeyValueRoundTripAndValidation) {
  auto t = tiny_config(Variant::V2);
  t.patch_h = t.patch_w = 8;
  t.clip_norm = 0.5;
  t.lr = 3.3e-4;
  EXPECT_EQ(TrainConfig::from_kv(t.to_kv()), t);
  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  TrainConfig patch;
  patch.patch_h = 6;
  patch.patch_w = 8;
  EXPECT_THROW(patch.validate(), ConfigError);
}

TEST(LossLog, FormatParsesBackExactly) {
  const LossRecord r{12, 3, 2.5e-5, 0.123456789012345678, 1.0 / 3.0, 0.3};
  const auto line = format_loss_line(r);
  EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 5);
  EXPECT_EQ(parse_loss_line(line), r);
  EXPECT_EQ(loss_log_header(), "step\tepoch\tlr\tl1\tfre\ttotal");
  EXPECT_THROW(parse_loss_line("1\t2\t3"), ConfigError);
}

TEST(EpochOrder, PermutationDeterministicPerEpoch) {
  const auto a = epoch_order(1, 0, 10);
  EXPECT_EQ(a, epoch_order(1, 0, 10));
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_NE(a, epoch_order(1, 1, 10));
}

TEST(Trainer, RejectsEmptyAndMixedSizeData) {
  EXPECT_THROW(Trainer(tiny_config(), {}), DatasetError);
  auto data = tiny_data(1, 16);
  data.push_back(tiny_data(1, 32, 9)[0]);
  EXPECT_THROW(Trainer(tiny_config(), data), ConfigError);
  auto cfg = tiny_config();
  cfg.patch_h = cfg.patch_w = 16;
  EXPECT_NO_THROW(Trainer(cfg, data));
}

TEST(Trainer, ScheduleCountersAndLog) {
  Trainer t(tiny_config(), tiny_data(3));
  EXPECT_EQ(t.batches_per_epoch(), 2);
  EXPECT_EQ(t.total_steps(), 6);
  const auto log = t.train();
  ASSERT_EQ(log.size(), 6u);
  EXPECT_TRUE(t.finished());
  EXPECT_EQ(log[5].step, 5);
  EXPECT_EQ(log[5].epoch, 2);
  for (const auto& r : log) {
    EXPECT_EQ(r.lr, 1e-3);
    EXPECT_NEAR(r.total, r.l1 + 0.1 * r.fre, 1e-6);
    EXPECT_GT(r.fre, 0.0);
  }
  EXPECT_THROW(t.step(), UsageError);
  EXPECT_EQ(t.optimizer().step, 6);
}

TEST(Trainer, MaxStepsAndStepScheduledLearningRate) {
  auto cfg = tiny_config();
  cfg.epochs = 100;
  cfg.max_steps = 4;
  cfg.schedule_steps_per_epoch = 1;
  cfg.lr_halving_period = 2;
  Trainer t(cfg, tiny_data(1));
  const auto log = t.train();
  ASSERT_EQ(log.size(), 4u);
  EXPECT_EQ(log[0].lr, 1e-3);
  EXPECT_EQ(log[2].lr, 5e-4);
}

TEST(Trainer, V3DropsFrequencyTerm) {
  Trainer t(tiny_config(Variant::V3), tiny_data(2));
  for (const auto& r : t.run(2)) {
    EXPECT_EQ(r.fre, 0.0);
    EXPECT_EQ(r.total, r.l1);
  }
}

TEST(Trainer, SameSeedSameLog) {
  auto cfg = tiny_config();
  cfg.patch_h = cfg.patch_w = 8;
  const auto data = tiny_data(3);
  Trainer a(cfg, data), b(cfg, data);
  const auto la = a.train(), lb = b.train();
  EXPECT_EQ(la, lb);
  EXPECT_EQ(flat_params(a.model()), flat_params(b.model()));
  cfg.seed = 6;
  Trainer c(cfg, data);
  EXPECT_NE(c.train(), la);
}

TEST(Trainer, ResumeMatchesStraightRunBitwise) {
  auto cfg = tiny_config();
  cfg.patch_h = cfg.patch_w = 8;
  const auto data = tiny_data(3);
  Trainer straight(cfg, data);
  const auto full_log = straight.run(6);

  Trainer first(cfg, data);
  auto log = first.run(3);
  const auto path = temp_path("resume.ckpt");
  save_checkpoint(path, first.checkpoint());
  Trainer second = Trainer::resume(load_checkpoint(path), data);
  fs::remove(path);
  EXPECT_EQ(second.steps_done(), 3);
  const auto rest = second.run(3);
  log.insert(log.end(), rest.begin(), rest.end());
  EXPECT_EQ(log, full_log);
  EXPECT_EQ(flat_params(second.model()), flat_params(straight.model()));
}

TEST(Trainer, InitialLossMatchesInteractionFreeNetwork) {
  const auto data = tiny_data(2);
  auto full = tiny_config(Variant::Full);
  auto none = full;
  none.model.use_caim = false;
  none.model.use_pcab = false;
  Trainer a(full, data), b(none, data);
  EXPECT_EQ(a.step().total, b.step().total);
}

TEST(Trainer, NonFiniteLossNamesFirstBadTensor) {
  auto data = tiny_data(1);
  data[0].low_left.mutable_data()[7] = std::nanf("");
  Trainer t(tiny_config(), data);
  try {
    t.step();
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("low_left"), std::string::npos) << e.what();
  }
  Trainer p(tiny_config(), tiny_data(1));
  p.model().params().get("decoder.head.bias").mutable_data()[0] = std::nanf("");
  try {
    p.step();
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder.head.bias"), std::string::npos) << e.what();
  }
}

TEST(Trainer, ZeroEpochsCheckpointRestores) {
  auto cfg = tiny_config();
  cfg.epochs = 0;
  Trainer t(cfg, tiny_data(1));
  EXPECT_TRUE(t.finished());
  EXPECT_TRUE(t.train().empty());
  const auto r = Trainer::resume(t.checkpoint(), tiny_data(1));
  EXPECT_EQ(flat_params(r.model()), flat_params(t.model()));
}

TEST(Evaluate, UntrainedModelGivesFiniteScoresAndErrorMaps) {
  SdiNet<float> net(tiny_config().model);
  net.init(1);
  const auto data = tiny_data(2);
  const auto dir = temp_path("maps");
  fs::create_directories(dir);
  const auto report = evaluate(net, data, dir);
  ASSERT_EQ(report.samples.size(), 2u);
  for (const auto& s : report.samples) {
    EXPECT_TRUE(std::isfinite(s.psnr_left) && std::isfinite(s.ssim_right));
    EXPECT_TRUE(fs::exists(dir / (s.id + "_left.png")));
    EXPECT_TRUE(fs::exists(dir / (s.id + "_right.png")));
  }
  fs::remove_all(dir);
  EXPECT_NEAR(report.mean.psnr_left, (report.samples[0].psnr_left + report.samples[1].psnr_left) / 2, 1e-12);
  const auto table = report.table();
  EXPECT_NE(table.find("PSNR Left"), std::string::npos);
  EXPECT_NE(table.find("PSNR Right"), std::string::npos);
  EXPECT_NE(table.find("SSIM Left"), std::string::npos);
  EXPECT_NE(table.find("SSIM Right"), std::string::npos);
  const auto summary = report.summary();
  EXPECT_EQ(summary.find('\n'), std::string::npos);
  EXPECT_NE(summary.find("psnr_left="), std::string::npos);
  EXPECT_NE(summary.find("ssim_right="), std::string::npos);
}

TEST(Evaluate, GroundTruthAgainstItself) {
  const auto d = tiny_data(1)[0];
  const auto r = summarize({{d.id, psnr(d.gt_left, d.gt_left), psnr(d.gt_right, d.gt_right),
                             ssim(d.gt_left, d.gt_left), ssim(d.gt_right, d.gt_right)}});
  EXPECT_TRUE(std::isinf(r.mean.psnr_left));
  EXPECT_NEAR(r.mean.ssim_right, 1.0, 1e-12);
}

TEST(Enhance, ShapesAndDeterminism) {
  SdiNet<float> net(tiny_config().model);
  net.init(2);
  const auto d = tiny_data(1)[0];
  const auto a = enhance(net, d.low_left, d.low_right);
  const auto b = enhance(net, d.low_left, d.low_right);
  EXPECT_EQ(a.left.shape(), d.low_left.shape());
  EXPECT_EQ(a.left.values(), b.left.values());
  EXPECT_EQ(active_tape<float>().size(), 0u);
  EXPECT_THROW(enhance(net, d.low_left, Tensor<float>::zeros({3, 16, 20})), DimensionError);
}
