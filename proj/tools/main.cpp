#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "sdinet/checkpoint.hpp"
#include "sdinet/dataset.hpp"
#include "sdinet/error.hpp"
#include "sdinet/grad_suite.hpp"
#include "sdinet/image.hpp"
#include "sdinet/metrics.hpp"
#include "sdinet/synth.hpp"
#include "sdinet/trainer.hpp"

namespace fs = std::filesystem;
using namespace sdinet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitRuntime = 2;

// Input problems the user can fix by changing arguments.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::pair<int, int> parse_size(const std::string& text, const std::string& flag) {
  int h = 0, w = 0;
  char sep = 0, extra = 0;
  if (std::sscanf(text.c_str(), "%d%c%d%c", &h, &sep, &w, &extra) != 3 || (sep != 'x' && sep != 'X') ||
      h <= 0 || w <= 0)
    throw InvalidInput(flag + " expects HxW with positive sizes, got '" + text + "'");
  return {h, w};
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw InvalidInput(what + " not found: " + p.string());
}

void require_dir(const fs::path& p, const std::string& what) {
  if (!fs::is_directory(p)) throw InvalidInput(what + " not found: " + p.string());
}

fs::path sibling_with_suffix(const fs::path& p, const std::string& suffix) {
  return p.parent_path() / (p.stem().string() + suffix);
}

struct SynthArgs {
  fs::path out;
  int count = 1;
  std::string size = "64x64";
  std::uint64_t seed = 0;
  std::optional<int> disparity_max;
  std::optional<double> noise_sigma;
  std::optional<double> alpha;
  std::optional<double> gamma;
};

int run_synth(const SynthArgs& a) {
  SynthConfig c;
  std::tie(c.height, c.width) = parse_size(a.size, "--size");
  c.seed = a.seed;
  if (a.disparity_max) {
    c.disparity_max = *a.disparity_max;
    c.disparity_min = std::min(c.disparity_min, c.disparity_max);
  } else {
    // default range shrinks to stay below width / 8 on narrow images
    c.disparity_max = std::max(1, std::min(c.disparity_max, (c.width + 7) / 8 - 1));
  }
  if (a.noise_sigma) c.sigma_min = c.sigma_max = *a.noise_sigma;
  if (a.alpha) c.alpha_min = c.alpha_max = *a.alpha;
  if (a.gamma) c.gamma_min = c.gamma_max = *a.gamma;
  if (a.count <= 0) throw InvalidInput("--count must be positive");
  c.validate();
  const auto ids = write_synthetic_dataset(a.out, c, a.count);
  spdlog::info("wrote {} samples of {}x{} to {}", ids.size(), c.height, c.width, a.out.string());
  return kExitOk;
}

struct TrainArgs {
  fs::path data;
  fs::path out;
  std::optional<fs::path> log;
  std::optional<fs::path> resume;
  std::optional<std::int64_t> epochs;
  std::optional<std::int64_t> batch;
  std::optional<double> lr;
  std::optional<double> lambda;
  std::optional<std::string> variant;
  std::optional<std::string> patch;
  std::optional<std::uint64_t> seed;
  std::optional<double> clip_norm;
  std::optional<std::int64_t> max_steps;
  std::optional<std::string> preset;
};

TrainConfig train_config_from(const TrainArgs& a) {
  TrainConfig t;
  if (a.preset) {
    if (*a.preset != "desk") throw InvalidInput("unknown preset '" + *a.preset + "' (expected desk)");
    t = TrainConfig::desk();
  }
  if (a.variant) {
    const auto v = parse_variant(*a.variant);
    if (!v) throw InvalidInput("unknown variant '" + *a.variant + "' (expected full, v0, v1, v2 or v3)");
    t = TrainConfig::for_variant(*v, t);
  }
  if (a.epochs) t.epochs = *a.epochs;
  if (a.batch) t.batch_size = *a.batch;
  if (a.lr) t.lr = *a.lr;
  if (a.lambda) t.lambda = *a.lambda;
  if (a.seed) t.seed = *a.seed;
  if (a.clip_norm) t.clip_norm = *a.clip_norm;
  if (a.max_steps) t.max_steps = *a.max_steps;
  if (a.patch) {
    const auto [h, w] = parse_size(*a.patch, "--patch");
    t.patch_h = h;
    t.patch_w = w;
  }
  t.validate();
  return t;
}

int run_train(const TrainArgs& a) {
  require_dir(a.data, "dataset");
  auto data = load_dataset(a.data);
  if (data.empty()) throw InvalidInput("dataset " + a.data.string() + " has no samples");

  std::optional<Trainer> trainer;
  if (a.resume) {
    require_file(*a.resume, "checkpoint");
    auto ckpt = load_checkpoint(*a.resume);
    // A step limit is a property of one invocation, not of the run.
    ckpt.metadata["train.max_steps"] = std::to_string(a.max_steps.value_or(-1));
    trainer.emplace(Trainer::resume(ckpt, std::move(data)));
    spdlog::info("resumed at step {}", trainer->steps_done());
  } else {
    trainer.emplace(train_config_from(a), std::move(data));
  }
  const auto& cfg = trainer->config();
  spdlog::info("training {} steps ({} epochs x {} batches), lr {}, lambda {}, frequency loss {}",
               trainer->total_steps(), cfg.epochs, trainer->batches_per_epoch(), cfg.lr, cfg.lambda,
               cfg.frequency_loss ? "on" : "off");

  const fs::path log_path = a.log.value_or(sibling_with_suffix(a.out, ".loss.tsv"));
  const bool append = a.resume && fs::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write loss log " + log_path.string());
  if (!append) log << loss_log_header() << '\n';

  while (!trainer->finished()) {
    const auto r = trainer->step();
    log << format_loss_line(r) << '\n';
    if (r.step % 50 == 0 || trainer->finished())
      spdlog::info("step {} epoch {} lr {:.3g} l1 {:.6f} fre {:.6f} total {:.6f}", r.step, r.epoch, r.lr,
                   r.l1, r.fre, r.total);
  }
  log.flush();
  if (!log) throw IoError("failed writing loss log " + log_path.string());
  save_checkpoint(a.out, trainer->checkpoint());
  spdlog::info("wrote checkpoint {} and loss log {}", a.out.string(), log_path.string());
  return kExitOk;
}

struct EnhanceArgs {
  fs::path ckpt;
  fs::path left;
  fs::path right;
  fs::path out_left;
  fs::path out_right;
  std::optional<std::string> error_map_against;
};

int run_enhance(const EnhanceArgs& a) {
  require_file(a.ckpt, "checkpoint");
  require_file(a.left, "left image");
  require_file(a.right, "right image");
  std::optional<std::pair<fs::path, fs::path>> gt;
  if (a.error_map_against) {
    const auto comma = a.error_map_against->find(',');
    if (comma == std::string::npos) throw InvalidInput("--error-map-against expects GT_L,GT_R");
    gt.emplace(a.error_map_against->substr(0, comma), a.error_map_against->substr(comma + 1));
    require_file(gt->first, "left ground truth");
    require_file(gt->second, "right ground truth");
  }
  const auto model = load_model(load_checkpoint(a.ckpt));
  const auto out = enhance(model, read_image(a.left), read_image(a.right));
  write_image(a.out_left, out.left);
  write_image(a.out_right, out.right);
  if (gt) {
    // Scored against the written 8-bit images so the map matches the files.
    const auto l = quantize_to_bytes(out.left), r = quantize_to_bytes(out.right);
    const auto gl = read_image(gt->first), gr = read_image(gt->second);
    write_image(sibling_with_suffix(a.out_left, "_error.png"), error_map(l, gl));
    write_image(sibling_with_suffix(a.out_right, "_error.png"), error_map(r, gr));
    std::cout << "psnr_left=" << psnr(l, gl) << " psnr_right=" << psnr(r, gr) << '\n';
  }
  return kExitOk;
}

struct EvalArgs {
  fs::path ckpt;
  fs::path data;
  std::optional<fs::path> error_maps;
};

int run_eval(const EvalArgs& a) {
  require_file(a.ckpt, "checkpoint");
  require_dir(a.data, "dataset");
  const auto data = load_dataset(a.data);
  if (data.empty()) throw InvalidInput("dataset " + a.data.string() + " has no samples");
  const auto model = load_model(load_checkpoint(a.ckpt));
  if (a.error_maps) fs::create_directories(*a.error_maps);
  const auto report = evaluate(model, data, a.error_maps);
  std::cout << report.table() << report.summary() << '\n';
  return kExitOk;
}

struct GradcheckArgs {
  std::string module;
  std::optional<double> tol;
  std::uint64_t seed = 0;
};

int run_gradcheck(const GradcheckArgs& a) {
  const auto results = run_gradient_suite(a.module, a.tol, a.seed);
  int failures = 0;
  double worst = 0;
  for (const auto& r : results) {
    const auto& rep = r.report;
    worst = std::max(worst, rep.max_rel_error);
    std::printf("%s %-10s %-28s max_rel=%.3e tol=%.0e coords=%lld skipped=%lld %.2fs\n",
                rep.passed ? "PASS" : "FAIL", r.module.c_str(), r.name.c_str(), rep.max_rel_error, r.tol,
                static_cast<long long>(rep.coords_checked), static_cast<long long>(rep.coords_skipped),
                r.seconds);
    if (!rep.passed) {
      ++failures;
      if (!rep.failure.empty()) std::printf("  %s\n", rep.failure.c_str());
    }
  }
  std::printf("cases=%zu failures=%d max_rel=%.3e\n", results.size(), failures, worst);
  return failures == 0 ? kExitOk : kExitInvalid;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("sdinet");
  logger->set_pattern("[%H:%M:%S] [%^%l%$] %v");
  spdlog::set_default_logger(logger);
  spdlog::cfg::load_env_levels();  // SPDLOG_LEVEL=debug|info|warn|off
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"SDI-Net low-light stereo image enhancement"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Write a synthetic low-light stereo dataset");
  synth->add_option("--out", sa.out, "Output dataset directory")->required();
  synth->add_option("--count", sa.count, "Number of samples")->capture_default_str();
  synth->add_option("--size", sa.size, "Image size HxW")->capture_default_str();
  synth->add_option("--seed", sa.seed, "Seed of the first sample; sample i uses seed+i")->capture_default_str();
  synth->add_option("--disparity-max", sa.disparity_max, "Largest layer disparity in pixels, below width/8 (default min(6, that bound))");
  synth->add_option("--noise-sigma", sa.noise_sigma, "Fixed noise std-dev (default U[0, 0.01])");
  synth->add_option("--alpha", sa.alpha, "Fixed exposure scale (default U[0.2, 0.5])");
  synth->add_option("--gamma", sa.gamma, "Fixed gamma (default U[1, 1.5])");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint plus loss log");
  train->add_option("--data", ta.data, "Training dataset directory")->required();
  train->add_option("--out", ta.out, "Checkpoint path")->required();
  train->add_option("--log", ta.log, "Loss log path (default <out stem>.loss.tsv)");
  train->add_option("--resume", ta.resume, "Continue from a checkpoint; its config replaces every flag except --max-steps");
  train->add_option("--epochs", ta.epochs, "Epochs (default 700; 0 writes an init checkpoint)");
  train->add_option("--batch", ta.batch, "Batch size (default 2)");
  train->add_option("--lr", ta.lr, "Initial learning rate, halved every 100 epochs (default 1e-4)");
  train->add_option("--lambda", ta.lambda, "Frequency loss weight (default 0.1)");
  train->add_option("--variant", ta.variant, "full, v0, v1, v2 or v3 (default full)");
  train->add_option("--patch", ta.patch, "Random training crop HxW (default whole image)");
  train->add_option("--seed", ta.seed, "Seed for init, sample order and crops (default 0)");
  train->add_option("--clip-norm", ta.clip_norm, "Global gradient norm clip, 0 disables (default 0)");
  train->add_option("--max-steps", ta.max_steps, "Stop after this many steps (default: all epochs)");
  train->add_option("--preset", ta.preset,
                    "desk: C0=8, 2 FEBs, 2 residual blocks, batch 1; explicit flags still apply");

  EnhanceArgs ea;
  auto* enh = app.add_subcommand("enhance", "Enhance one stereo pair");
  enh->add_option("--ckpt", ea.ckpt, "Checkpoint path")->required();
  enh->add_option("--left", ea.left, "Low-light left image (PNG)")->required();
  enh->add_option("--right", ea.right, "Low-light right image (PNG)")->required();
  enh->add_option("--out-left", ea.out_left, "Enhanced left output (PNG)")->required();
  enh->add_option("--out-right", ea.out_right, "Enhanced right output (PNG)")->required();
  enh->add_option("--error-map-against", ea.error_map_against,
                  "GT_L,GT_R: also write <out stem>_error.png maps, darker = larger error");

  EvalArgs va;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  eval->add_option("--ckpt", va.ckpt, "Checkpoint path")->required();
  eval->add_option("--data", va.data, "Dataset directory")->required();
  eval->add_option("--emit-error-maps", va.error_maps, "Write <id>_left.png / <id>_right.png error maps here");

  GradcheckArgs ga;
  auto* grad = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  grad->add_option("--module", ga.module, "Only this module's cases (default all)");
  grad->add_option("--tol", ga.tol, "Override every case tolerance");
  grad->add_option("--seed", ga.seed, "Input seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*synth) return run_synth(sa);
    if (*train) return run_train(ta);
    if (*enh) return run_enhance(ea);
    if (*eval) return run_eval(va);
    if (*grad) return run_gradcheck(ga);
  } catch (const InvalidInput& e) {
    spdlog::error("{}", e.what());
    return kExitInvalid;
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitInvalid;
  } catch (const DimensionError& e) {
    spdlog::error("{}", e.what());
    return kExitInvalid;
  } catch (const DatasetError& e) {
    spdlog::error("{}", e.what());
    return kExitInvalid;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitInvalid;
}
