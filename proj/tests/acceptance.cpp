// Acceptance runner: one PASS/FAIL line per criterion.
//   sdinet_acceptance              all criteria
//   sdinet_acceptance --criterion N  just criterion N
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <unistd.h>
#include <vector>

#include "fixtures.hpp"
#include "sdinet/checkpoint.hpp"
#include "sdinet/grad_suite.hpp"
#include "sdinet/losses.hpp"
#include "sdinet/metrics.hpp"
#include "sdinet/ops.hpp"
#include "sdinet/synth.hpp"
#include "sdinet/trainer.hpp"

using namespace sdinet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.values().data(), b.values().data(), a.values().size() * sizeof(T)) == 0;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite_criterion() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_gradient_suite();
  const double elapsed = seconds_since(t0);

  const std::set<std::string> required = {"conv2d",      "layer_norm",     "softmax",  "gelu",
                                          "channel_attention", "pixel_attention", "feb", "caim",
                                          "fft_loss",    "l1_loss",        "model"};
  std::set<std::string> seen;
  bool row_attention = false;
  int failures = 0;
  double worst_layer = 0, worst_model = 0;
  std::string first_failure;
  for (const auto& r : results) {
    seen.insert(r.module);
    if (r.module == "caim" && r.name.find("row") != std::string::npos) row_attention = true;
    const double limit = r.module == "model" ? 1e-3 : 1e-4;
    const bool ok = r.report.passed && r.tol <= limit;
    (r.module == "model" ? worst_model : worst_layer) =
        std::max(r.module == "model" ? worst_model : worst_layer, r.report.max_rel_error);
    if (!ok) {
      ++failures;
      if (first_failure.empty()) first_failure = r.module + "/" + r.name + ": " + r.report.failure;
    }
  }
  std::vector<std::string> missing;
  for (const auto& m : required)
    if (!seen.count(m)) missing.push_back(m);
  if (!row_attention) missing.push_back("caim row attention");

  Outcome o;
  o.pass = failures == 0 && missing.empty() && elapsed < 60.0;
  o.detail = fmt("%zu cases, %d failed, max rel err layers %.2e (< 1e-4) model %.2e (< 1e-3), %.1f s (< 60 s)",
                 results.size(), failures, worst_layer, worst_model, elapsed);
  for (const auto& m : missing) o.detail += "; missing " + m;
  if (!first_failure.empty()) o.detail += "; first failure " + first_failure;
  return o;
}

// ---------------------------------------------------------------------------

Outcome identity_at_init_criterion() {
  int checked = 0, mismatched = 0;
  for (int i = 0; i < 20; ++i) {
    auto cfg = i % 2 == 0 ? ModelConfig() : ModelConfig::desk();
    if (i % 4 == 3) cfg.attention = AttentionScope::Full;
    if (i % 5 == 4) cfg.cross_value = true;
    SdiNet<float> net(ModelConfig::for_variant(Variant::Full, cfg));
    net.init(1000 + static_cast<std::uint64_t>(i));
    const std::int64_t size = 16 + 16 * (i % 3);
    const auto l = fixtures::random_tensor<float>({1 + i % 2, 3, size, size}, 2 * i, 0, 1);
    const auto r = fixtures::random_tensor<float>({1 + i % 2, 3, size, size}, 2 * i + 1, 0, 1);
    const auto fl = net.encode(l).feature, fr = net.encode(r).feature;
    const auto out = net.interact(fl, fr);
    ++checked;
    if (!bitwise_equal(out.left, fl) || !bitwise_equal(out.right, fr)) ++mismatched;
  }
  return {mismatched == 0, fmt("%d random inputs through CAIM + PCAB with zero gates, %d not bit-identical",
                               checked, mismatched)};
}

// ---------------------------------------------------------------------------

Outcome metric_oracle_criterion() {
  const auto pairs = fixtures::metric_pairs();
  double worst_psnr = 0, worst_ssim = 0;
  bool names_match = pairs.size() == std::size(fixtures::kFrozenMetrics);
  for (std::size_t i = 0; names_match && i < pairs.size(); ++i) {
    const auto& want = fixtures::kFrozenMetrics[i];
    names_match = pairs[i].name == want.name;
    worst_psnr = std::max(worst_psnr, std::abs(psnr(pairs[i].pred, pairs[i].gt) - want.psnr));
    worst_ssim = std::max(worst_ssim, std::abs(ssim(pairs[i].pred, pairs[i].gt) - want.ssim));
  }
  const double offset = psnr(pairs[0].pred, pairs[0].gt);
  Outcome o;
  o.pass = names_match && pairs.size() == 8 && worst_psnr <= 1e-6 && worst_ssim <= 1e-4 &&
           std::abs(offset - 20.0) <= 1e-6;
  o.detail = fmt("%zu fixture pairs, max |dPSNR| %.2e dB (<= 1e-6), max |dSSIM| %.2e (<= 1e-4), "
                 "constant offset 0.1 -> %.9f dB",
                 pairs.size(), worst_psnr, worst_ssim, offset);
  return o;
}

// ---------------------------------------------------------------------------

// Direct double loop over the definition, one plane at a time.
void naive_dft(const std::vector<double>& x, std::int64_t h, std::int64_t w, std::vector<double>& re,
               std::vector<double>& im) {
  const double pi = std::acos(-1.0);
  const auto planes = static_cast<std::int64_t>(x.size()) / (h * w);
  re.assign(x.size(), 0.0);
  im.assign(x.size(), 0.0);
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t u = 0; u < h; ++u)
      for (std::int64_t v = 0; v < w; ++v) {
        std::complex<double> acc = 0;
        for (std::int64_t y = 0; y < h; ++y)
          for (std::int64_t xx = 0; xx < w; ++xx) {
            const double angle = -2.0 * pi * (double(u * y) / double(h) + double(v * xx) / double(w));
            acc += x[(p * h + y) * w + xx] * std::polar(1.0, angle);
          }
        re[(p * h + u) * w + v] = acc.real();
        im[(p * h + u) * w + v] = acc.imag();
      }
}

Outcome fft_criterion() {
  double worst = 0;
  int inputs = 0;
  bool zero_exact = true;
  for (std::int64_t n : {4, 8})
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto x = fixtures::random_tensor<double>({2, 3, n, n}, 100 * n + seed, -1, 1);
      const auto [re, im] = ops::fft2_per_channel(x);
      std::vector<double> want_re, want_im;
      naive_dft(x.values(), n, n, want_re, want_im);
      for (std::size_t i = 0; i < want_re.size(); ++i) {
        worst = std::max(worst, std::abs(re.values()[i] - want_re[i]));
        worst = std::max(worst, std::abs(im.values()[i] - want_im[i]));
      }
      ++inputs;
      zero_exact = zero_exact && fft_loss(x, x).item() == 0.0;
      const auto xf = fixtures::random_tensor<float>({1, 3, n, n}, 7 * n + seed, 0, 1);
      zero_exact = zero_exact && fft_loss(xf, xf).item() == 0.0f;
    }
  return {worst <= 1e-9 && zero_exact,
          fmt("%d random 4x4 / 8x8 inputs, max |fast - naive| %.2e (<= 1e-9), fft_loss(x,x) == 0 %s", inputs,
              worst, zero_exact ? "exactly" : "VIOLATED")};
}

// ---------------------------------------------------------------------------

constexpr std::int64_t kOverfitSteps = 500;

struct OverfitRun {
  std::vector<LossRecord> log;
  double psnr_left = 0;
  double psnr_right = 0;
  double seconds = 0;
};

StereoSample overfit_sample() {
  SynthConfig c;
  c.seed = 0;
  c.height = c.width = 64;
  return synth_generate(c, "overfit");
}

// Desk model, one 64x64 sample, batch 1, Adam(0.5, 0.999), lr 1e-4, lambda 0.1.
// The step schedule counts 100 steps per epoch so the rate stays 1e-4 here.
TrainConfig overfit_config(Variant v) {
  auto t = TrainConfig::for_variant(v, TrainConfig::desk());
  t.epochs = kOverfitSteps;
  t.lr = 1e-4;
  t.lambda = 0.1;
  t.schedule_steps_per_epoch = 100;
  t.seed = 0;
  return t;
}

OverfitRun overfit(Variant v) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto sample = overfit_sample();
  Trainer trainer(overfit_config(v), {sample});
  OverfitRun run;
  run.log = trainer.train();
  const auto report = evaluate(trainer.model(), {sample});
  run.psnr_left = report.mean.psnr_left;
  run.psnr_right = report.mean.psnr_right;
  run.seconds = seconds_since(t0);
  return run;
}

std::vector<double> window_means(const std::vector<LossRecord>& log, std::size_t window) {
  std::vector<double> out;
  for (std::size_t start = 0; start + window <= log.size(); start += window) {
    double s = 0;
    for (std::size_t i = start; i < start + window; ++i) s += log[i].total;
    out.push_back(s / double(window));
  }
  return out;
}

std::map<Variant, OverfitRun>& overfit_cache() {
  static std::map<Variant, OverfitRun> cache;
  return cache;
}

const OverfitRun& cached_overfit(Variant v) {
  auto& cache = overfit_cache();
  auto it = cache.find(v);
  if (it == cache.end()) it = cache.emplace(v, overfit(v)).first;
  return it->second;
}

Outcome overfit_criterion() {
  const auto& run = cached_overfit(Variant::Full);
  const auto windows = window_means(run.log, 50);
  bool monotone = windows.size() == kOverfitSteps / 50;
  int rises = 0;
  for (std::size_t i = 1; i < windows.size(); ++i)
    if (windows[i] > windows[i - 1]) {
      monotone = false;
      ++rises;
    }
  const bool quality = run.psnr_left >= 30.0 && run.psnr_right >= 30.0;
  Outcome o;
  o.pass = quality && monotone && run.log.size() == kOverfitSteps && run.seconds < 600.0;
  o.detail = fmt("%zu steps in %.1f s (< 600 s); PSNR left %.2f dB right %.2f dB (>= 30); "
                 "50-step window means %.5f -> %.5f with %d rises",
                 run.log.size(), run.seconds, run.psnr_left, run.psnr_right, windows.front(), windows.back(),
                 rises);
  return o;
}

// ---------------------------------------------------------------------------

Outcome ablation_criterion() {
  const double full = cached_overfit(Variant::Full).log.back().total;
  bool pass = true;
  std::string detail = fmt("final total loss full %.6f", full);
  std::vector<std::string> ties;
  for (Variant v : {Variant::V0, Variant::V1, Variant::V2}) {
    const double other = cached_overfit(v).log.back().total;
    detail += fmt(", %s %.6f", to_string(v).c_str(), other);
    if (full > other) {
      if (full <= 1.05 * other) ties.push_back(to_string(v) + fmt(" (+%.2f%%)", 100.0 * (full / other - 1.0)));
      else pass = false;
    }
  }
  if (!ties.empty()) {
    detail += "; ties within 5%:";
    for (const auto& t : ties) detail += " " + t;
  }
  return {pass, detail};
}

// ---------------------------------------------------------------------------

std::vector<float> param_values(const SdiNet<float>& m) {
  std::vector<float> v;
  for (const auto& p : m.params()) v.insert(v.end(), p.tensor.values().begin(), p.tensor.values().end());
  return v;
}

Outcome determinism_criterion() {
  std::vector<StereoSample> data;
  for (std::uint64_t i = 0; i < 3; ++i) {
    SynthConfig c;
    c.seed = 40 + i;
    c.height = c.width = 32;
    c.disparity_max = 3;
    data.push_back(synth_generate(c, "d" + std::to_string(i)));
  }
  auto cfg = TrainConfig::desk();
  cfg.epochs = 4;
  cfg.batch_size = 2;
  cfg.patch_h = cfg.patch_w = 16;
  cfg.lr = 1e-3;
  cfg.seed = 9;
  const std::int64_t n = 4;  // half of the 8-step schedule

  Trainer a(cfg, data), b(cfg, data);
  const auto log_a = a.run(2 * n), log_b = b.run(2 * n);
  const bool same_logs = log_a == log_b && log_a.size() == std::size_t(2 * n);

  Trainer first(cfg, data);
  auto log_r = first.run(n);
  const auto path =
      fs::temp_directory_path() / ("sdinet_acceptance_" + std::to_string(::getpid()) + ".ckpt");
  save_checkpoint(path, first.checkpoint());
  Trainer second = Trainer::resume(load_checkpoint(path), data);
  fs::remove(path);
  const auto rest = second.run(n);
  log_r.insert(log_r.end(), rest.begin(), rest.end());

  const bool same_resume_log = log_r == log_a;
  const bool same_params = param_values(second.model()) == param_values(a.model());
  const bool same_ckpt = serialize_checkpoint(second.checkpoint()) == serialize_checkpoint(a.checkpoint());
  return {same_logs && same_resume_log && same_params && same_ckpt,
          fmt("same-seed loss logs identical: %s; %lld+%lld resumed vs %lld straight: log %s, parameters %s, "
              "full checkpoint bytes %s",
              same_logs ? "yes" : "NO", (long long)n, (long long)n, (long long)(2 * n),
              same_resume_log ? "identical" : "DIFFER", same_params ? "bitwise equal" : "DIFFER",
              same_ckpt ? "equal" : "DIFFER")};
}

// ---------------------------------------------------------------------------

Outcome shape_range_criterion() {
  int runs = 0, bad = 0;
  std::string first_bad;
  for (Variant v : {Variant::Full, Variant::V0, Variant::V1, Variant::V2, Variant::V3}) {
    SdiNet<float> net(ModelConfig::for_variant(v));
    net.init(77);
    for (std::int64_t h : {16, 32, 64})
      for (std::int64_t w : {16, 32, 64}) {
        const auto l = fixtures::random_tensor<float>({2, 3, h, w}, runs, 0, 1);
        const auto r = fixtures::random_tensor<float>({2, 3, h, w}, runs + 500, 0, 1);
        const auto out = net.forward(l, r);
        ++runs;
        bool ok = out.left.shape() == Shape{2, 3, h, w} && out.right.shape() == Shape{2, 3, h, w};
        for (const auto* t : {&out.left, &out.right})
          for (float x : t->values()) ok = ok && std::isfinite(x) && x >= 0.0f && x <= 1.0f;
        if (!ok) {
          ++bad;
          if (first_bad.empty()) first_bad = to_string(v) + fmt(" %lldx%lld", (long long)h, (long long)w);
        }
      }
  }
  std::string detail = fmt("%d forwards (5 variants x H,W in {16,32,64}, N=2), %d violate [N,3,H,W] / [0,1] / "
                           "finite",
                           runs, bad);
  if (!first_bad.empty()) detail += "; first " + first_bad;
  return {bad == 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite_criterion},
      {"identity at init", identity_at_init_criterion},
      {"metric oracles", metric_oracle_criterion},
      {"fft correctness", fft_criterion},
      {"overfit run", overfit_criterion},
      {"ablation ordering", ablation_criterion},
      {"determinism and resume", determinism_criterion},
      {"shape and range contract", shape_range_criterion},
  };

  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      selected.push_back(std::atoi(argv[++i]));
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N]...\n", argv[0]);
      return 2;
    }
  }
  if (selected.empty())
    for (int i = 1; i <= int(criteria.size()); ++i) selected.push_back(i);

  int failed = 0;
  for (int id : selected) {
    if (id < 1 || id > int(criteria.size())) {
      std::fprintf(stderr, "no criterion %d\n", id);
      return 2;
    }
    const auto& [title, check] = criteria[std::size_t(id - 1)];
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
