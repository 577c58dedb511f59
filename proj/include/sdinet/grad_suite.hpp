#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sdinet/grad_check.hpp"

namespace sdinet {

/// One registered finite-difference check in f64. `run` builds its own
/// randomized small inputs from `seed`.
struct GradCase {
  std::string module;
  std::string name;
  double tol = 1e-4;
  double eps = 1e-6;
  // Entries with |analytic| + |numeric| below this are judged on absolute
  // error; it sits above the finite-difference roundoff of the case.
  double abs_floor = 1e-6;
  std::function<GradCheckReport(const GradCheckOptions&, std::uint64_t seed)> run;
};

struct GradCaseResult {
  std::string module;
  std::string name;
  double tol = 0;
  GradCheckReport report;
  double seconds = 0;
};

/// Every layer and loss, plus the end-to-end model at a looser tolerance.
std::vector<GradCase> gradient_suite();

std::vector<std::string> gradient_suite_modules();

/// Runs the cases whose module matches `module` (all when empty). A set
/// `tol_override` replaces every case tolerance. Unknown modules raise
/// ConfigError.
std::vector<GradCaseResult> run_gradient_suite(const std::string& module = "",
                                               std::optional<double> tol_override = std::nullopt,
                                               std::uint64_t seed = 0);

}  // namespace sdinet
