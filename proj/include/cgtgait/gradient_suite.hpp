#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cgtgait/grad_check.hpp"

namespace cgt {

struct GradSuiteEntry {
  std::string module;
  std::string name;
  GradCheckResult result;
  double tolerance = 0.0;
  bool passed() const { return result.max_relative_error < tolerance; }
};

/// Module names accepted by run_gradient_suite, besides "all".
const std::vector<std::string>& gradient_suite_modules();

/// Central-difference checks at eps 1e-5: every tensor operation on
/// `seeds` random draws (tolerance 1e-4), the graph layer, the transformer
/// layer, each block variant, the FR head and BCSF (1e-4), and the full
/// CGTGait loss on a 2-sample batch (1e-3). Throws std::invalid_argument on
/// an unknown module.
std::vector<GradSuiteEntry> run_gradient_suite(std::string_view module = "all", std::size_t seeds = 3);

}  // namespace cgt
