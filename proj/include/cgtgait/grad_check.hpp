#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cgtgait/parameter.hpp"

namespace cgt {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Entries checked per parameter; tensors at or below this size are checked exhaustively.
  std::size_t samples_per_parameter = 10;
  std::uint64_t seed = 0;
  /// Adds |loss| * loss_scaled_floor to the 1e-8 denominator floor. Central
  /// differences of a loss of magnitude L carry roundoff near L * 1e-16 / eps,
  /// so gradients far below L * 1e-6 cannot be resolved to 1e-3 in double.
  double loss_scaled_floor = 0.0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  double loss = 0.0;
};

/// Compares reverse-mode gradients of the scalar `loss` against central
/// differences (f(θ+ε) − f(θ−ε)) / 2ε. Relative error uses the denominator
/// max(|analytic|, |numeric|, floor). `loss` must be a pure function of the
/// parameter values.
GradCheckResult grad_check(const std::function<Tensor()>& loss, const std::vector<Parameter>& params,
                           const GradCheckOptions& options = {});

/// Redraws every zero-initialised parameter uniformly in ±amplitude. At the
/// all-zero-bias starting point whole rows of ReLU inputs sit exactly on the
/// kink (zero motion features at frame 0), where the loss has no gradient to
/// check against.
void jitter_zero_initialised(std::vector<Parameter>& params, double amplitude, std::uint64_t seed);

}  // namespace cgt
