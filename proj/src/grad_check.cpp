#include "cgtgait/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace cgt {

namespace {

double evaluate(const std::function<Tensor()>& loss) {
  NoGradGuard guard;
  const double v = loss().item();
  if (!std::isfinite(v)) throw std::runtime_error("grad_check: loss is not finite");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()>& loss, const std::vector<Parameter>& params,
                           const GradCheckOptions& options) {
  if (options.eps < 1e-6 || options.eps > 1e-4) {
    throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-4]");
  }
  for (const auto& p : params) p.tensor.node()->grad.clear();
  Tensor value = loss();
  if (!std::isfinite(value.item())) throw std::runtime_error("grad_check: loss is not finite");
  value.backward();
  const double floor = 1e-8 + std::abs(value.item()) * options.loss_scaled_floor;

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  result.loss = value.item();
  for (const auto& p : params) {
    Tensor t = p.tensor;
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    std::vector<std::size_t> entries(t.numel());
    std::iota(entries.begin(), entries.end(), 0);
    if (entries.size() > options.samples_per_parameter) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.samples_per_parameter);
    }
    for (std::size_t idx : entries) {
      double& slot = t.mutable_data()[idx];
      const double saved = slot;
      slot = saved + options.eps;
      const double up = evaluate(loss);
      slot = saved - options.eps;
      const double down = evaluate(loss);
      slot = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double denom = std::max({std::abs(analytic[idx]), std::abs(numeric), floor});
      const double rel = std::abs(analytic[idx] - numeric) / denom;
      ++result.entries_checked;
      if (rel > result.max_relative_error || result.worst_parameter.empty()) {
        result.max_relative_error = std::max(rel, result.max_relative_error);
        result.worst_parameter = p.name;
        result.worst_index = idx;
        result.worst_analytic = analytic[idx];
        result.worst_numeric = numeric;
      }
    }
    t.zero_grad();
  }
  return result;
}

void jitter_zero_initialised(std::vector<Parameter>& params, double amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-amplitude, amplitude);
  for (auto& p : params) {
    if (p.init != InitScheme::kZeros) continue;
    for (double& x : p.tensor.mutable_data()) x = dist(rng);
  }
}

}  // namespace cgt
