#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "cgtgait/tensor.hpp"

namespace cgt {

enum class InitScheme { kZeros, kUniformFanIn, kOnes };

struct Parameter {
  std::string name;
  Tensor tensor;
  InitScheme init = InitScheme::kUniformFanIn;
};

/// Owns every learnable tensor of a model under a unique name. Values are
/// initialized at registration time from the registry's seeded generator, so
/// construction order fully determines the initial state.
class ParameterRegistry {
 public:
  explicit ParameterRegistry(std::uint64_t seed = 0) : rng_(seed) {}

  /// Registers and initializes a parameter. Uniform fan-in draws from
  /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)). Throws on a duplicate name.
  Tensor add(const std::string& name, Shape shape, InitScheme init, std::size_t fan_in = 1);

  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter>& parameters() { return params_; }
  const Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name);

  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::mt19937_64 rng_;
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace cgt
