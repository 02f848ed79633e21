#include "cgtgait/parameter.hpp"

#include <cmath>

namespace cgt {

Tensor ParameterRegistry::add(const std::string& name, Shape shape, InitScheme init,
                              std::size_t fan_in) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor t(std::move(shape), 0.0, true);
  switch (init) {
    case InitScheme::kZeros:
      break;
    case InitScheme::kOnes:
      for (auto& v : t.mutable_data()) v = 1.0;
      break;
    case InitScheme::kUniformFanIn: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : t.mutable_data()) v = dist(rng_);
      break;
    }
  }
  index_.emplace(name, params_.size());
  params_.push_back({name, t, init});
  return t;
}

const Parameter* ParameterRegistry::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

Parameter& ParameterRegistry::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second];
}

std::size_t ParameterRegistry::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParameterRegistry::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace cgt
