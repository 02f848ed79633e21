#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgtgait/network.hpp"
#include "json.hpp"

namespace cgt {

/// Per-sample cost of one layer. One multiply-accumulate counts as one FLOP;
/// `elementwise` is one FLOP per output element of bias adds, activations,
/// residual and positional adds, and two per layer-norm element.
struct LayerCost {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  std::uint64_t elementwise = 0;
  bool training_only = false;  // FR heads
};

struct ComplexityReport {
  std::vector<LayerCost> layers;
  std::uint64_t params = 0;            // every registered scalar
  std::uint64_t inference_params = 0;  // without the FR heads
  std::uint64_t macs = 0;              // inference, per sample
  std::uint64_t elementwise = 0;
  std::uint64_t training_macs = 0;     // FR heads only

  /// Headline figure: inference MACs plus elementwise terms.
  std::uint64_t flops() const { return macs + elementwise; }

  nlohmann::json to_json() const;
  /// Aligned per-layer table followed by the totals.
  std::string to_text() const;
};

inline constexpr const char* kFlopConvention =
    "1 multiply-accumulate = 1 FLOP; elementwise terms add 1 FLOP per output element "
    "(2 per layer-norm element); attention softmax not counted; per input sample";

/// Analytic count for one input sample (3 x frames x 16 posture, motion alike).
ComplexityReport count_complexity(const ModelConfig& config);

}  // namespace cgt
