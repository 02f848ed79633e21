#pragma once

#include <string>
#include <utility>

#include "cgtgait/ops.hpp"
#include "cgtgait/parameter.hpp"

namespace cgt {

struct FusionToggles {
  bool temporal = true;
  bool spatial = true;
};

/// One direction of the cross-stream fusion: stream `a` queries stream `b`.
class CrossFusion {
 public:
  CrossFusion() = default;
  /// Only the parts enabled in `toggles` are registered.
  CrossFusion(ParameterRegistry& registry, const std::string& prefix, std::size_t channels, std::size_t joints,
              std::size_t heads, FusionToggles toggles = {});

  /// f_a, f_b: [B, C, T, N]. Per-joint cross-attention over time followed by
  /// LN-residual, FFN, LN-residual, and the outer residual + f_a.
  Tensor temporal(const Tensor& f_a, const Tensor& f_b) const;
  /// Per-joint weights in (0, 1), [B, N], from the (C, T) average of f.
  Tensor joint_weights(const Tensor& f) const;
  /// f_self + f_other * joint_weights(f_other).
  Tensor spatial(const Tensor& f_self, const Tensor& f_other) const;

  std::size_t heads() const { return heads_; }

  Tensor wq, wk, wv, wo, bo;
  Tensor ln1_g, ln1_b, ffn_w1, ffn_b1, ffn_w2, ffn_b2, ln2_g, ln2_b;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;  // [N, N] hidden N

 private:
  std::size_t heads_ = 1;
};

/// Bidirectional cross-stream fusion. Returns (f_pm, f_mp) with the input shape.
class BCSF {
 public:
  BCSF() = default;
  BCSF(ParameterRegistry& registry, const std::string& prefix, std::size_t channels, std::size_t joints,
       std::size_t heads, FusionToggles toggles = {});

  std::pair<Tensor, Tensor> forward(const Tensor& f_p, const Tensor& f_m) const;

  const FusionToggles& toggles() const { return toggles_; }

  CrossFusion posture;  // posture queries motion
  CrossFusion motion;   // motion queries posture

 private:
  FusionToggles toggles_;
};

}  // namespace cgt
