#pragma once

#include <array>
#include <string>
#include <vector>

#include "cgtgait/graph_conv.hpp"
#include "cgtgait/ops.hpp"
#include "cgtgait/parameter.hpp"

namespace cgt {

/// Per-joint temporal transformer over [B, C, T, N]: optional learnable
/// positional embedding, post-norm MHSA and FFN (C -> 2C -> C, ReLU), then a
/// strided 1x1 convolution.
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(ParameterRegistry& registry, const std::string& prefix, std::size_t channels,
                   std::size_t frames, std::size_t heads, std::size_t stride, bool positional = true);

  /// x: [..., T, C] token layout. Returns W_O-projected multi-head attention.
  Tensor mhsa(const Tensor& x) const;
  /// Everything up to (not including) the strided conv, in [B, N, T, C] layout.
  Tensor encode(const Tensor& tokens) const;
  Tensor forward(const Tensor& f) const;

  std::size_t channels() const { return channels_; }
  std::size_t heads() const { return heads_; }
  std::size_t stride() const { return stride_; }
  std::size_t frames() const { return frames_; }
  bool positional() const { return positional_; }

  Tensor wq, wk, wv, wo, bo;  // linear layout [in, out]
  Tensor ln1_g, ln1_b, ffn_w1, ffn_b1, ffn_w2, ffn_b2, ln2_g, ln2_b;
  Tensor pos;  // [T, C], undefined when disabled
  Tensor down_w, down_b;

 private:
  std::size_t channels_ = 0, frames_ = 0, heads_ = 1, stride_ = 1;
  bool positional_ = true;
};

enum class BlockOrder { kGraphFirst, kTransformerFirst, kParallel };
enum class TemporalKind { kTransformer, kTcn };

struct BlockSpec {
  std::size_t c_in = 3, c_out = 64, stride = 1;
};

struct BlockOptions {
  BlockOrder order = BlockOrder::kGraphFirst;
  TemporalKind temporal = TemporalKind::kTransformer;
  std::size_t heads = 8;
  bool positional = true;
  std::size_t tcn_kernel = 9;
};

/// f_out = T(G(f)) + Conv(f) and its ablation variants:
///   transformer-first: G(T(lift(f))) + Conv(f)
///   parallel:          T(lift(f)) + stride(G(f)) + Conv(f)
///   TCN:               TempConv(ReLU(G(f))) + Conv(f)
/// `lift` is a 1x1 map C_in -> C_out, present only when the widths differ.
class CGTBlock {
 public:
  CGTBlock() = default;
  CGTBlock(ParameterRegistry& registry, const std::string& prefix, const BlockSpec& spec, std::size_t frames,
           const AdjacencyArray& physical, const BlockOptions& options);

  Tensor forward(const Tensor& f) const;
  /// The non-residual branch alone.
  Tensor main_branch(const Tensor& f) const;
  Tensor residual(const Tensor& f) const;

  const BlockSpec& spec() const { return spec_; }
  const BlockOptions& options() const { return options_; }
  std::size_t in_frames() const { return frames_; }
  std::size_t out_frames() const { return (frames_ + spec_.stride - 1) / spec_.stride; }

  GraphLayer graph;
  TransformerLayer transformer;  // unused for TCN blocks
  Tensor tcn_w, tcn_b;            // TCN blocks only
  Tensor lift_w, lift_b;          // undefined unless needed
  Tensor res_w, res_b;

 private:
  Tensor lift(const Tensor& f) const;

  BlockSpec spec_;
  BlockOptions options_;
  std::size_t frames_ = 0;
};

inline constexpr std::size_t kFREmbed = 64;

struct FRConfig {
  double threshold = 0.8;
  double momentum = 0.9;
  double temperature = 0.1;
};

/// Pools [B, C, T, N] over (T, N), projects to 64-d and L2-normalizes.
class FRHead {
 public:
  FRHead() = default;
  FRHead(ParameterRegistry& registry, const std::string& prefix, std::size_t channels);

  Tensor embed(const Tensor& f) const;

  Tensor proj_w, proj_b;
};

struct FRResult {
  Tensor loss;                 // scalar, differentiable w.r.t. z
  Tensor prototypes;           // [4, 64] after the gated EMA update
  std::array<bool, kClasses> updated{};
};

/// InfoNCE of unit embeddings z [B, 64] against the current (pre-update)
/// class prototypes [4, 64] with cosine similarity; zero prototypes score 0.
/// Samples with confidence > threshold move their class prototype to
/// normalize(m * proto + (1 - m) * mean z).
FRResult fr_contrastive(const Tensor& z, const std::vector<int>& labels, const std::vector<double>& confidences,
                        const Tensor& prototypes, const FRConfig& config = {});

/// L2-normalizes every row of a [B, D] tensor.
Tensor normalize_rows(const Tensor& x);

}  // namespace cgt
