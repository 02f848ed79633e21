#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cgtgait/affective.hpp"
#include "cgtgait/bcsf.hpp"
#include "cgtgait/graph_conv.hpp"
#include "cgtgait/skeleton.hpp"
#include "cgtgait/transformer.hpp"
#include "json.hpp"

namespace cgt {

/// Fixed per-channel standardisation of the raw inputs, (x - mean) / std.
/// Empty vectors leave a stream untouched.
struct InputNorm {
  std::vector<double> posture_mean, posture_std, motion_mean, motion_std;
  bool empty() const { return posture_mean.empty() && motion_mean.empty(); }
};

struct ModelConfig {
  /// Posture-stream plan; the motion stream uses the same plan with
  /// `motion_channels` inputs to its first block.
  std::vector<BlockSpec> blocks = block_plan(64, 4);
  std::size_t motion_channels = kMotionChannels;
  std::size_t frames = kModelFrames;
  std::size_t heads = 8;
  bool positional = true;
  BlockOrder order = BlockOrder::kGraphFirst;
  TemporalKind temporal = TemporalKind::kTransformer;
  std::size_t tcn_kernel = 9;
  bool bcsf = true;
  std::size_t bcsf_position = 2;  // after this block (1-based), clamped to the block count
  FusionToggles fusion;
  std::vector<double> lambda = {0.1, 0.2, 0.5, 1.0};
  bool affective_head = true;
  FRConfig fr;
  InputNorm input_norm;

  /// (3,w),(w,w),(w,2w),(2w,4w) with strides 1,1,2,2 for four blocks; three
  /// blocks drop the second, five and six append (4w,4w) blocks at stride 1.
  static std::vector<BlockSpec> block_plan(std::size_t width, std::size_t count);
  static ModelConfig full();
  /// TCN-9 temporal modelling, no BCSF.
  static ModelConfig baseline(const ModelConfig& base);

  std::size_t effective_bcsf_position() const;
  /// λ for block i; missing entries repeat the last one.
  double lambda_at(std::size_t block) const;
  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Per-channel mean and standard deviation over every frame and joint of the
/// sequences (resampled to `frames`); std is floored at 1e-6.
InputNorm fit_input_norm(std::span<const SkeletonSequence> sequences);

/// Network inputs for one batch, built from sequences of equal length.
struct Batch {
  Tensor posture;             // [B, 3, T, 16]
  Tensor motion;              // [B, 8, T, 16]
  std::vector<int> labels;
  Tensor affective;           // [B, 31]
};

/// Packs sequences (already resampled) into network inputs. When `rng` is
/// given each sequence is augmented first. The affective targets come from
/// `targets` when supplied, otherwise from the (augmented) sequences.
Batch make_batch(std::span<const SkeletonSequence> sequences, std::mt19937_64* rng = nullptr,
                 std::span<const AffectiveVector> targets = {});

struct ForwardOutput {
  Tensor logits_p, logits_m;  // [B, 4]
  Tensor prob_p, prob_m;
  Tensor affective;           // [B, 31], undefined when the head is disabled
  std::vector<Tensor> embed_p, embed_m;  // per block FR embeddings [B, 64]
  Tensor feature_p, feature_m;           // final stream features
};

struct LossResult {
  Tensor total, ce, mse, fr;
  std::vector<Tensor> next_prototypes_p, next_prototypes_m;
};

class CGTGait {
 public:
  explicit CGTGait(ModelConfig config, std::uint64_t seed = 0);
  CGTGait(const CGTGait&) = delete;
  CGTGait& operator=(const CGTGait&) = delete;

  ForwardOutput forward(const Tensor& posture, const Tensor& motion) const;
  ForwardOutput forward(const Batch& batch) const { return forward(batch.posture, batch.motion); }

  /// L_CE + L_MSE + Σ_i λ_i (L_CL^p_i + L_CL^m_i). Prototype updates are
  /// returned, not applied.
  LossResult loss(const ForwardOutput& out, const std::vector<int>& labels, const Tensor& targets) const;
  LossResult loss(const ForwardOutput& out, const std::vector<int>& labels, const Tensor& targets,
                  const std::vector<double>& lambda) const;
  void commit_prototypes(const LossResult& result);

  const ModelConfig& config() const { return config_; }
  ParameterRegistry& registry() { return registry_; }
  const ParameterRegistry& registry() const { return registry_; }
  std::uint64_t seed() const { return seed_; }

  std::vector<Tensor> prototypes_p, prototypes_m;  // per block [4, 64]

  const std::vector<CGTBlock>& posture_blocks() const { return posture_; }
  const std::vector<CGTBlock>& motion_blocks() const { return motion_; }
  const BCSF* fusion() const { return bcsf_ ? &*bcsf_ : nullptr; }

 private:
  ModelConfig config_;
  std::uint64_t seed_;
  ParameterRegistry registry_;
  std::vector<CGTBlock> posture_, motion_;
  std::optional<BCSF> bcsf_;
  std::vector<FRHead> fr_p_, fr_m_;
  Tensor cls_p_w_, cls_p_b_, cls_m_w_, cls_m_b_, aff_w_, aff_b_;
};

/// argmax of (p + m) / 2 per row; ties go to the lowest class index.
std::vector<int> predict(const Tensor& prob_p, const Tensor& prob_m);
inline std::vector<int> predict(const ForwardOutput& out) { return predict(out.prob_p, out.prob_m); }

std::string_view to_string(BlockOrder order);
std::string_view to_string(TemporalKind kind);
BlockOrder parse_block_order(std::string_view name);
TemporalKind parse_temporal_kind(std::string_view name);

}  // namespace cgt
