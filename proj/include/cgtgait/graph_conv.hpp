#pragma once

#include <array>
#include <string>

#include "cgtgait/ops.hpp"
#include "cgtgait/parameter.hpp"
#include "cgtgait/skeleton.hpp"

namespace cgt {

inline constexpr std::size_t kSubsets = 3;

using AdjacencyArray = std::array<Tensor, kSubsets>;

/// Identity, centripetal (i -> neighbour j nearer the root) and centrifugal
/// partitions, each scaled as D^-1/2 A D^-1/2 where D holds the tree degree
/// (the identity partition is left as I). Throws when the topology is not a
/// connected tree.
AdjacencyArray build_physical_adjacency(const SkeletonTopology& topology);

/// Binary supports of the three partitions before normalization.
AdjacencyArray physical_partitions(const SkeletonTopology& topology);

/// Embedding width used by the adaptive branch.
inline std::size_t embed_channels(std::size_t c_in) { return std::max<std::size_t>(c_in / 4, 8); }

/// Spatial graph convolution over [B, C_in, T, N]:
///   sum_k Conv_k(f ⊗ (A_k + B_k + C_k)) + Conv(f)
/// with f ⊗ M mixing joints as out_j = sum_i f_i M[i, j].
class GraphLayer {
 public:
  GraphLayer() = default;
  GraphLayer(ParameterRegistry& registry, const std::string& prefix, std::size_t c_in, std::size_t c_out,
             AdjacencyArray physical, bool adaptive = true);

  /// Per-subset row-softmaxed similarity, each [B, N, N].
  AdjacencyArray adaptive_adjacency(const Tensor& f) const;

  Tensor forward(const Tensor& f) const;
  /// Uses the given C_k; undefined entries contribute nothing.
  Tensor forward_with(const Tensor& f, const AdjacencyArray& c) const;

  std::size_t c_in() const { return c_in_; }
  std::size_t c_out() const { return c_out_; }
  bool adaptive() const { return adaptive_; }

  AdjacencyArray a;  // constants [N, N]
  AdjacencyArray b;  // learnable [N, N], zero at start
  // phi carries no bias: it would add a per-row constant that the row softmax removes.
  std::array<Tensor, kSubsets> theta_w, theta_b, phi_w;  // [C_e, C_in], [C_e]
  std::array<Tensor, kSubsets> subset_w, subset_b;               // [C_out, C_in], [C_out]
  Tensor residual_w, residual_b;

 private:
  std::size_t c_in_ = 0, c_out_ = 0;
  bool adaptive_ = true;
};

}  // namespace cgt
