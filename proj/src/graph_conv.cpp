#include "cgtgait/graph_conv.hpp"

#include <cmath>

namespace cgt {

AdjacencyArray physical_partitions(const SkeletonTopology& topology) {
  topology.validate();
  const std::size_t n = topology.joint_count();
  const auto depth = topology.depths();
  std::vector<double> eye(n * n, 0.0), in(n * n, 0.0), out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0;
  for (auto [u, v] : topology.edges) {
    const std::size_t child = depth[u] > depth[v] ? u : v;
    const std::size_t parent = child == u ? v : u;
    in[child * n + parent] = 1.0;
    out[parent * n + child] = 1.0;
  }
  return {Tensor({n, n}, std::move(eye)), Tensor({n, n}, std::move(in)), Tensor({n, n}, std::move(out))};
}

AdjacencyArray build_physical_adjacency(const SkeletonTopology& topology) {
  auto parts = physical_partitions(topology);
  const std::size_t n = topology.joint_count();
  std::vector<double> degree(n, 0.0);
  for (auto [u, v] : topology.edges) {
    degree[u] += 1.0;
    degree[v] += 1.0;
  }
  for (std::size_t k = 1; k < kSubsets; ++k) {
    auto m = parts[k].mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) m[i * n + j] /= std::sqrt(degree[i] * degree[j]);
    }
  }
  return parts;
}

GraphLayer::GraphLayer(ParameterRegistry& registry, const std::string& prefix, std::size_t c_in,
                       std::size_t c_out, AdjacencyArray physical, bool adaptive)
    : a(std::move(physical)), c_in_(c_in), c_out_(c_out), adaptive_(adaptive) {
  const std::size_t n = a[0].dim(0);
  const std::size_t ce = embed_channels(c_in);
  for (std::size_t k = 0; k < kSubsets; ++k) {
    const std::string p = prefix + ".k" + std::to_string(k);
    b[k] = registry.add(p + ".B", {n, n}, InitScheme::kZeros);
    if (adaptive_) {
      theta_w[k] = registry.add(p + ".theta.w", {ce, c_in}, InitScheme::kUniformFanIn, c_in);
      theta_b[k] = registry.add(p + ".theta.b", {ce}, InitScheme::kZeros);
      phi_w[k] = registry.add(p + ".phi.w", {ce, c_in}, InitScheme::kUniformFanIn, c_in);
    }
    subset_w[k] = registry.add(p + ".conv.w", {c_out, c_in}, InitScheme::kUniformFanIn, c_in);
    subset_b[k] = registry.add(p + ".conv.b", {c_out}, InitScheme::kZeros);
  }
  residual_w = registry.add(prefix + ".res.w", {c_out, c_in}, InitScheme::kUniformFanIn, c_in);
  residual_b = registry.add(prefix + ".res.b", {c_out}, InitScheme::kZeros);
}

AdjacencyArray GraphLayer::adaptive_adjacency(const Tensor& f) const {
  AdjacencyArray c;
  if (!adaptive_) return c;
  // Mean over time commutes with the 1x1 embedding, so pool first.
  const Tensor pooled = reduce_mean(f, {2});  // [B, C_in, N]
  for (std::size_t k = 0; k < kSubsets; ++k) {
    const std::size_t ce = theta_w[k].dim(0);
    const Tensor th = add(matmul(theta_w[k], pooled), reshape(theta_b[k], {ce, 1}));  // [B, C_e, N]
    const Tensor ph = matmul(phi_w[k], pooled);
    c[k] = softmax(matmul(transpose(th, 1, 2), ph), -1);
  }
  return c;
}

Tensor GraphLayer::forward(const Tensor& f) const { return forward_with(f, adaptive_adjacency(f)); }

Tensor GraphLayer::forward_with(const Tensor& f, const AdjacencyArray& c) const {
  if (f.rank() != 4 || f.dim(1) != c_in_ || f.dim(3) != a[0].dim(0)) {
    throw ShapeError("GraphLayer: expected [B, " + std::to_string(c_in_) + ", T, N], got " +
                     to_string(f.shape()));
  }
  const std::size_t batch = f.dim(0), t = f.dim(2), n = f.dim(3);
  const Tensor rows = reshape(f, {batch, c_in_ * t, n});
  std::vector<Tensor> mixed;
  std::vector<Tensor> weights;
  for (std::size_t k = 0; k < kSubsets; ++k) {
    Tensor m = add(a[k], b[k]);
    if (c[k].defined()) m = add(m, c[k]);
    mixed.push_back(reshape(matmul(rows, m), {batch, c_in_, t, n}));
    weights.push_back(subset_w[k]);
  }
  mixed.push_back(f);
  weights.push_back(residual_w);
  // One 1x1 convolution over the stacked inputs covers all four transforms.
  const Tensor bias = add(add(subset_b[0], subset_b[1]), add(subset_b[2], residual_b));
  return pointwise_conv(concat(mixed, 1), concat(weights, 1), bias);
}

}  // namespace cgt
