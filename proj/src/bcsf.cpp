#include "cgtgait/bcsf.hpp"

#include <stdexcept>

namespace cgt {

CrossFusion::CrossFusion(ParameterRegistry& registry, const std::string& prefix, std::size_t channels,
                         std::size_t joints, std::size_t heads, FusionToggles toggles)
    : heads_(heads) {
  if (heads == 0 || channels % heads != 0) {
    throw std::invalid_argument("CrossFusion: " + std::to_string(heads) + " heads do not divide " +
                                std::to_string(channels) + " channels");
  }
  const std::size_t c = channels, ff = 2 * channels, n = joints;
  if (toggles.temporal) {
    wq = registry.add(prefix + ".wq", {c, c}, InitScheme::kUniformFanIn, c);
    wk = registry.add(prefix + ".wk", {c, c}, InitScheme::kUniformFanIn, c);
    wv = registry.add(prefix + ".wv", {c, c}, InitScheme::kUniformFanIn, c);
    wo = registry.add(prefix + ".wo", {c, c}, InitScheme::kUniformFanIn, c);
    bo = registry.add(prefix + ".bo", {c}, InitScheme::kZeros);
    ln1_g = registry.add(prefix + ".ln1.g", {c}, InitScheme::kOnes);
    ln1_b = registry.add(prefix + ".ln1.b", {c}, InitScheme::kZeros);
    ffn_w1 = registry.add(prefix + ".ffn.w1", {c, ff}, InitScheme::kUniformFanIn, c);
    ffn_b1 = registry.add(prefix + ".ffn.b1", {ff}, InitScheme::kZeros);
    ffn_w2 = registry.add(prefix + ".ffn.w2", {ff, c}, InitScheme::kUniformFanIn, ff);
    ffn_b2 = registry.add(prefix + ".ffn.b2", {c}, InitScheme::kZeros);
    ln2_g = registry.add(prefix + ".ln2.g", {c}, InitScheme::kOnes);
    ln2_b = registry.add(prefix + ".ln2.b", {c}, InitScheme::kZeros);
  }
  if (toggles.spatial) {
    mlp_w1 = registry.add(prefix + ".mlp.w1", {n, n}, InitScheme::kUniformFanIn, n);
    mlp_b1 = registry.add(prefix + ".mlp.b1", {n}, InitScheme::kZeros);
    mlp_w2 = registry.add(prefix + ".mlp.w2", {n, n}, InitScheme::kUniformFanIn, n);
    mlp_b2 = registry.add(prefix + ".mlp.b2", {n}, InitScheme::kZeros);
  }
}

Tensor CrossFusion::temporal(const Tensor& f_a, const Tensor& f_b) const {
  if (f_a.shape() != f_b.shape() || f_a.rank() != 4) {
    throw ShapeError("CrossFusion: stream shapes differ: " + to_string(f_a.shape()) + " vs " +
                     to_string(f_b.shape()));
  }
  const Tensor a = permute(f_a, {0, 3, 2, 1});  // [B, N, T, C]
  const Tensor b = permute(f_b, {0, 3, 2, 1});
  const Tensor cross = linear(attention(linear(a, wq, Tensor()), linear(b, wk, Tensor()),
                                        linear(b, wv, Tensor()), heads_),
                              wo, bo);
  const Tensor h1 = layer_norm(add(cross, a), -1, ln1_g, ln1_b);
  const Tensor ffn = linear(relu(linear(h1, ffn_w1, ffn_b1)), ffn_w2, ffn_b2);
  const Tensor h2 = layer_norm(add(ffn, h1), -1, ln2_g, ln2_b);
  return add(permute(h2, {0, 3, 2, 1}), f_a);
}

Tensor CrossFusion::joint_weights(const Tensor& f) const {
  const Tensor pooled = reduce_mean(f, {1, 2});  // [B, N]
  return sigmoid(linear(relu(linear(pooled, mlp_w1, mlp_b1)), mlp_w2, mlp_b2));
}

Tensor CrossFusion::spatial(const Tensor& f_self, const Tensor& f_other) const {
  if (f_self.shape() != f_other.shape()) throw ShapeError("CrossFusion::spatial: shape mismatch");
  const Tensor w = reshape(joint_weights(f_other), {f_other.dim(0), 1, 1, f_other.dim(3)});
  return add(mul(f_other, w), f_self);
}

BCSF::BCSF(ParameterRegistry& registry, const std::string& prefix, std::size_t channels, std::size_t joints,
           std::size_t heads, FusionToggles toggles)
    : posture(registry, prefix + ".p", channels, joints, heads, toggles),
      motion(registry, prefix + ".m", channels, joints, heads, toggles),
      toggles_(toggles) {}

std::pair<Tensor, Tensor> BCSF::forward(const Tensor& f_p, const Tensor& f_m) const {
  const Tensor p_ct = toggles_.temporal ? posture.temporal(f_p, f_m) : f_p;
  const Tensor m_ct = toggles_.temporal ? motion.temporal(f_m, f_p) : f_m;
  if (!toggles_.spatial) return {p_ct, m_ct};
  return {posture.spatial(p_ct, m_ct), motion.spatial(m_ct, p_ct)};
}

}  // namespace cgt
