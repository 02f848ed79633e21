#include "cgtgait/transformer.hpp"

#include <cmath>
#include <stdexcept>

namespace cgt {

TransformerLayer::TransformerLayer(ParameterRegistry& registry, const std::string& prefix, std::size_t channels,
                                   std::size_t frames, std::size_t heads, std::size_t stride, bool positional)
    : channels_(channels), frames_(frames), heads_(heads), stride_(stride), positional_(positional) {
  if (heads == 0 || channels % heads != 0) {
    throw std::invalid_argument("TransformerLayer: " + std::to_string(heads) + " heads do not divide " +
                                std::to_string(channels) + " channels");
  }
  if (stride == 0) throw std::invalid_argument("TransformerLayer: stride must be positive");
  const std::size_t c = channels, ff = 2 * channels;
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
  if (positional_) pos = registry.add(prefix + ".pos", {frames, c}, InitScheme::kUniformFanIn, c);
  down_w = registry.add(prefix + ".down.w", {c, c}, InitScheme::kUniformFanIn, c);
  down_b = registry.add(prefix + ".down.b", {c}, InitScheme::kZeros);
}

Tensor TransformerLayer::mhsa(const Tensor& x) const {
  const Tensor q = linear(x, wq, Tensor());
  const Tensor k = linear(x, wk, Tensor());
  const Tensor v = linear(x, wv, Tensor());
  return linear(attention(q, k, v, heads_), wo, bo);
}

Tensor TransformerLayer::encode(const Tensor& tokens) const {
  Tensor x = tokens;
  if (positional_) x = add(x, pos);
  const Tensor att = layer_norm(add(mhsa(x), x), -1, ln1_g, ln1_b);
  const Tensor ffn = linear(relu(linear(att, ffn_w1, ffn_b1)), ffn_w2, ffn_b2);
  return layer_norm(add(ffn, att), -1, ln2_g, ln2_b);
}

Tensor TransformerLayer::forward(const Tensor& f) const {
  if (f.rank() != 4 || f.dim(1) != channels_ || (positional_ && f.dim(2) != frames_)) {
    throw ShapeError("TransformerLayer: expected [B, " + std::to_string(channels_) + ", " +
                     std::to_string(frames_) + ", N], got " + to_string(f.shape()));
  }
  const Tensor tokens = permute(f, {0, 3, 2, 1});  // [B, N, T, C]
  const Tensor out = permute(encode(tokens), {0, 3, 2, 1});
  return pointwise_conv(out, down_w, down_b, stride_);
}

CGTBlock::CGTBlock(ParameterRegistry& registry, const std::string& prefix, const BlockSpec& spec,
                   std::size_t frames, const AdjacencyArray& physical, const BlockOptions& options)
    : spec_(spec), options_(options), frames_(frames) {
  const std::size_t ci = spec.c_in, co = spec.c_out;
  const bool lifted = ci != co && options.temporal == TemporalKind::kTransformer &&
                      options.order != BlockOrder::kGraphFirst;
  if (lifted) {
    lift_w = registry.add(prefix + ".lift.w", {co, ci}, InitScheme::kUniformFanIn, ci);
    lift_b = registry.add(prefix + ".lift.b", {co}, InitScheme::kZeros);
  }
  if (options.temporal == TemporalKind::kTcn) {
    graph = GraphLayer(registry, prefix + ".gcn", ci, co, physical);
    const std::size_t k = options.tcn_kernel;
    tcn_w = registry.add(prefix + ".tcn.w", {co, co, k}, InitScheme::kUniformFanIn, co * k);
    tcn_b = registry.add(prefix + ".tcn.b", {co}, InitScheme::kZeros);
  } else if (options.order == BlockOrder::kTransformerFirst) {
    transformer = TransformerLayer(registry, prefix + ".tr", co, frames, options.heads, spec.stride,
                                   options.positional);
    graph = GraphLayer(registry, prefix + ".gcn", co, co, physical);
  } else {
    graph = GraphLayer(registry, prefix + ".gcn", ci, co, physical);
    transformer = TransformerLayer(registry, prefix + ".tr", co, frames, options.heads, spec.stride,
                                   options.positional);
  }
  res_w = registry.add(prefix + ".res.w", {co, ci}, InitScheme::kUniformFanIn, ci);
  res_b = registry.add(prefix + ".res.b", {co}, InitScheme::kZeros);
}

Tensor CGTBlock::lift(const Tensor& f) const { return lift_w.defined() ? pointwise_conv(f, lift_w, lift_b) : f; }

Tensor CGTBlock::main_branch(const Tensor& f) const {
  if (options_.temporal == TemporalKind::kTcn) {
    return temporal_conv(relu(graph.forward(f)), tcn_w, tcn_b, spec_.stride);
  }
  switch (options_.order) {
    case BlockOrder::kGraphFirst:
      return transformer.forward(graph.forward(f));
    case BlockOrder::kTransformerFirst:
      return graph.forward(transformer.forward(lift(f)));
    case BlockOrder::kParallel:
      return add(transformer.forward(lift(f)), stride_select(graph.forward(f), 2, spec_.stride));
  }
  throw std::logic_error("CGTBlock: unknown order");
}

Tensor CGTBlock::residual(const Tensor& f) const { return pointwise_conv(f, res_w, res_b, spec_.stride); }

Tensor CGTBlock::forward(const Tensor& f) const { return add(main_branch(f), residual(f)); }

FRHead::FRHead(ParameterRegistry& registry, const std::string& prefix, std::size_t channels) {
  proj_w = registry.add(prefix + ".proj.w", {channels, kFREmbed}, InitScheme::kUniformFanIn, channels);
  proj_b = registry.add(prefix + ".proj.b", {kFREmbed}, InitScheme::kZeros);
}

Tensor normalize_rows(const Tensor& x) {
  const Tensor n = reshape(norm(x, 1), {x.dim(0), 1});
  return div(x, add_scalar(n, 1e-12));
}

Tensor FRHead::embed(const Tensor& f) const {
  const Tensor pooled = reduce_mean(f, {2, 3});  // [B, C]
  return normalize_rows(linear(pooled, proj_w, proj_b));
}

FRResult fr_contrastive(const Tensor& z, const std::vector<int>& labels, const std::vector<double>& confidences,
                        const Tensor& prototypes, const FRConfig& config) {
  const std::size_t batch = z.dim(0), d = z.dim(1);
  if (labels.size() != batch || confidences.size() != batch || prototypes.shape() != Shape{kClasses, d}) {
    throw ShapeError("fr_contrastive: inconsistent batch, label or prototype shapes");
  }
  // Prototypes are unit or zero rows, so z · p is the cosine similarity.
  const Tensor protos = prototypes.detach();
  const Tensor logits = scale(matmul(z, transpose(protos, 0, 1)), 1.0 / config.temperature);
  std::vector<double> onehot(batch * kClasses, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] < 0 || labels[i] >= static_cast<int>(kClasses)) throw std::invalid_argument("fr_contrastive: bad label");
    onehot[i * kClasses + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  FRResult result;
  result.loss = scale(sum(mul(log_softmax(logits, 1), Tensor({batch, kClasses}, std::move(onehot)))),
                      -1.0 / static_cast<double>(batch));

  std::vector<double> next(protos.data().begin(), protos.data().end());
  const auto zv = z.data();
  for (std::size_t c = 0; c < kClasses; ++c) {
    std::vector<double> mean(d, 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < batch; ++i) {
      if (labels[i] != static_cast<int>(c) || !(confidences[i] > config.threshold)) continue;
      for (std::size_t j = 0; j < d; ++j) mean[j] += zv[i * d + j];
      ++count;
    }
    if (count == 0) continue;
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = config.momentum * next[c * d + j] + (1.0 - config.momentum) * mean[j] / count;
      next[c * d + j] = v;
      sq += v * v;
    }
    if (sq > 0.0) {
      const double inv = 1.0 / std::sqrt(sq);
      for (std::size_t j = 0; j < d; ++j) next[c * d + j] *= inv;
    }
    result.updated[c] = true;
  }
  result.prototypes = Tensor({kClasses, d}, std::move(next));
  return result;
}

}  // namespace cgt
