#include "cgtgait/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cgt {

namespace {

Tensor onehot(const std::vector<int>& labels) {
  std::vector<double> v(labels.size() * kClasses, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= static_cast<int>(kClasses)) {
      throw std::invalid_argument("label out of range: " + std::to_string(labels[i]));
    }
    v[i * kClasses + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return Tensor({labels.size(), kClasses}, std::move(v));
}

// Mean over the batch of −log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, const Tensor& targets) {
  return scale(sum(mul(log_softmax(logits, 1), targets)), -1.0 / static_cast<double>(logits.dim(0)));
}

std::vector<double> true_class_probability(const Tensor& prob, const std::vector<int>& labels) {
  std::vector<double> c(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) c[i] = prob.at({i, static_cast<std::size_t>(labels[i])});
  return c;
}

}  // namespace

std::string_view to_string(BlockOrder order) {
  switch (order) {
    case BlockOrder::kGraphFirst: return "gcn_transformer";
    case BlockOrder::kTransformerFirst: return "transformer_gcn";
    case BlockOrder::kParallel: return "parallel";
  }
  return "?";
}

std::string_view to_string(TemporalKind kind) { return kind == TemporalKind::kTcn ? "tcn" : "transformer"; }

BlockOrder parse_block_order(std::string_view name) {
  for (auto o : {BlockOrder::kGraphFirst, BlockOrder::kTransformerFirst, BlockOrder::kParallel}) {
    if (to_string(o) == name) return o;
  }
  throw std::invalid_argument("unknown block order '" + std::string(name) + "'");
}

TemporalKind parse_temporal_kind(std::string_view name) {
  for (auto k : {TemporalKind::kTransformer, TemporalKind::kTcn}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown temporal kind '" + std::string(name) + "'");
}

std::vector<BlockSpec> ModelConfig::block_plan(std::size_t width, std::size_t count) {
  const std::size_t w = width;
  switch (count) {
    case 3: return {{3, w, 1}, {w, 2 * w, 2}, {2 * w, 4 * w, 2}};
    case 4: return {{3, w, 1}, {w, w, 1}, {w, 2 * w, 2}, {2 * w, 4 * w, 2}};
    case 5: return {{3, w, 1}, {w, w, 1}, {w, 2 * w, 2}, {2 * w, 4 * w, 2}, {4 * w, 4 * w, 1}};
    case 6:
      return {{3, w, 1}, {w, w, 1}, {w, 2 * w, 2}, {2 * w, 4 * w, 2}, {4 * w, 4 * w, 1}, {4 * w, 4 * w, 1}};
  }
  throw std::invalid_argument("block_plan: supported block counts are 3 to 6, got " + std::to_string(count));
}

ModelConfig ModelConfig::full() { return ModelConfig{}; }

ModelConfig ModelConfig::baseline(const ModelConfig& base) {
  ModelConfig c = base;
  c.temporal = TemporalKind::kTcn;
  c.order = BlockOrder::kGraphFirst;
  c.bcsf = false;
  return c;
}

std::size_t ModelConfig::effective_bcsf_position() const {
  return std::clamp<std::size_t>(bcsf_position, 1, blocks.size());
}

double ModelConfig::lambda_at(std::size_t block) const {
  if (lambda.empty()) return 0.0;
  return lambda[std::min(block, lambda.size() - 1)];
}

void ModelConfig::validate() const {
  if (blocks.empty()) throw std::invalid_argument("model config: no blocks");
  if (blocks.front().c_in != 3) throw std::invalid_argument("model config: first block must take 3 channels");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.c_out == 0 || b.stride == 0) throw std::invalid_argument("model config: empty block");
    if (i > 0 && b.c_in != blocks[i - 1].c_out) {
      throw std::invalid_argument("model config: block " + std::to_string(i + 1) + " input width " +
                                  std::to_string(b.c_in) + " does not match previous output " +
                                  std::to_string(blocks[i - 1].c_out));
    }
    if (temporal == TemporalKind::kTransformer && b.c_out % heads != 0) {
      throw std::invalid_argument("model config: " + std::to_string(heads) + " heads do not divide " +
                                  std::to_string(b.c_out) + " channels");
    }
  }
  if (bcsf && blocks[effective_bcsf_position() - 1].c_out % heads != 0) {
    throw std::invalid_argument("model config: heads do not divide the fusion width");
  }
  if (tcn_kernel % 2 == 0) throw std::invalid_argument("model config: tcn_kernel must be odd");
  if (frames < 2) throw std::invalid_argument("model config: frames must be at least 2");
  const auto check_norm = [](const std::vector<double>& mean, const std::vector<double>& sd, std::size_t ch,
                             const char* stream) {
    if (mean.empty() && sd.empty()) return;
    if (mean.size() != ch || sd.size() != ch) {
      throw std::invalid_argument(std::string("model config: ") + stream + " input_norm needs " + std::to_string(ch) +
                                  " means and deviations");
    }
    for (double v : sd) {
      if (!(v > 0.0)) throw std::invalid_argument("model config: input_norm deviations must be positive");
    }
  };
  check_norm(input_norm.posture_mean, input_norm.posture_std, 3, "posture");
  check_norm(input_norm.motion_mean, input_norm.motion_std, motion_channels, "motion");
  for (double l : lambda) {
    if (l < 0.0) throw std::invalid_argument("model config: negative lambda");
  }
  if (!(fr.momentum > 0.0 && fr.momentum < 1.0) || !(fr.temperature > 0.0)) {
    throw std::invalid_argument("model config: bad FR settings");
  }
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json plan = nlohmann::json::array();
  for (const auto& b : blocks) plan.push_back({b.c_in, b.c_out, b.stride});
  return {{"blocks", plan},
          {"motion_channels", motion_channels},
          {"frames", frames},
          {"heads", heads},
          {"positional", positional},
          {"order", to_string(order)},
          {"temporal", to_string(temporal)},
          {"tcn_kernel", tcn_kernel},
          {"bcsf", bcsf},
          {"bcsf_position", bcsf_position},
          {"temporal_fusion", fusion.temporal},
          {"spatial_fusion", fusion.spatial},
          {"lambda", lambda},
          {"affective_head", affective_head},
          {"fr_threshold", fr.threshold},
          {"fr_momentum", fr.momentum},
          {"fr_temperature", fr.temperature},
          {"input_norm",
           {{"posture_mean", input_norm.posture_mean},
            {"posture_std", input_norm.posture_std},
            {"motion_mean", input_norm.motion_mean},
            {"motion_std", input_norm.motion_std}}}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (j.contains("width") || j.contains("block_count")) {
    c.blocks = block_plan(j.value("width", std::size_t{64}), j.value("block_count", std::size_t{4}));
  }
  if (j.contains("blocks")) {
    c.blocks.clear();
    for (const auto& b : j.at("blocks")) {
      if (!b.is_array() || b.size() != 3) throw std::invalid_argument("model config: block entries are [c_in, c_out, stride]");
      c.blocks.push_back({b[0].get<std::size_t>(), b[1].get<std::size_t>(), b[2].get<std::size_t>()});
    }
  }
  c.motion_channels = j.value("motion_channels", c.motion_channels);
  c.frames = j.value("frames", c.frames);
  c.heads = j.value("heads", c.heads);
  c.positional = j.value("positional", c.positional);
  if (j.contains("order")) c.order = parse_block_order(j["order"].get<std::string>());
  if (j.contains("temporal")) c.temporal = parse_temporal_kind(j["temporal"].get<std::string>());
  c.tcn_kernel = j.value("tcn_kernel", c.tcn_kernel);
  c.bcsf = j.value("bcsf", c.bcsf);
  c.bcsf_position = j.value("bcsf_position", c.bcsf_position);
  c.fusion.temporal = j.value("temporal_fusion", c.fusion.temporal);
  c.fusion.spatial = j.value("spatial_fusion", c.fusion.spatial);
  if (j.contains("lambda")) c.lambda = j["lambda"].get<std::vector<double>>();
  c.affective_head = j.value("affective_head", c.affective_head);
  c.fr.threshold = j.value("fr_threshold", c.fr.threshold);
  c.fr.momentum = j.value("fr_momentum", c.fr.momentum);
  c.fr.temperature = j.value("fr_temperature", c.fr.temperature);
  if (j.contains("input_norm")) {
    const auto& n = j["input_norm"];
    for (auto [key, field] : {std::pair{"posture_mean", &c.input_norm.posture_mean},
                              {"posture_std", &c.input_norm.posture_std},
                              {"motion_mean", &c.input_norm.motion_mean},
                              {"motion_std", &c.input_norm.motion_std}}) {
      if (n.contains(key)) *field = n[key].get<std::vector<double>>();
    }
  }
  c.validate();
  return c;
}

Batch make_batch(std::span<const SkeletonSequence> sequences, std::mt19937_64* rng,
                 std::span<const AffectiveVector> targets) {
  if (sequences.empty()) throw std::invalid_argument("make_batch: empty batch");
  if (!targets.empty() && targets.size() != sequences.size()) {
    throw std::invalid_argument("make_batch: target count differs from sequence count");
  }
  std::vector<SkeletonSequence> seqs(sequences.begin(), sequences.end());
  if (rng) {
    for (auto& s : seqs) s = augment(s, *rng);
  }
  std::vector<MotionSequence> motion;
  motion.reserve(seqs.size());
  Batch b;
  std::vector<double> aff;
  aff.reserve(seqs.size() * kAffectiveDims);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    motion.push_back(extract_motion(seqs[i]));
    b.labels.push_back(index_of(seqs[i].label));
    const AffectiveVector a = targets.empty() ? compute_affective(seqs[i]) : targets[i];
    aff.insert(aff.end(), a.begin(), a.end());
  }
  b.posture = posture_tensor(seqs);
  b.motion = motion_tensor(motion);
  b.affective = Tensor({seqs.size(), kAffectiveDims}, std::move(aff));
  return b;
}

CGTGait::CGTGait(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed), registry_(seed) {
  config_.validate();
  const auto physical = build_physical_adjacency(SkeletonTopology::standard());
  BlockOptions options;
  options.order = config_.order;
  options.temporal = config_.temporal;
  options.heads = config_.heads;
  options.positional = config_.positional;
  options.tcn_kernel = config_.tcn_kernel;

  auto build_stream = [&](const std::string& name, std::size_t c_first, std::vector<CGTBlock>& out) {
    std::size_t frames = config_.frames;
    for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
      BlockSpec spec = config_.blocks[i];
      if (i == 0) spec.c_in = c_first;
      out.emplace_back(registry_, name + ".block" + std::to_string(i + 1), spec, frames, physical, options);
      frames = out.back().out_frames();
    }
  };
  build_stream("posture", 3, posture_);
  build_stream("motion", config_.motion_channels, motion_);

  if (config_.bcsf) {
    const std::size_t pos = config_.effective_bcsf_position();
    bcsf_.emplace(registry_, "bcsf", config_.blocks[pos - 1].c_out, kJoints, config_.heads, config_.fusion);
  }
  for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
    const std::size_t c = config_.blocks[i].c_out;
    fr_p_.emplace_back(registry_, "fr.posture.block" + std::to_string(i + 1), c);
    fr_m_.emplace_back(registry_, "fr.motion.block" + std::to_string(i + 1), c);
    prototypes_p.emplace_back(Shape{kClasses, kFREmbed});
    prototypes_m.emplace_back(Shape{kClasses, kFREmbed});
  }
  const std::size_t c_last = config_.blocks.back().c_out;
  cls_p_w_ = registry_.add("head.posture.w", {c_last, kClasses}, InitScheme::kUniformFanIn, c_last);
  cls_p_b_ = registry_.add("head.posture.b", {kClasses}, InitScheme::kZeros);
  cls_m_w_ = registry_.add("head.motion.w", {c_last, kClasses}, InitScheme::kUniformFanIn, c_last);
  cls_m_b_ = registry_.add("head.motion.b", {kClasses}, InitScheme::kZeros);
  if (config_.affective_head) {
    aff_w_ = registry_.add("head.affective.w", {c_last, kAffectiveDims}, InitScheme::kUniformFanIn, c_last);
    aff_b_ = registry_.add("head.affective.b", {kAffectiveDims}, InitScheme::kZeros);
  }
}

namespace {

// Inputs are data, so this runs outside the tape.
Tensor standardise(const Tensor& x, const std::vector<double>& mean, const std::vector<double>& sd) {
  if (mean.empty()) return x;
  Tensor out(x.shape());
  const auto src = x.data();
  auto dst = out.mutable_data();
  const std::size_t channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  for (std::size_t i = 0; i < src.size(); ++i) {
    const std::size_t c = (i / plane) % channels;
    dst[i] = (src[i] - mean[c]) / sd[c];
  }
  return out;
}

}  // namespace

InputNorm fit_input_norm(std::span<const SkeletonSequence> sequences) {
  if (sequences.empty()) throw std::invalid_argument("fit_input_norm: empty dataset");
  const auto moments = [](const Tensor& t, std::vector<double>& mean, std::vector<double>& sd) {
    const std::size_t batch = t.dim(0), channels = t.dim(1), plane = t.dim(2) * t.dim(3);
    const auto d = t.data();
    mean.assign(channels, 0.0);
    sd.assign(channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0, q = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t r = 0; r < plane; ++r) s += d[(b * channels + c) * plane + r];
      }
      const double n = static_cast<double>(batch * plane);
      mean[c] = s / n;
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t r = 0; r < plane; ++r) {
          const double v = d[(b * channels + c) * plane + r] - mean[c];
          q += v * v;
        }
      }
      sd[c] = std::max(std::sqrt(q / n), 1e-6);
    }
  };
  const Batch b = make_batch(sequences, nullptr, std::vector<AffectiveVector>(sequences.size()));
  InputNorm norm;
  moments(b.posture, norm.posture_mean, norm.posture_std);
  moments(b.motion, norm.motion_mean, norm.motion_std);
  return norm;
}

ForwardOutput CGTGait::forward(const Tensor& posture, const Tensor& motion) const {
  if (posture.rank() != 4 || posture.dim(1) != 3 || posture.dim(2) != config_.frames ||
      posture.dim(3) != kJoints) {
    throw ShapeError("CGTGait: posture input must be [B, 3, " + std::to_string(config_.frames) +
                     ", 16], got " + to_string(posture.shape()));
  }
  if (motion.shape() != Shape{posture.dim(0), config_.motion_channels, config_.frames, kJoints}) {
    throw ShapeError("CGTGait: motion input shape " + to_string(motion.shape()));
  }
  ForwardOutput out;
  Tensor p = standardise(posture, config_.input_norm.posture_mean, config_.input_norm.posture_std);
  Tensor m = standardise(motion, config_.input_norm.motion_mean, config_.input_norm.motion_std);
  const std::size_t fuse_after = bcsf_ ? config_.effective_bcsf_position() : 0;
  for (std::size_t i = 0; i < posture_.size(); ++i) {
    p = posture_[i].forward(p);
    m = motion_[i].forward(m);
    out.embed_p.push_back(fr_p_[i].embed(p));
    out.embed_m.push_back(fr_m_[i].embed(m));
    if (i + 1 == fuse_after) std::tie(p, m) = bcsf_->forward(p, m);
  }
  out.feature_p = p;
  out.feature_m = m;
  const Tensor pooled_p = reduce_mean(p, {2, 3});
  const Tensor pooled_m = reduce_mean(m, {2, 3});
  out.logits_p = linear(pooled_p, cls_p_w_, cls_p_b_);
  out.logits_m = linear(pooled_m, cls_m_w_, cls_m_b_);
  out.prob_p = softmax(out.logits_p, 1);
  out.prob_m = softmax(out.logits_m, 1);
  if (config_.affective_head) out.affective = linear(pooled_p, aff_w_, aff_b_);
  return out;
}

LossResult CGTGait::loss(const ForwardOutput& out, const std::vector<int>& labels, const Tensor& targets) const {
  return loss(out, labels, targets, config_.lambda);
}

LossResult CGTGait::loss(const ForwardOutput& out, const std::vector<int>& labels, const Tensor& targets,
                         const std::vector<double>& lambda) const {
  const std::size_t batch = labels.size();
  if (out.logits_p.dim(0) != batch) throw ShapeError("loss: label count differs from batch size");
  const Tensor y = onehot(labels);
  LossResult r;
  r.ce = add(cross_entropy(out.logits_p, y), cross_entropy(out.logits_m, y));
  if (out.affective.defined()) {
    if (targets.shape() != out.affective.shape()) throw ShapeError("loss: affective target shape");
    r.mse = scale(sum(square(sub(out.affective, targets))), 1.0 / static_cast<double>(batch));
  } else {
    r.mse = Tensor::scalar(0.0);
  }
  const auto conf_p = true_class_probability(out.prob_p, labels);
  const auto conf_m = true_class_probability(out.prob_m, labels);
  r.fr = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < out.embed_p.size(); ++i) {
    const double l = lambda.empty() ? 0.0 : lambda[std::min(i, lambda.size() - 1)];
    auto fp = fr_contrastive(out.embed_p[i], labels, conf_p, prototypes_p[i], config_.fr);
    auto fm = fr_contrastive(out.embed_m[i], labels, conf_m, prototypes_m[i], config_.fr);
    if (l != 0.0) r.fr = add(r.fr, scale(add(fp.loss, fm.loss), l));
    r.next_prototypes_p.push_back(fp.prototypes);
    r.next_prototypes_m.push_back(fm.prototypes);
  }
  r.total = add(add(r.ce, r.mse), r.fr);
  return r;
}

void CGTGait::commit_prototypes(const LossResult& result) {
  if (result.next_prototypes_p.size() != prototypes_p.size()) {
    throw std::invalid_argument("commit_prototypes: block count mismatch");
  }
  prototypes_p = result.next_prototypes_p;
  prototypes_m = result.next_prototypes_m;
}

std::vector<int> predict(const Tensor& prob_p, const Tensor& prob_m) {
  if (prob_p.shape() != prob_m.shape() || prob_p.rank() != 2) throw ShapeError("predict: shape mismatch");
  const std::size_t batch = prob_p.dim(0), k = prob_p.dim(1);
  std::vector<int> out(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    std::size_t best = 0;
    double best_v = -1.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double v = 0.5 * (prob_p.at({i, c}) + prob_m.at({i, c}));
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace cgt
