#include "cgtgait/complexity.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace cgt {

namespace {

using u64 = std::uint64_t;
constexpr u64 kN = kJoints;

LayerCost graph_cost(const std::string& name, u64 ci, u64 co, u64 t) {
  const u64 ce = embed_channels(ci);
  LayerCost c{name + ".gcn"};
  c.params = kSubsets * (kN * kN + 2 * ce * ci + ce + co * ci + co) + co * ci + co;
  // Adaptive branch on the time-pooled features, then the three joint mixes
  // and one fused 1x1 convolution over [mixed_0..2, f].
  c.macs = kSubsets * (2 * ce * ci * kN + kN * kN * ce) + kSubsets * ci * t * kN * kN +
           co * t * kN * 4 * ci;
  c.elementwise = ci * t * kN + kSubsets * (ce * kN + 2 * kN * kN) + co * t * kN;
  return c;
}

LayerCost transformer_cost(const std::string& name, u64 ch, u64 t, u64 stride, bool positional) {
  const u64 tokens = kN * t;
  const u64 t_out = (t + stride - 1) / stride;
  LayerCost c{name + ".tr"};
  c.params = 4 * ch * ch + ch + 4 * ch + 4 * ch * ch + 3 * ch + ch * ch + ch;
  if (positional) c.params += t * ch;
  c.macs = 4 * tokens * ch * ch + 2 * kN * t * t * ch + 4 * tokens * ch * ch + ch * t_out * kN * ch;
  // pos add, wo bias, residual, LN, ffn bias+relu (2C), ffn bias, residual, LN, down bias
  c.elementwise = (positional ? tokens * ch : 0) + 2 * tokens * ch + 2 * tokens * ch +
                  4 * tokens * ch + 2 * tokens * ch + 2 * tokens * ch + ch * t_out * kN;
  return c;
}

LayerCost pointwise_cost(const std::string& name, u64 ci, u64 co, u64 t_out) {
  LayerCost c{name};
  c.params = co * ci + co;
  c.macs = co * t_out * kN * ci;
  c.elementwise = co * t_out * kN;
  return c;
}

LayerCost cross_cost(const std::string& name, u64 ch, u64 t, FusionToggles toggles) {
  const u64 tokens = kN * t;
  LayerCost c{name};
  if (toggles.temporal) {
    c.params += 4 * ch * ch + ch + 4 * ch + 4 * ch * ch + 3 * ch;
    c.macs += 8 * tokens * ch * ch + 2 * kN * t * t * ch;
    // wo bias, residual, LN, ffn bias+relu, ffn bias, residual, LN, stream skip
    c.elementwise += 2 * tokens * ch + 2 * tokens * ch + 4 * tokens * ch + 2 * tokens * ch +
                     2 * tokens * ch + tokens * ch;
  }
  if (toggles.spatial) {
    c.params += 2 * kN * kN + 2 * kN;
    c.macs += 2 * kN * kN;
    // pooling, MLP bias/relu/bias/sigmoid, weighting, add
    c.elementwise += ch * t * kN + 4 * kN + 2 * ch * t * kN;
  }
  return c;
}

void block_costs(std::vector<LayerCost>& out, const std::string& name, const ModelConfig& cfg,
                 BlockSpec spec, u64 t) {
  const u64 ci = spec.c_in, co = spec.c_out, s = spec.stride;
  const u64 t_out = (t + s - 1) / s;
  if (cfg.temporal == TemporalKind::kTcn) {
    out.push_back(graph_cost(name, ci, co, t));
    out.back().elementwise += co * t * kN;  // relu
    LayerCost tcn{name + ".tcn"};
    tcn.params = co * co * cfg.tcn_kernel + co;
    tcn.macs = co * t_out * kN * co * cfg.tcn_kernel;
    tcn.elementwise = co * t_out * kN;
    out.push_back(tcn);
  } else {
    const bool lifted = ci != co && cfg.order != BlockOrder::kGraphFirst;
    if (lifted) out.push_back(pointwise_cost(name + ".lift", ci, co, t));
    switch (cfg.order) {
      case BlockOrder::kGraphFirst:
        out.push_back(graph_cost(name, ci, co, t));
        out.push_back(transformer_cost(name, co, t, s, cfg.positional));
        break;
      case BlockOrder::kTransformerFirst:
        out.push_back(transformer_cost(name, co, t, s, cfg.positional));
        out.push_back(graph_cost(name, co, co, t_out));
        break;
      case BlockOrder::kParallel:
        out.push_back(transformer_cost(name, co, t, s, cfg.positional));
        out.push_back(graph_cost(name, ci, co, t));
        out.back().elementwise += co * t_out * kN;  // branch sum
        break;
    }
  }
  out.push_back(pointwise_cost(name + ".res", ci, co, t_out));
  out.back().elementwise += co * t_out * kN;  // residual add
}

}  // namespace

ComplexityReport count_complexity(const ModelConfig& config) {
  config.validate();
  ComplexityReport r;
  std::vector<u64> frames_after;
  for (const char* stream : {"posture", "motion"}) {
    u64 t = config.frames;
    frames_after.clear();
    for (std::size_t i = 0; i < config.blocks.size(); ++i) {
      BlockSpec spec = config.blocks[i];
      if (i == 0) spec.c_in = std::string(stream) == "posture" ? 3 : config.motion_channels;
      block_costs(r.layers, std::string(stream) + ".block" + std::to_string(i + 1), config, spec, t);
      t = (t + spec.stride - 1) / spec.stride;
      frames_after.push_back(t);
    }
  }
  if (config.bcsf) {
    const std::size_t pos = config.effective_bcsf_position();
    const u64 ch = config.blocks[pos - 1].c_out, t = frames_after[pos - 1];
    r.layers.push_back(cross_cost("bcsf.p", ch, t, config.fusion));
    r.layers.push_back(cross_cost("bcsf.m", ch, t, config.fusion));
  }
  u64 t = config.frames;
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    const u64 ch = config.blocks[i].c_out;
    t = (t + config.blocks[i].stride - 1) / config.blocks[i].stride;
    for (const char* stream : {"posture", "motion"}) {
      LayerCost fr{std::string("fr.") + stream + ".block" + std::to_string(i + 1)};
      fr.params = ch * kFREmbed + kFREmbed;
      fr.macs = ch * kFREmbed;
      fr.elementwise = ch * t * kN + 3 * kFREmbed;
      fr.training_only = true;
      r.layers.push_back(fr);
    }
  }
  const u64 c_last = config.blocks.back().c_out;
  for (const char* stream : {"posture", "motion"}) {
    LayerCost head{std::string("head.") + stream};
    head.params = c_last * kClasses + kClasses;
    head.macs = c_last * kClasses;
    head.elementwise = c_last * t * kN + 2 * kClasses;
    r.layers.push_back(head);
  }
  if (config.affective_head) {
    LayerCost aff{"head.affective"};
    aff.params = c_last * kAffectiveDims + kAffectiveDims;
    aff.macs = c_last * kAffectiveDims;
    aff.elementwise = kAffectiveDims;
    r.layers.push_back(aff);
  }
  for (const auto& l : r.layers) {
    r.params += l.params;
    if (l.training_only) {
      r.training_macs += l.macs;
    } else {
      r.inference_params += l.params;
      r.macs += l.macs;
      r.elementwise += l.elementwise;
    }
  }
  return r;
}

nlohmann::json ComplexityReport::to_json() const {
  nlohmann::json layers_json = nlohmann::json::array();
  for (const auto& l : layers) {
    layers_json.push_back({{"name", l.name},
                           {"params", l.params},
                           {"macs", l.macs},
                           {"elementwise", l.elementwise},
                           {"training_only", l.training_only}});
  }
  return {{"convention", kFlopConvention},
          {"params", params},
          {"inference_params", inference_params},
          {"macs", macs},
          {"elementwise", elementwise},
          {"flops", flops()},
          {"gflops", static_cast<double>(flops()) / 1e9},
          {"training_only_macs", training_macs},
          {"layers", layers_json}};
}

std::string ComplexityReport::to_text() const {
  std::size_t width = 5;
  for (const auto& l : layers) width = std::max(width, l.name.size());
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s %12s %14s %12s\n", static_cast<int>(width), "layer", "params",
                "MACs", "elementwise");
  os << line;
  for (const auto& l : layers) {
    std::snprintf(line, sizeof line, "%-*s %12llu %14llu %12llu%s\n", static_cast<int>(width), l.name.c_str(),
                  static_cast<unsigned long long>(l.params), static_cast<unsigned long long>(l.macs),
                  static_cast<unsigned long long>(l.elementwise), l.training_only ? "  (training only)" : "");
    os << line;
  }
  std::snprintf(line, sizeof line,
                "\nparameters %llu (%.3fM; %llu without FR heads)\nFLOPs %llu (%.3fG) = %llu MACs + %llu elementwise\n",
                static_cast<unsigned long long>(params), static_cast<double>(params) / 1e6,
                static_cast<unsigned long long>(inference_params), static_cast<unsigned long long>(flops()),
                static_cast<double>(flops()) / 1e9, static_cast<unsigned long long>(macs),
                static_cast<unsigned long long>(elementwise));
  os << line << "convention: " << kFlopConvention << "\n";
  return os.str();
}

}  // namespace cgt
