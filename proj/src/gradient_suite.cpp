#include "cgtgait/gradient_suite.hpp"

#include <algorithm>
#include <functional>
#include <random>
#include <stdexcept>

#include "cgtgait/network.hpp"
#include "cgtgait/ops.hpp"
#include "cgtgait/synthetic.hpp"

namespace cgt {

namespace {

using Expr = std::function<Tensor()>;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0, bool grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

struct Leaves {
  std::mt19937_64& rng;
  std::vector<Parameter> params;
  Tensor operator()(Shape s, double lo = -1.0, double hi = 1.0) {
    Tensor t = random_tensor(std::move(s), rng, lo, hi, true);
    params.push_back({"x" + std::to_string(params.size()), t, InitScheme::kZeros});
    return t;
  }
};

using OpCase = std::pair<const char*, std::function<Expr(Leaves&)>>;

std::vector<OpCase> op_cases() {
  return {
      {"add", [](Leaves& l) -> Expr { auto a = l({3, 4}), b = l({4}); return [=] { return add(a, b); }; }},
      {"sub", [](Leaves& l) -> Expr { auto a = l({3, 1}), b = l({3, 4}); return [=] { return sub(a, b); }; }},
      {"mul", [](Leaves& l) -> Expr { auto a = l({2, 3, 4}), b = l({3, 1}); return [=] { return mul(a, b); }; }},
      {"div", [](Leaves& l) -> Expr { auto a = l({3, 4}), b = l({4}, 0.5, 2.0); return [=] { return div(a, b); }; }},
      {"scale", [](Leaves& l) -> Expr { auto a = l({3, 4}); return [=] { return scale(a, -1.5); }; }},
      {"add_scalar", [](Leaves& l) -> Expr { auto a = l({3, 4}); return [=] { return add_scalar(a, 0.25); }; }},
      {"relu", [](Leaves& l) -> Expr { auto a = l({5, 4}); return [=] { return relu(a); }; }},
      {"sigmoid", [](Leaves& l) -> Expr { auto a = l({5, 4}, -3, 3); return [=] { return sigmoid(a); }; }},
      {"exp", [](Leaves& l) -> Expr { auto a = l({6}); return [=] { return cgt::exp(a); }; }},
      {"log", [](Leaves& l) -> Expr { auto a = l({6}, 0.5, 3); return [=] { return cgt::log(a); }; }},
      {"square", [](Leaves& l) -> Expr { auto a = l({6}); return [=] { return square(a); }; }},
      {"matmul", [](Leaves& l) -> Expr { auto a = l({2, 3, 4}), b = l({4, 5}); return [=] { return matmul(a, b); }; }},
      {"matmul_batched", [](Leaves& l) -> Expr { auto a = l({3, 4}), b = l({2, 4, 2}); return [=] { return matmul(a, b); }; }},
      {"linear", [](Leaves& l) -> Expr { auto x = l({2, 3, 4}), w = l({4, 5}), b = l({5}); return [=] { return linear(x, w, b); }; }},
      {"softmax", [](Leaves& l) -> Expr { auto a = l({3, 5, 2}, -2, 2); return [=] { return softmax(a, 1); }; }},
      {"log_softmax", [](Leaves& l) -> Expr { auto a = l({3, 5}, -2, 2); return [=] { return log_softmax(a, -1); }; }},
      {"layer_norm", [](Leaves& l) -> Expr { auto x = l({3, 6}), g = l({6}), b = l({6}); return [=] { return layer_norm(x, 1, g, b); }; }},
      {"pointwise_conv", [](Leaves& l) -> Expr { auto x = l({2, 3, 5, 4}), w = l({4, 3}), b = l({4}); return [=] { return pointwise_conv(x, w, b, 2); }; }},
      {"temporal_conv", [](Leaves& l) -> Expr { auto x = l({2, 3, 7, 2}), w = l({2, 3, 5}), b = l({2}); return [=] { return temporal_conv(x, w, b, 2); }; }},
      {"reduce_mean", [](Leaves& l) -> Expr { auto a = l({3, 4, 5}); return [=] { return reduce_mean(a, {0, 2}); }; }},
      {"reduce_sum", [](Leaves& l) -> Expr { auto a = l({3, 4, 5}); return [=] { return reduce_sum(a, {1}); }; }},
      {"norm", [](Leaves& l) -> Expr { auto a = l({3, 4}); return [=] { return cgt::norm(a, 1); }; }},
      {"reshape", [](Leaves& l) -> Expr { auto a = l({3, 4}); return [=] { return reshape(a, {2, 6}); }; }},
      {"permute", [](Leaves& l) -> Expr { auto a = l({2, 3, 4}); return [=] { return permute(a, {2, 0, 1}); }; }},
      {"concat", [](Leaves& l) -> Expr { auto a = l({2, 3}), b = l({2, 2}); return [=] { return concat({a, b}, 1); }; }},
      {"stride_select", [](Leaves& l) -> Expr { auto a = l({2, 5, 3}); return [=] { return stride_select(a, 1, 2); }; }},
      {"attention", [](Leaves& l) -> Expr { auto q = l({2, 5, 4}), k = l({2, 6, 4}), v = l({2, 6, 4}); return [=] { return attention(q, k, v, 2); }; }},
  };
}

void randomize(ParameterRegistry& reg, std::mt19937_64& rng, double amplitude = 0.5) {
  std::uniform_real_distribution<double> dist(-amplitude, amplitude);
  for (auto& p : reg.parameters()) {
    for (auto& v : p.tensor.mutable_data()) v = dist(rng);
  }
}

// Weighted sum so the scalar depends on every output element.
Tensor project(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

void tensor_module(std::vector<GradSuiteEntry>& out, std::size_t seeds) {
  for (const auto& [name, make] : op_cases()) {
    GradSuiteEntry e{"tensor", name, {}, 1e-4};
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
      std::mt19937_64 rng(seed * 7919 + 1);
      Leaves leaves{rng, {}};
      const Expr expr = make(leaves);
      const Tensor w = random_tensor(expr().shape(), rng);
      const auto r = grad_check([&] { return project(expr(), w); }, leaves.params, {1e-5, 64, seed});
      if (r.max_relative_error >= e.result.max_relative_error) e.result = r;
    }
    out.push_back(e);
  }
}

void graph_module(std::vector<GradSuiteEntry>& out) {
  std::mt19937_64 rng(12);
  ParameterRegistry reg(11);
  GraphLayer g(reg, "graph", 3, 4, build_physical_adjacency(SkeletonTopology::standard()));
  randomize(reg, rng);
  const Tensor f = random_tensor({2, 3, 4, kJoints}, rng);
  const Tensor w = random_tensor({2, 4, 4, kJoints}, rng);
  out.push_back({"graph", "graph_forward", grad_check([&] { return project(g.forward(f), w); }, reg.parameters(), {1e-5, 12, 1}), 1e-4});
}

void transformer_module(std::vector<GradSuiteEntry>& out) {
  {
    std::mt19937_64 rng(3);
    ParameterRegistry reg(4);
    TransformerLayer layer(reg, "tr", 4, 6, 2, 2, true);
    randomize(reg, rng);
    const Tensor f = random_tensor({2, 4, 6, kJoints}, rng);
    const Tensor w = random_tensor(layer.forward(f).shape(), rng);
    out.push_back({"transformer", "transformer_forward",
                   grad_check([&] { return project(layer.forward(f), w); }, reg.parameters(), {1e-5, 8, 2}), 1e-4});
  }
  const auto physical = build_physical_adjacency(SkeletonTopology::standard());
  const std::array<std::pair<const char*, BlockOptions>, 4> variants = {{
      {"block_graph_first", {BlockOrder::kGraphFirst, TemporalKind::kTransformer, 2, true, 9}},
      {"block_transformer_first", {BlockOrder::kTransformerFirst, TemporalKind::kTransformer, 2, true, 9}},
      {"block_parallel", {BlockOrder::kParallel, TemporalKind::kTransformer, 2, true, 9}},
      {"block_tcn", {BlockOrder::kGraphFirst, TemporalKind::kTcn, 2, true, 3}},
  }};
  std::uint64_t seed = 16;
  for (const auto& [name, opt] : variants) {
    std::mt19937_64 rng(seed++);
    ParameterRegistry reg(seed++);
    CGTBlock block(reg, "block", {3, 4, 2}, 6, physical, opt);
    randomize(reg, rng);
    const Tensor f = random_tensor({2, 3, 6, kJoints}, rng);
    const Tensor w = random_tensor(block.forward(f).shape(), rng);
    out.push_back({"transformer", name,
                   grad_check([&] { return project(block.forward(f), w); }, reg.parameters(), {1e-5, 6, 3}), 1e-4});
  }
  {
    std::mt19937_64 rng(32);
    ParameterRegistry reg(33);
    FRHead head(reg, "fr", 5);
    randomize(reg, rng);
    const Tensor f = random_tensor({3, 5, 4, kJoints}, rng);
    const Tensor protos = normalize_rows(random_tensor({kClasses, kFREmbed}, rng));
    auto loss = [&] { return fr_contrastive(head.embed(f), {0, 3, 1}, {0.9, 0.1, 0.95}, protos).loss; };
    out.push_back({"transformer", "fr_head", grad_check(loss, reg.parameters(), {1e-5, 10, 4}), 1e-4});
  }
}

void bcsf_module(std::vector<GradSuiteEntry>& out) {
  std::mt19937_64 rng(19);
  ParameterRegistry reg(20);
  BCSF fusion(reg, "bcsf", 4, kJoints, 2);
  randomize(reg, rng);
  const Tensor p = random_tensor({2, 4, 3, kJoints}, rng), m = random_tensor({2, 4, 3, kJoints}, rng);
  const Tensor w1 = random_tensor(p.shape(), rng), w2 = random_tensor(p.shape(), rng);
  auto loss = [&] {
    auto [pm, mp] = fusion.forward(p, m);
    return add(project(pm, w1), project(mp, w2));
  };
  out.push_back({"bcsf", "bcsf_forward", grad_check(loss, reg.parameters(), {1e-5, 8, 5}), 1e-4});
}

void network_module(std::vector<GradSuiteEntry>& out) {
  ModelConfig c;
  c.blocks = ModelConfig::block_plan(4, 4);
  c.heads = 2;
  CGTGait model(c, 13);
  // Move off the zero-bias start, where ReLU inputs sit exactly on the kink.
  jitter_zero_initialised(model.registry().parameters(), 0.1, 2);
  std::mt19937_64 rng(8);
  for (auto& p : model.prototypes_p) p = normalize_rows(random_tensor({kClasses, kFREmbed}, rng));
  for (auto& p : model.prototypes_m) p = normalize_rows(random_tensor({kClasses, kFREmbed}, rng));
  auto seqs = generate_dataset({1, 0, 1, 0}, 5);
  for (auto& s : seqs) s = resample(s);
  const Batch b = make_batch(seqs);
  auto loss = [&] { return model.loss(model.forward(b), b.labels, b.affective).total; };
  GradCheckOptions opt;
  opt.samples_per_parameter = 3;
  opt.loss_scaled_floor = 1e-6;
  out.push_back({"network", "total_loss", grad_check(loss, model.registry().parameters(), opt), 1e-3});
}

}  // namespace

const std::vector<std::string>& gradient_suite_modules() {
  static const std::vector<std::string> names = {"tensor", "graph", "transformer", "bcsf", "network"};
  return names;
}

std::vector<GradSuiteEntry> run_gradient_suite(std::string_view module, std::size_t seeds) {
  const auto& names = gradient_suite_modules();
  if (module != "all" && std::find(names.begin(), names.end(), module) == names.end()) {
    throw std::invalid_argument("unknown gradient module '" + std::string(module) +
                                "' (all|tensor|graph|transformer|bcsf|network)");
  }
  const auto want = [&](std::string_view m) { return module == "all" || module == m; };
  std::vector<GradSuiteEntry> out;
  if (want("tensor")) tensor_module(out, seeds);
  if (want("graph")) graph_module(out);
  if (want("transformer")) transformer_module(out);
  if (want("bcsf")) bcsf_module(out);
  if (want("network")) network_module(out);
  return out;
}

}  // namespace cgt
