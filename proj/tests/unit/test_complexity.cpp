#include "cgtgait/complexity.hpp"
#include "cgtgait/ops.hpp"
#include "cgtgait/synthetic.hpp"
#include "doctest.h"

using namespace cgt;

namespace {

ModelConfig small(std::size_t width = 8) {
  ModelConfig c;
  c.blocks = ModelConfig::block_plan(width, 4);
  c.heads = 2;
  return c;
}

std::vector<ModelConfig> variants() {
  std::vector<ModelConfig> out;
  for (auto order : {BlockOrder::kGraphFirst, BlockOrder::kTransformerFirst, BlockOrder::kParallel}) {
    auto c = small();
    c.order = order;
    out.push_back(c);
  }
  for (int mask = 0; mask < 4; ++mask) {
    auto c = small();
    c.fusion = {(mask & 1) != 0, (mask & 2) != 0};
    out.push_back(c);
  }
  for (std::size_t pos : {1u, 3u, 4u}) {
    auto c = small();
    c.bcsf_position = pos;
    out.push_back(c);
  }
  for (std::size_t count : {3u, 5u, 6u}) {
    auto c = small();
    c.blocks = ModelConfig::block_plan(8, count);
    out.push_back(c);
  }
  auto nopos = small();
  nopos.positional = false;
  out.push_back(nopos);
  auto noaff = small();
  noaff.affective_head = false;
  out.push_back(noaff);
  out.push_back(ModelConfig::baseline(small()));
  return out;
}

}  // namespace

TEST_CASE("analytic parameter count matches the registry") {
  for (const auto& c : variants()) {
    CAPTURE(c.to_json().dump());
    CGTGait model(c, 0);
    CHECK(count_complexity(c).params == model.registry().scalar_count());
  }
  CGTGait full(ModelConfig::full(), 0);
  CHECK(count_complexity(ModelConfig::full()).params == full.registry().scalar_count());
}

TEST_CASE("analytic MACs match the operations executed in a forward pass") {
  auto seqs = generate_dataset({1, 1, 1, 0}, 3);
  for (auto& s : seqs) s = resample(s);
  const Batch b = make_batch(seqs);
  for (const auto& c : variants()) {
    CAPTURE(c.to_json().dump());
    CGTGait model(c, 0);
    NoGradGuard no_grad;
    reset_mac_count();
    model.forward(b);
    const auto r = count_complexity(c);
    CHECK(mac_count() == 3 * (r.macs + r.training_macs));
  }
}

TEST_CASE("full configuration lands near the 2.66M parameter target") {
  const auto r = count_complexity(ModelConfig::full());
  CHECK(r.params > 0.75 * 2.66e6);
  CHECK(r.params < 1.25 * 2.66e6);
  CHECK(r.flops() > r.macs);
  CHECK(r.training_macs > 0);
}

TEST_CASE("FLOPs grow strictly with block count and ignore the head count") {
  std::vector<std::uint64_t> flops;
  for (std::size_t count = 3; count <= 6; ++count) {
    auto c = ModelConfig::full();
    c.blocks = ModelConfig::block_plan(64, count);
    flops.push_back(count_complexity(c).flops());
  }
  for (std::size_t i = 1; i < flops.size(); ++i) CHECK(flops[i] > flops[i - 1]);

  const auto reference = count_complexity(ModelConfig::full());
  for (std::size_t h : {2u, 4u, 16u}) {
    auto c = ModelConfig::full();
    c.heads = h;
    const auto r = count_complexity(c);
    CHECK(r.flops() == reference.flops());
    CHECK(r.params == reference.params);
  }
}

TEST_CASE("doubling every width roughly quadruples the parameters") {
  const double p32 = static_cast<double>(count_complexity(small(32)).params);
  const double p64 = static_cast<double>(count_complexity(small(64)).params);
  const double ratio = p64 / p32;
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.0);
}

TEST_CASE("reports carry the convention and a per-layer table") {
  const auto r = count_complexity(small());
  const auto j = r.to_json();
  CHECK(j["convention"].get<std::string>() == kFlopConvention);
  CHECK(j["flops"].get<std::uint64_t>() == r.flops());
  CHECK(j["layers"].size() == r.layers.size());
  const std::string text = r.to_text();
  CHECK(text.find("posture.block1.gcn") != std::string::npos);
  CHECK(text.find("convention") != std::string::npos);
}
