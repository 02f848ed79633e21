#include <filesystem>
#include <fstream>
#include <random>

#include "cgtgait/checkpoint.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cgt;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("cgtgait_test_" + name);
}

ModelConfig small() {
  ModelConfig c;
  c.blocks = ModelConfig::block_plan(4, 4);
  c.heads = 2;
  c.order = BlockOrder::kParallel;
  c.lambda = {0.25, 0.5};
  return c;
}

}  // namespace

TEST_CASE("checkpoint round trip is value-exact") {
  CGTGait model(small(), 21);
  std::mt19937_64 rng(3);
  // Values that do not survive a decimal round trip at default precision.
  for (auto& p : model.registry().parameters()) {
    for (double& x : p.tensor.mutable_data()) x = std::ldexp(std::uniform_real_distribution<double>(-1, 1)(rng), -7) / 3.0;
  }
  for (auto& p : model.prototypes_p) p = normalize_rows(test::random_tensor({kClasses, kFREmbed}, rng));
  for (auto& p : model.prototypes_m) p = normalize_rows(test::random_tensor({kClasses, kFREmbed}, rng));

  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(path, model, {{"epoch", 7}, {"accuracy", 0.5}});
  const auto ck = load_checkpoint(path);
  CHECK(ck.metadata["epoch"] == 7);
  CHECK(ck.model->seed() == 21);
  CHECK(ck.model->config().to_json() == model.config().to_json());
  const auto& a = model.registry().parameters();
  const auto& b = ck.model->registry().parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(test::max_abs_diff(a[i].tensor, b[i].tensor) == 0.0);
  }
  for (std::size_t i = 0; i < model.prototypes_p.size(); ++i) {
    CHECK(test::max_abs_diff(model.prototypes_p[i], ck.model->prototypes_p[i]) == 0.0);
    CHECK(test::max_abs_diff(model.prototypes_m[i], ck.model->prototypes_m[i]) == 0.0);
  }
  // Saving the loaded model reproduces the file byte for byte.
  const auto again = temp_path("roundtrip2.ckpt");
  save_checkpoint(again, *ck.model, ck.metadata);
  std::ifstream f1(path, std::ios::binary), f2(again, std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}

TEST_CASE("corrupt checkpoints are rejected with a reason") {
  CGTGait model(small(), 1);
  const auto path = temp_path("corrupt.ckpt");
  save_checkpoint(path, model);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& s) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  };

  write(bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated payload"), std::runtime_error);

  write(bytes + "x");
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("trailing bytes"), std::runtime_error);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  write(bad_magic);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("not a CGTGait checkpoint"), std::runtime_error);

  std::string bad_version = bytes;
  bad_version[8] = 9;
  write(bad_version);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"), std::runtime_error);

  CHECK_THROWS_AS(load_checkpoint(temp_path("missing.ckpt")), std::runtime_error);
  std::filesystem::remove(path);
}
