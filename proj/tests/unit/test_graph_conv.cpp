#include "cgtgait/graph_conv.hpp"
#include "cgtgait/grad_check.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cgt;
using cgt::test::max_abs_diff;
using cgt::test::random_tensor;

TEST_CASE("physical adjacency partitions") {
  const auto& topo = SkeletonTopology::standard();
  const auto a = build_physical_adjacency(topo);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) CHECK(a[0].at({i, j}) == (i == j ? 1.0 : 0.0));

  const auto parts = physical_partitions(topo);
  std::size_t nonzero = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < 16; ++j) {
      const double in = parts[1].at({i, j}), out = parts[2].at({i, j});
      CHECK(in * out == 0.0);
      const double sym = in + out + parts[1].at({j, i}) + parts[2].at({j, i});
      bool edge = false;
      for (auto [u, v] : topo.edges) edge = edge || (u == i && v == j) || (u == j && v == i);
      CHECK(sym == (edge ? 2.0 : 0.0));
      nonzero += (in != 0.0) + (out != 0.0);
      // Normalized entries carry the same support.
      CHECK((a[1].at({i, j}) != 0.0) == (in != 0.0));
    }
  }
  CHECK(nonzero == 30);
  // Neck (degree 4) to head (degree 1): 1/sqrt(4*1).
  CHECK(a[1].at({joint::kHead, joint::kNeck}) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("two-node chain") {
  SkeletonTopology chain;
  chain.names = {"parent", "child"};
  chain.edges = {{0, 1}};
  const auto p = physical_partitions(chain);
  CHECK(p[1].at({1, 0}) == 1.0);
  CHECK(p[1].at({0, 1}) == 0.0);
  CHECK(p[1].at({0, 0}) == 0.0);
  CHECK(p[1].at({1, 1}) == 0.0);
  CHECK(p[2].at({0, 1}) == 1.0);

  SkeletonTopology broken = chain;
  broken.names.push_back("orphan");
  CHECK_THROWS_AS(build_physical_adjacency(broken), std::invalid_argument);
}

TEST_CASE("adaptive adjacency") {
  ParameterRegistry reg(1);
  GraphLayer g(reg, "g", 6, 8, build_physical_adjacency(SkeletonTopology::standard()));
  for (std::size_t k = 0; k < kSubsets; ++k) {
    CHECK(reg.find("g.k" + std::to_string(k) + ".B") != nullptr);
    for (double v : g.b[k].data()) CHECK(v == 0.0);
  }

  const auto zero = g.adaptive_adjacency(Tensor({2, 6, 5, 16}));
  for (const auto& c : zero) {
    CHECK(c.shape() == Shape{2, 16, 16});
    for (double v : c.data()) CHECK(v == doctest::Approx(1.0 / 16).epsilon(1e-15));
  }

  std::mt19937_64 rng(2);
  const Tensor f = random_tensor({2, 6, 5, 16}, rng, -3, 3);
  const auto c = g.adaptive_adjacency(f);
  for (const auto& m : c) {
    for (std::size_t r = 0; r < 2 * 16; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 16; ++j) s += m.data()[r * 16 + j];
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }

  const auto perm = test::random_permutation(16, rng);
  const auto cp = g.adaptive_adjacency(test::permute_last(f, perm));
  for (std::size_t k = 0; k < kSubsets; ++k) {
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j)
          CHECK(std::abs(cp[k].at({b, i, j}) - c[k].at({b, perm[i], perm[j]})) < 1e-12);
  }
}

TEST_CASE("graph_forward collapses to 2 f") {
  ParameterRegistry reg(3);
  auto phys = build_physical_adjacency(SkeletonTopology::standard());
  phys[1] = Tensor({16, 16});
  phys[2] = Tensor({16, 16});
  GraphLayer g(reg, "g", 5, 5, phys, false);
  std::vector<double> eye(25, 0.0);
  for (std::size_t i = 0; i < 5; ++i) eye[i * 5 + i] = 1.0;
  for (std::size_t k = 0; k < kSubsets; ++k) test::assign(g.subset_w[k], eye);
  test::assign(g.residual_w, eye);
  std::mt19937_64 rng(4);
  const Tensor f = random_tensor({2, 5, 7, 16}, rng);
  const Tensor out = g.forward(f);
  CHECK(max_abs_diff(out, scale(f, 2.0)) < 1e-12);
}

TEST_CASE("graph_forward shape") {
  ParameterRegistry reg(5);
  GraphLayer g(reg, "g", 3, 64, build_physical_adjacency(SkeletonTopology::standard()));
  std::mt19937_64 rng(6);
  CHECK(g.forward(random_tensor({1, 3, 48, 16}, rng)).shape() == Shape{1, 64, 48, 16});
  CHECK_THROWS_AS(g.forward(random_tensor({1, 4, 48, 16}, rng)), ShapeError);
}

TEST_CASE("graph_forward is linear with frozen C") {
  ParameterRegistry reg(7);
  GraphLayer g(reg, "g", 4, 6, build_physical_adjacency(SkeletonTopology::standard()));
  std::mt19937_64 rng(8);
  for (auto& bk : g.b) {
    const Tensor r = random_tensor({16, 16}, rng, -0.1, 0.1);
    test::assign(bk, std::vector<double>(r.data().begin(), r.data().end()));
  }
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = random_tensor({2, 4, 6, 16}, rng), y = random_tensor({2, 4, 6, 16}, rng);
    const auto c = g.adaptive_adjacency(random_tensor({2, 4, 6, 16}, rng));
    const double alpha = 0.7, beta = -1.3;
    // The biases are affine, so compare against g(0).
    const Tensor g0 = g.forward_with(Tensor(x.shape()), c);
    const Tensor lhs = sub(g.forward_with(add(scale(x, alpha), scale(y, beta)), c), g0);
    const Tensor rhs = add(scale(sub(g.forward_with(x, c), g0), alpha), scale(sub(g.forward_with(y, c), g0), beta));
    double scale_ref = 0.0;
    for (double v : rhs.data()) scale_ref = std::max(scale_ref, std::abs(v));
    CHECK(max_abs_diff(lhs, rhs) <= 1e-6 * scale_ref);
  }
}

TEST_CASE("graph_forward is joint-permutation equivariant") {
  std::mt19937_64 rng(9);
  const auto phys = build_physical_adjacency(SkeletonTopology::standard());
  ParameterRegistry r1(10), r2(10);
  GraphLayer g(r1, "g", 4, 6, phys);
  const auto perm = test::random_permutation(16, rng);
  AdjacencyArray phys_p;
  for (std::size_t k = 0; k < kSubsets; ++k) phys_p[k] = test::conjugate(phys[k], perm);
  GraphLayer gp(r2, "g", 4, 6, phys_p);
  for (std::size_t k = 0; k < kSubsets; ++k) {
    const Tensor bk = random_tensor({16, 16}, rng, -0.2, 0.2);
    test::assign(g.b[k], std::vector<double>(bk.data().begin(), bk.data().end()));
    const Tensor bp = test::conjugate(bk, perm);
    test::assign(gp.b[k], std::vector<double>(bp.data().begin(), bp.data().end()));
  }
  const Tensor f = random_tensor({2, 4, 6, 16}, rng);
  const Tensor out = g.forward(f);
  const Tensor out_p = gp.forward(test::permute_last(f, perm));
  CHECK(max_abs_diff(out_p, test::permute_last(out, perm)) < 1e-6);
}

TEST_CASE("graph_forward gradients") {
  ParameterRegistry reg(11);
  GraphLayer g(reg, "g", 3, 4, build_physical_adjacency(SkeletonTopology::standard()));
  std::mt19937_64 rng(12);
  for (auto& p : reg.parameters()) {
    // Move away from the all-zero start so every path carries signal.
    const Tensor r = random_tensor(p.tensor.shape(), rng, -0.5, 0.5);
    test::assign(p.tensor, std::vector<double>(r.data().begin(), r.data().end()));
  }
  const Tensor f = random_tensor({2, 3, 4, 16}, rng);
  const Tensor w = random_tensor({2, 4, 4, 16}, rng);
  auto loss = [&] { return sum(mul(g.forward(f), w)); };
  const auto res = grad_check(loss, reg.parameters(), {1e-5, 12, 1});
  CHECK_MESSAGE(res.max_relative_error < 1e-4, res.worst_parameter);
}
