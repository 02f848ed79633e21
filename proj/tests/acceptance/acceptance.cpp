// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--only N]... [--expect-fail N]... [--out DIR]
//
// Exit status is 0 when every criterion passes, except those named with
// --expect-fail, which must fail (an unexpected pass is reported as an error).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "../unit/test_util.hpp"
#include "CLI11.hpp"
#include "cgtgait/checkpoint.hpp"
#include "cgtgait/complexity.hpp"
#include "cgtgait/gradient_suite.hpp"
#include "cgtgait/trainer.hpp"

namespace fs = std::filesystem;
using namespace cgt;
using cgt::test::max_abs_diff;
using cgt::test::random_tensor;

#ifndef CGT_CONFIG_DIR
#define CGT_CONFIG_DIR "configs"
#endif

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

TrainConfig preset(const std::string& name) { return TrainConfig::from_file(fs::path(CGT_CONFIG_DIR) / name); }

// Direct evaluation of W_O(softmax(Q K^T / sqrt(C)) V) + b_O for one head.
std::vector<double> direct_attention(std::span<const double> x, std::size_t t, std::size_t c,
                                     const TransformerLayer& layer) {
  const auto lin = [&](std::span<const double> in, const Tensor& w) {
    std::vector<double> out(t * c, 0.0);
    const auto wd = w.data();
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t o = 0; o < c; ++o)
        for (std::size_t a = 0; a < c; ++a) out[i * c + o] += in[i * c + a] * wd[a * c + o];
    return out;
  };
  const auto q = lin(x, layer.wq), k = lin(x, layer.wk), v = lin(x, layer.wv);
  std::vector<double> mixed(t * c, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    std::vector<double> s(t);
    for (std::size_t j = 0; j < t; ++j) {
      double d = 0.0;
      for (std::size_t a = 0; a < c; ++a) d += q[i * c + a] * k[j * c + a];
      s[j] = d / std::sqrt(static_cast<double>(c));
    }
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (auto& e : s) z += (e = std::exp(e - mx));
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t a = 0; a < c; ++a) mixed[i * c + a] += s[j] / z * v[j * c + a];
  }
  auto out = lin(mixed, layer.wo);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t a = 0; a < c; ++a) out[i * c + a] += layer.bo.data()[a];
  return out;
}

void randomize(ParameterRegistry& reg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  for (auto& p : reg.parameters())
    for (auto& v : p.tensor.mutable_data()) v = d(rng);
}

Outcome gradient_suite() {
  const double t0 = cpu_seconds();
  const auto entries = run_gradient_suite("all");
  const double secs = cpu_seconds() - t0;
  double op_worst = 0.0, e2e = 0.0;
  std::string failed;
  for (const auto& e : entries) {
    double& worst = e.module == "network" ? e2e : op_worst;
    worst = std::max(worst, e.result.max_relative_error);
    if (!e.passed()) failed += " " + e.name;
  }
  const bool ok = failed.empty() && secs < 120.0;
  return {ok, fmt("%zu checks, worst op rel err %.2e (< 1e-4), end-to-end %.2e (< 1e-3), %.0f s CPU (< 120)%s",
                  entries.size(), op_worst, e2e, secs, failed.empty() ? "" : (" failing:" + failed).c_str())};
}

Outcome attention_oracle() {
  std::mt19937_64 rng(1);
  ParameterRegistry reg(2);
  TransformerLayer layer(reg, "t", 8, 12, 1, 1, false);
  randomize(reg, rng);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = random_tensor({3, 12, 8}, rng, -2, 2);
    const Tensor y = layer.mhsa(x);
    for (std::size_t g = 0; g < 3; ++g) {
      const auto ref = direct_attention(x.data().subspan(g * 96, 96), 12, 8, layer);
      worst = std::max(worst, max_abs_diff(y.data().subspan(g * 96, 96), ref));
    }
  }
  return {worst < 1e-6, fmt("max abs error %.2e over 10 inputs (< 1e-6)", worst)};
}

Outcome equivariance() {
  std::mt19937_64 rng(9);
  const auto phys = build_physical_adjacency(SkeletonTopology::standard());
  ParameterRegistry r1(10), r2(10);
  GraphLayer g(r1, "g", 4, 6, phys);
  const auto perm = test::random_permutation(kJoints, rng);
  AdjacencyArray phys_p;
  for (std::size_t k = 0; k < kSubsets; ++k) phys_p[k] = test::conjugate(phys[k], perm);
  GraphLayer gp(r2, "g", 4, 6, phys_p);
  for (std::size_t k = 0; k < kSubsets; ++k) {
    const Tensor bk = random_tensor({kJoints, kJoints}, rng, -0.2, 0.2);
    test::assign(g.b[k], std::vector<double>(bk.data().begin(), bk.data().end()));
    const Tensor bp = test::conjugate(bk, perm);
    test::assign(gp.b[k], std::vector<double>(bp.data().begin(), bp.data().end()));
  }
  const Tensor f = random_tensor({2, 4, 6, kJoints}, rng);
  const double graph_err = max_abs_diff(gp.forward(test::permute_last(f, perm)), test::permute_last(g.forward(f), perm));

  ParameterRegistry reg(11);
  TransformerLayer layer(reg, "t", 8, 10, 4, 1, false);
  randomize(reg, rng);
  const Tensor x = random_tensor({16, 10, 8}, rng);
  const auto tperm = test::random_permutation(10, rng);
  const auto permute_frames = [&](const Tensor& a) {
    return permute(test::permute_last(permute(a, {0, 2, 1}), tperm), {0, 2, 1});
  };
  const double attn_err = max_abs_diff(layer.mhsa(permute_frames(x)), permute_frames(layer.mhsa(x)));
  return {graph_err < 1e-6 && attn_err < 1e-6,
          fmt("graph joint permutation %.2e, mhsa frame permutation %.2e (< 1e-6)", graph_err, attn_err)};
}

Outcome shape_pipeline() {
  auto seqs = generate_dataset({1, 1, 0, 0}, 4);
  for (auto& s : seqs) s = resample(s);
  const Batch b = make_batch(seqs);
  const ModelConfig full = ModelConfig::full();
  std::vector<AblationVariant> variants;
  for (auto axis : {AblationAxis::kCgtOrder, AblationAxis::kFusionParts, AblationAxis::kBcsfPosition,
                    AblationAxis::kBlockCount, AblationAxis::kHeads}) {
    for (auto& v : ablation_variants(full, axis)) variants.push_back(v);
  }
  variants.push_back({"baseline", ModelConfig::baseline(full)});
  std::size_t ok = 0;
  double worst_sum = 0.0;
  std::string bad;
  for (const auto& v : variants) {
    const CGTGait model(v.model, 3);
    NoGradGuard no_grad;
    const auto out = model.forward(b);
    bool good = out.feature_p.shape() == Shape{2, 256, 12, kJoints} && out.feature_m.shape() == Shape{2, 256, 12, kJoints};
    for (const Tensor* prob : {&out.prob_p, &out.prob_m}) {
      for (std::size_t i = 0; i < prob->dim(0); ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < kClasses; ++c) s += prob->at({i, c});
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        good = good && std::abs(s - 1.0) < 1e-6;
      }
    }
    if (good) ++ok;
    else bad += " " + v.name;
  }
  return {ok == variants.size(), fmt("%zu/%zu variants give 256x12x16 features; worst |row sum - 1| %.1e%s", ok,
                                     variants.size(), worst_sum, bad.empty() ? "" : (" failing:" + bad).c_str())};
}

Outcome complexity_budget() {
  const auto full = count_complexity(ModelConfig::full());
  const double params = static_cast<double>(full.params), gflops = static_cast<double>(full.flops()) / 1e9;
  const bool params_ok = std::abs(params - 2.66e6) <= 0.25 * 2.66e6;
  const bool flops_ok = gflops >= 0.34 / 2.0 && gflops <= 0.34 * 2.0;

  std::vector<double> by_blocks;
  for (std::size_t n = 3; n <= 6; ++n) {
    ModelConfig c = ModelConfig::full();
    c.blocks = ModelConfig::block_plan(64, n);
    by_blocks.push_back(static_cast<double>(count_complexity(c).flops()) / 1e9);
  }
  bool ordered = true;
  for (std::size_t i = 1; i < by_blocks.size(); ++i) ordered = ordered && by_blocks[i - 1] < by_blocks[i];
  std::set<std::uint64_t> head_flops;
  for (std::size_t h : {1u, 2u, 4u, 8u, 16u}) {
    ModelConfig c = ModelConfig::full();
    c.heads = h;
    head_flops.insert(count_complexity(c).flops());
  }
  const bool invariant = head_flops.size() == 1;
  return {params_ok && flops_ok && ordered && invariant,
          fmt("params %.3fM (%s, 2.66M +-25%%), FLOPs %.3fG (%s, 0.34G within 2x), blocks 3-6 %.3f<%.3f<%.3f<%.3fG (%s), "
              "heads 1-16 %s",
              params / 1e6, params_ok ? "ok" : "out", gflops, flops_ok ? "ok" : "out", by_blocks[0], by_blocks[1],
              by_blocks[2], by_blocks[3], ordered ? "strict" : "not strict",
              invariant ? "identical" : "differ")};
}

Outcome overfit() {
  TrainConfig c = preset("overfit.json");
  const double t0 = cpu_seconds();
  TrainOptions opts;
  opts.max_steps = 300;
  opts.stop_when = [](const EpochLog& l) { return l.test_accuracy == 1.0; };
  const auto r = train(c, opts);
  const double secs = cpu_seconds() - t0;
  const double acc = r.log.back().test_accuracy;
  return {acc == 1.0 && r.steps <= 300 && secs < 300.0,
          fmt("training accuracy %.3f on %zu samples after %zu steps (<= 300), %.0f s CPU (< 300)", acc,
              r.best_report.samples, r.steps, secs)};
}

Outcome synthetic_benchmark(const fs::path& out) {
  const TrainConfig full = preset("desk.json");
  TrainConfig base = full;
  base.model = ModelConfig::baseline(full.model);
  const auto data = full.data.load();
  const double t0 = cpu_seconds();
  TrainOptions of, ob;
  of.out_dir = out / "full";
  ob.out_dir = out / "baseline";
  const auto rf = train(full, data, of);
  const auto rb = train(base, data, ob);
  const double secs = cpu_seconds() - t0;
  const bool ok = rf.best_accuracy >= 0.90 && rf.best_accuracy > rb.best_accuracy && secs < 900.0;
  return {ok, fmt("full %.4f (epoch %zu, >= 0.90) vs baseline %.4f (epoch %zu) on %zu test samples, %zu epochs, "
                  "%.0f s CPU (< 900)",
                  rf.best_accuracy, rf.best_epoch, rb.best_accuracy, rb.best_epoch, rf.best_report.samples,
                  full.epochs, secs)};
}

Outcome loss_identities() {
  ModelConfig c;
  c.blocks = ModelConfig::block_plan(8, 4);
  c.heads = 2;
  CGTGait model(c, 5);
  for (auto& p : model.registry().parameters()) {
    if (p.name.rfind("head.", 0) == 0) test::fill(p.tensor, 0.0);
  }
  auto seqs = generate_dataset({1, 1, 1, 1}, 6);
  for (auto& s : seqs) s = resample(s);
  const Batch b = make_batch(seqs);
  const auto out = model.forward(b);
  const double ce = model.loss(out, b.labels, b.affective).ce.item();
  const double ce_err = std::abs(ce - 2.0 * std::log(4.0));

  const double mse = model.loss(out, b.labels, out.affective.detach()).mse.item();
  CGTGait fresh(c, 5);
  const auto out2 = fresh.forward(b);
  const double fr = fresh.loss(out2, b.labels, b.affective, {0.0}).fr.item();
  return {ce_err < 1e-6 && mse == 0.0 && fr == 0.0,
          fmt("|L_CE - 2 ln 4| %.1e (< 1e-6), L_MSE at b_aff = y_a %.1e, L_FR at lambda = 0 %.1e", ce_err, mse, fr)};
}

Outcome determinism() {
  TrainConfig c = preset("desk.json");
  c.epochs = 2;
  c.data.class_counts = {16, 16, 16, 16};
  const auto data = c.data.load();
  const auto a = train(c, data);
  const auto b = train(c, data);
  const bool loss_same = a.log[0].loss == b.log[0].loss && a.log[0].ce == b.log[0].ce;
  const bool conf_same = a.best_report.confusion == b.best_report.confusion;
  return {loss_same && conf_same, fmt("epoch-0 loss %.17g vs %.17g, confusion matrices %s", a.log[0].loss,
                                      b.log[0].loss, conf_same ? "identical" : "differ")};
}

Outcome ablation_harness(const fs::path& out) {
  const TrainConfig c = preset("ablation.json");
  std::size_t variants = 0;
  std::string bad;
  fs::create_directories(out);
  for (auto axis : {AblationAxis::kCgtOrder, AblationAxis::kFusionParts, AblationAxis::kBcsfPosition,
                    AblationAxis::kBlockCount, AblationAxis::kHeads}) {
    try {
      const AblationReport r = ablate(c, axis, 10);
      const auto path = out / (std::string(to_string(axis)) + ".json");
      std::ofstream(path) << r.to_json().dump(2) << "\n";
      const auto back = nlohmann::json::parse(std::ifstream(path));
      const auto expected = ablation_variants(c.model, axis).size();
      bool good = back["variants"].size() == expected && r.epochs == 10;
      for (const auto& row : back["variants"]) {
        good = good && row.contains("accuracy") && row.contains("macro_f1") && row.contains("flops");
      }
      variants += back["variants"].size();
      if (!good) bad += " " + std::string(to_string(axis));
    } catch (const std::exception& e) {
      bad += " " + std::string(to_string(axis)) + " (" + e.what() + ")";
    }
  }
  return {bad.empty(), fmt("5 axes, %zu variants trained 10 epochs each, JSON reports in %s%s", variants,
                           out.string().c_str(), bad.empty() ? "" : (", failing:" + bad).c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CGTGait acceptance criteria"};
  std::vector<int> only, expect_fail;
  std::string out_dir = (fs::temp_directory_path() / "cgtgait_acceptance").string();
  app.add_option("--only", only, "run only these criteria");
  app.add_option("--expect-fail", expect_fail, "criteria known to be unattainable");
  app.add_option("--out", out_dir, "directory for training and ablation artefacts");
  CLI11_PARSE(app, argc, argv);

  const fs::path out(out_dir);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"attention oracle", attention_oracle},
      {"equivariance", equivariance},
      {"shape pipeline", shape_pipeline},
      {"complexity budget", complexity_budget},
      {"overfit", overfit},
      {"synthetic benchmark", [&] { return synthetic_benchmark(out / "benchmark"); }},
      {"loss identities", loss_identities},
      {"determinism", determinism},
      {"ablation harness", [&] { return ablation_harness(out / "ablation"); }},
  };

  int status = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool expected_fail = std::find(expect_fail.begin(), expect_fail.end(), id) != expect_fail.end();
    std::printf("%s criterion %2d %-20s %s [%.0f s]%s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first,
                o.detail.c_str(), secs, expected_fail ? (o.pass ? " (unexpected pass)" : " (known)") : "");
    std::fflush(stdout);
    if (o.pass == expected_fail) status = 1;
  }
  return status;
}
