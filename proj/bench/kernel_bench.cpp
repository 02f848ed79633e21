// Times each parallel kernel against its serial reference at the shapes of
// the full-width model (batch 8) and reports the largest output difference.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cgtgait/kernels.hpp"

namespace k = cgt::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double seconds_per_call(const std::function<void()>& f, int reps) {
  f();
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct Case {
  std::string name;
  std::function<void()> parallel, reference;
  const std::vector<double>* out_parallel;
  const std::vector<double>* out_reference;
  bool accumulates = false;  // backward kernels add into their outputs
  std::vector<std::vector<double>*> reset;
};

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 5;
  std::mt19937_64 rng(7);
  const std::size_t batch = 8, joints = 16, frames = 48, c = 64;
  const std::size_t tokens = batch * joints * frames;

  // linear-style gemm: [tokens, c] x [c, 4c]
  const auto ga = random_vec(tokens * c, rng), gb = random_vec(c * 4 * c, rng);
  std::vector<double> gc_p(tokens * 4 * c), gc_r(tokens * 4 * c);
  const k::GemmArgs gemm{false, false, tokens, 4 * c, c, 1.0, 0.0};

  const std::size_t rows = tokens, n = c;
  const auto sx = random_vec(rows * n, rng), sdy = random_vec(rows * n, rng);
  std::vector<double> sy_p(rows * n), sy_r(rows * n), sdx_p(rows * n), sdx_r(rows * n);

  const auto gamma = random_vec(n, rng), beta = random_vec(n, rng);
  std::vector<double> ly_p(rows * n), ly_r(rows * n), mean(rows), rstd(rows), mean_r(rows), rstd_r(rows);
  std::vector<double> ldx_p(rows * n), ldx_r(rows * n), dg(n), db(n);

  const k::AttentionDims ad{batch * joints, frames, frames, c, 8};
  const auto q = random_vec(tokens * c, rng), kk = random_vec(tokens * c, rng), v = random_vec(tokens * c, rng);
  const auto dout = random_vec(tokens * c, rng);
  std::vector<double> ao_p(tokens * c), ao_r(tokens * c), lse_p(batch * joints * 8 * frames),
      lse_r(lse_p.size());
  std::vector<double> dq_p(tokens * c), dq_r(tokens * c), dk(tokens * c), dv(tokens * c);

  const k::ConvDims cd{batch, c, c, frames, joints, 1, 9, 4};
  const auto cx = random_vec(batch * c * frames * joints, rng), cw = random_vec(c * c * 9, rng),
             cb = random_vec(c, rng);
  std::vector<double> cy_p(batch * c * cd.out_frames() * joints), cy_r(cy_p.size());

  std::vector<Case> cases = {
      {"gemm [6144x64]x[64x256]",
       [&] { k::gemm(gemm, ga.data(), c, gb.data(), 4 * c, gc_p.data(), 4 * c); },
       [&] { k::reference::gemm(gemm, ga.data(), c, gb.data(), 4 * c, gc_r.data(), 4 * c); }, &gc_p, &gc_r},
      {"softmax forward", [&] { k::softmax_forward(rows, n, 1, sx.data(), sy_p.data()); },
       [&] { k::reference::softmax_forward(rows, n, 1, sx.data(), sy_r.data()); }, &sy_p, &sy_r},
      {"softmax backward", [&] { k::softmax_backward(rows, n, 1, sy_p.data(), sdy.data(), sdx_p.data()); },
       [&] { k::reference::softmax_backward(rows, n, 1, sy_r.data(), sdy.data(), sdx_r.data()); }, &sdx_p, &sdx_r,
       true, {&sdx_p, &sdx_r}},
      {"layer_norm forward",
       [&] { k::layer_norm_forward(rows, n, 1, sx.data(), gamma.data(), beta.data(), 1e-5, ly_p.data(), mean.data(), rstd.data()); },
       [&] { k::reference::layer_norm_forward(rows, n, 1, sx.data(), gamma.data(), beta.data(), 1e-5, ly_r.data(), mean_r.data(), rstd_r.data()); },
       &ly_p, &ly_r},
      {"layer_norm backward",
       [&] { k::layer_norm_backward(rows, n, 1, sx.data(), gamma.data(), mean.data(), rstd.data(), sdy.data(), ldx_p.data(), dg.data(), db.data()); },
       [&] { k::reference::layer_norm_backward(rows, n, 1, sx.data(), gamma.data(), mean_r.data(), rstd_r.data(), sdy.data(), ldx_r.data(), dg.data(), db.data()); },
       &ldx_p, &ldx_r, true, {&ldx_p, &ldx_r}},
      {"attention forward h=8", [&] { k::attention_forward(ad, q.data(), kk.data(), v.data(), ao_p.data(), lse_p.data()); },
       [&] { k::reference::attention_forward(ad, q.data(), kk.data(), v.data(), ao_r.data(), lse_r.data()); }, &ao_p, &ao_r},
      {"attention backward h=8",
       [&] { k::attention_backward(ad, q.data(), kk.data(), v.data(), lse_p.data(), dout.data(), dq_p.data(), dk.data(), dv.data()); },
       [&] { k::reference::attention_backward(ad, q.data(), kk.data(), v.data(), lse_r.data(), dout.data(), dq_r.data(), dk.data(), dv.data()); },
       &dq_p, &dq_r, true, {&dq_p, &dq_r}},
      {"temporal conv k=9", [&] { k::conv_forward(cd, cx.data(), cw.data(), cb.data(), cy_p.data()); },
       [&] { k::reference::conv_forward(cd, cx.data(), cw.data(), cb.data(), cy_r.data()); }, &cy_p, &cy_r},
  };

  std::printf("threads %d, %d repetitions\n\n%-26s %12s %12s %8s %11s\n", k::thread_count(), reps, "kernel",
              "reference ms", "parallel ms", "speedup", "max |diff|");
  for (auto& cs : cases) {
    const double tr = seconds_per_call(cs.reference, reps);
    const double tp = seconds_per_call(cs.parallel, reps);
    double diff = 0.0;
    if (cs.accumulates) {
      // One clean call each so the accumulated outputs are comparable.
      for (auto* r : cs.reset) std::fill(r->begin(), r->end(), 0.0);
      cs.reference();
      cs.parallel();
    }
    diff = max_diff(*cs.out_parallel, *cs.out_reference);
    std::printf("%-26s %12.3f %12.3f %7.2fx %11.2e\n", cs.name.c_str(), tr * 1e3, tp * 1e3, tr / tp, diff);
  }
  return 0;
}
