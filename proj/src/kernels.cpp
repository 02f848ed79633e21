#include "cgtgait/kernels.hpp"

#include <cblas.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace cgt::kernels {

namespace detail {
void exp_inplace(double* x, std::size_t n);
}

namespace {

// The parallel kernels split work across OpenMP threads themselves; BLAS
// calls issued from inside those regions must stay single-threaded.
const bool g_blas_single_thread = [] {
  openblas_set_num_threads(1);
  return true;
}();

// [tk, channels] head slice -> [hd, tk], times `scale`.
void transpose_head(const AttentionDims& d, std::size_t hd, const double* src, double scale,
                    double* dst) {
  for (std::size_t j = 0; j < d.tk; ++j) {
    for (std::size_t c = 0; c < hd; ++c) dst[c * d.tk + j] = src[j * d.channels + c] * scale;
  }
}

void scores_row(const AttentionDims& d, std::size_t hd, const double* qi, const double* kt,
                double* p) {
  std::fill(p, p + d.tk, 0.0);
  for (std::size_t c = 0; c < hd; ++c) {
    const double qc = qi[c];
    const double* ktc = kt + c * d.tk;
#pragma omp simd
    for (std::size_t j = 0; j < d.tk; ++j) p[j] += qc * ktc[j];
  }
}

// Per-thread accumulators summed in thread order after the parallel region,
// so reductions are bit-reproducible for a fixed thread count.
class Partials {
 public:
  Partials(std::size_t size, bool enabled)
      : size_(enabled ? size : 0), buffers_(static_cast<std::size_t>(omp_get_max_threads())) {}
  std::vector<double>& local() {
    auto& buf = buffers_[static_cast<std::size_t>(omp_get_thread_num())];
    if (buf.size() != size_) buf.assign(size_, 0.0);
    return buf;
  }
  void reduce_into(double* target) const {
    if (!target) return;
    for (const auto& buf : buffers_) {
      for (std::size_t i = 0; i < buf.size(); ++i) target[i] += buf[i];
    }
  }

 private:
  std::size_t size_;
  std::vector<std::vector<double>> buffers_;
};

}  // namespace

int thread_count() { return omp_get_max_threads(); }

void gemm(const GemmArgs& g, const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double* c, std::size_t ldc) {
  if (g.m == 0 || g.n == 0) return;
  if (g.k == 0) {
    for (std::size_t i = 0; i < g.m; ++i) {
      for (std::size_t j = 0; j < g.n; ++j) c[i * ldc + j] *= g.beta;
    }
    return;
  }
  cblas_dgemm(CblasRowMajor, g.trans_a ? CblasTrans : CblasNoTrans,
              g.trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(g.m), static_cast<int>(g.n),
              static_cast<int>(g.k), g.alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
              g.beta, c, static_cast<int>(ldc));
}

void gemm_batched(std::size_t batch, const GemmArgs& g, const double* a, std::size_t stride_a,
                  std::size_t lda, const double* b, std::size_t stride_b, std::size_t ldb, double* c,
                  std::size_t stride_c, std::size_t ldc) {
  const long nb = static_cast<long>(batch);
#pragma omp parallel for schedule(static) if (nb > 1)
  for (long i = 0; i < nb; ++i) {
    const auto u = static_cast<std::size_t>(i);
    gemm(g, a + u * stride_a, lda, b + u * stride_b, ldb, c + u * stride_c, ldc);
  }
}

void softmax_forward(std::size_t outer, std::size_t n, std::size_t inner, const double* x,
                     double* y) {
  const long rows = static_cast<long>(outer * inner);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < rows; ++r) {
    const std::size_t o = static_cast<std::size_t>(r) / inner;
    const std::size_t in = static_cast<std::size_t>(r) % inner;
    const double* xs = x + o * n * inner + in;
    double* ys = y + o * n * inner + in;
    double mx = xs[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xs[i * inner]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ys[i * inner] = std::exp(xs[i * inner] - mx);
      sum += ys[i * inner];
    }
    const double inv = 1.0 / sum;
    for (std::size_t i = 0; i < n; ++i) ys[i * inner] *= inv;
  }
}

void softmax_backward(std::size_t outer, std::size_t n, std::size_t inner, const double* y,
                      const double* dy, double* dx) {
  const long rows = static_cast<long>(outer * inner);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < rows; ++r) {
    const std::size_t base =
        (static_cast<std::size_t>(r) / inner) * n * inner + static_cast<std::size_t>(r) % inner;
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += y[base + i * inner] * dy[base + i * inner];
    for (std::size_t i = 0; i < n; ++i) {
      dx[base + i * inner] += y[base + i * inner] * (dy[base + i * inner] - dot);
    }
  }
}

void log_softmax_forward(std::size_t outer, std::size_t n, std::size_t inner, const double* x,
                         double* y) {
  const long rows = static_cast<long>(outer * inner);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < rows; ++r) {
    const std::size_t base =
        (static_cast<std::size_t>(r) / inner) * n * inner + static_cast<std::size_t>(r) % inner;
    double mx = x[base];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[base + i * inner]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::exp(x[base + i * inner] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t i = 0; i < n; ++i) y[base + i * inner] = x[base + i * inner] - lse;
  }
}

void log_softmax_backward(std::size_t outer, std::size_t n, std::size_t inner, const double* y,
                          const double* dy, double* dx) {
  const long rows = static_cast<long>(outer * inner);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < rows; ++r) {
    const std::size_t base =
        (static_cast<std::size_t>(r) / inner) * n * inner + static_cast<std::size_t>(r) % inner;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += dy[base + i * inner];
    for (std::size_t i = 0; i < n; ++i) {
      dx[base + i * inner] += dy[base + i * inner] - std::exp(y[base + i * inner]) * sum;
    }
  }
}

void layer_norm_forward(std::size_t outer, std::size_t n, std::size_t inner, const double* x,
                        const double* gamma, const double* beta, double eps, double* y,
                        double* mean, double* rstd) {
  const long rows = static_cast<long>(outer * inner);
  const double inv_n = 1.0 / static_cast<double>(n);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < rows; ++r) {
    const std::size_t base =
        (static_cast<std::size_t>(r) / inner) * n * inner + static_cast<std::size_t>(r) % inner;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += x[base + i * inner];
    mu *= inv_n;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = x[base + i * inner] - mu;
      var += d * d;
    }
    const double rs = 1.0 / std::sqrt(var * inv_n + eps);
    for (std::size_t i = 0; i < n; ++i) {
      y[base + i * inner] = (x[base + i * inner] - mu) * rs * gamma[i] + beta[i];
    }
    mean[r] = mu;
    rstd[r] = rs;
  }
}

void layer_norm_backward(std::size_t outer, std::size_t n, std::size_t inner, const double* x,
                         const double* gamma, const double* mean, const double* rstd,
                         const double* dy, double* dx, double* dgamma, double* dbeta) {
  const long rows = static_cast<long>(outer * inner);
  const double inv_n = 1.0 / static_cast<double>(n);
  Partials pg(n, dgamma != nullptr), pb(n, dbeta != nullptr);
#pragma omp parallel
  {
    auto& local_dgamma = pg.local();
    auto& local_dbeta = pb.local();
#pragma omp for schedule(static)
    for (long r = 0; r < rows; ++r) {
      const std::size_t base =
          (static_cast<std::size_t>(r) / inner) * n * inner + static_cast<std::size_t>(r) % inner;
      const double mu = mean[r];
      const double rs = rstd[r];
      double sum_g = 0.0;
      double sum_gx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = base + i * inner;
        const double xhat = (x[idx] - mu) * rs;
        const double gi = dy[idx] * gamma[i];
        sum_g += gi;
        sum_gx += gi * xhat;
        if (dgamma) local_dgamma[i] += dy[idx] * xhat;
        if (dbeta) local_dbeta[i] += dy[idx];
      }
      if (dx) {
        sum_g *= inv_n;
        sum_gx *= inv_n;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t idx = base + i * inner;
          const double xhat = (x[idx] - mu) * rs;
          dx[idx] += rs * (dy[idx] * gamma[i] - sum_g - xhat * sum_gx);
        }
      }
    }
  }
  pg.reduce_into(dgamma);
  pb.reduce_into(dbeta);
}

void attention_forward(const AttentionDims& d, const double* q, const double* k, const double* v,
                       double* out, double* lse) {
  const std::size_t hd = d.channels / d.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const long units = static_cast<long>(d.groups * d.heads);
#pragma omp parallel
  {
    // Head slices of K and V transposed to [hd, tk] so the inner loops run
    // contiguously over key positions.
    std::vector<double> kt(hd * d.tk), vt(hd * d.tk), p(d.tk);
#pragma omp for schedule(static)
    for (long u = 0; u < units; ++u) {
      const std::size_t g = static_cast<std::size_t>(u) / d.heads;
      const std::size_t h = static_cast<std::size_t>(u) % d.heads;
      const double* qg = q + g * d.tq * d.channels + h * hd;
      const double* kg = k + g * d.tk * d.channels + h * hd;
      const double* vg = v + g * d.tk * d.channels + h * hd;
      double* og = out + g * d.tq * d.channels + h * hd;
      transpose_head(d, hd, kg, scale, kt.data());
      transpose_head(d, hd, vg, 1.0, vt.data());
      for (std::size_t i = 0; i < d.tq; ++i) {
        scores_row(d, hd, qg + i * d.channels, kt.data(), p.data());
        double mx = p[0];
        for (std::size_t j = 1; j < d.tk; ++j) mx = std::max(mx, p[j]);
        for (std::size_t j = 0; j < d.tk; ++j) p[j] -= mx;
        detail::exp_inplace(p.data(), d.tk);
        double sum = 0.0;
        for (std::size_t j = 0; j < d.tk; ++j) sum += p[j];
        lse[static_cast<std::size_t>(u) * d.tq + i] = mx + std::log(sum);
        const double inv = 1.0 / sum;
        for (std::size_t c = 0; c < hd; ++c) {
          const double* vtc = vt.data() + c * d.tk;
          double acc = 0.0;
#pragma omp simd reduction(+ : acc)
          for (std::size_t j = 0; j < d.tk; ++j) acc += p[j] * vtc[j];
          og[i * d.channels + c] = acc * inv;
        }
      }
    }
  }
}

void attention_backward(const AttentionDims& d, const double* q, const double* k, const double* v,
                        const double* lse, const double* dout, double* dq, double* dk,
                        double* dv) {
  const std::size_t hd = d.channels / d.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const long units = static_cast<long>(d.groups * d.heads);
#pragma omp parallel
  {
    std::vector<double> kt(hd * d.tk), kst(hd * d.tk), vt(hd * d.tk), dkt(hd * d.tk),
        dvt(hd * d.tk), p(d.tk), ds(d.tk);
#pragma omp for schedule(static)
    for (long u = 0; u < units; ++u) {
      const std::size_t g = static_cast<std::size_t>(u) / d.heads;
      const std::size_t h = static_cast<std::size_t>(u) % d.heads;
      const double* qg = q + g * d.tq * d.channels + h * hd;
      const double* kg = k + g * d.tk * d.channels + h * hd;
      const double* vg = v + g * d.tk * d.channels + h * hd;
      const double* dog = dout + g * d.tq * d.channels + h * hd;
      transpose_head(d, hd, kg, 1.0, kt.data());
      transpose_head(d, hd, kg, scale, kst.data());
      transpose_head(d, hd, vg, 1.0, vt.data());
      std::fill(dkt.begin(), dkt.end(), 0.0);
      std::fill(dvt.begin(), dvt.end(), 0.0);
      for (std::size_t i = 0; i < d.tq; ++i) {
        scores_row(d, hd, qg + i * d.channels, kst.data(), p.data());
        const double l = lse[static_cast<std::size_t>(u) * d.tq + i];
        for (std::size_t j = 0; j < d.tk; ++j) p[j] -= l;
        detail::exp_inplace(p.data(), d.tk);
        std::fill(ds.begin(), ds.end(), 0.0);
        for (std::size_t c = 0; c < hd; ++c) {
          const double go = dog[i * d.channels + c];
          const double* vtc = vt.data() + c * d.tk;
          double* dvtc = dvt.data() + c * d.tk;
#pragma omp simd
          for (std::size_t j = 0; j < d.tk; ++j) {
            ds[j] += go * vtc[j];
            dvtc[j] += go * p[j];
          }
        }
        double dot = 0.0;
        for (std::size_t j = 0; j < d.tk; ++j) dot += p[j] * ds[j];
        for (std::size_t j = 0; j < d.tk; ++j) ds[j] = p[j] * (ds[j] - dot) * scale;
        for (std::size_t c = 0; c < hd; ++c) {
          const double qc = qg[i * d.channels + c];
          const double* ktc = kt.data() + c * d.tk;
          double* dktc = dkt.data() + c * d.tk;
          double acc = 0.0;
#pragma omp simd reduction(+ : acc)
          for (std::size_t j = 0; j < d.tk; ++j) {
            acc += ds[j] * ktc[j];
            dktc[j] += ds[j] * qc;
          }
          if (dq) dq[(g * d.tq + i) * d.channels + h * hd + c] += acc;
        }
      }
      for (std::size_t j = 0; j < d.tk; ++j) {
        for (std::size_t c = 0; c < hd; ++c) {
          if (dk) dk[(g * d.tk + j) * d.channels + h * hd + c] += dkt[c * d.tk + j];
          if (dv) dv[(g * d.tk + j) * d.channels + h * hd + c] += dvt[c * d.tk + j];
        }
      }
    }
  }
}

namespace {

// Unfolds one sample [c_in, frames, joints] into [c_in * kernel, out_frames * joints].
void im2col(const ConvDims& d, const double* x, double* cols) {
  const std::size_t to = d.out_frames();
  for (std::size_t ci = 0; ci < d.c_in; ++ci) {
    for (std::size_t kk = 0; kk < d.kernel; ++kk) {
      double* row = cols + (ci * d.kernel + kk) * to * d.joints;
      for (std::size_t t = 0; t < to; ++t) {
        const long src = static_cast<long>(t * d.stride + kk) - static_cast<long>(d.padding);
        double* dst = row + t * d.joints;
        if (src < 0 || src >= static_cast<long>(d.frames)) {
          std::fill(dst, dst + d.joints, 0.0);
        } else {
          const double* s = x + (ci * d.frames + static_cast<std::size_t>(src)) * d.joints;
          std::copy(s, s + d.joints, dst);
        }
      }
    }
  }
}

void col2im_add(const ConvDims& d, const double* cols, double* dx) {
  const std::size_t to = d.out_frames();
  for (std::size_t ci = 0; ci < d.c_in; ++ci) {
    for (std::size_t kk = 0; kk < d.kernel; ++kk) {
      const double* row = cols + (ci * d.kernel + kk) * to * d.joints;
      for (std::size_t t = 0; t < to; ++t) {
        const long src = static_cast<long>(t * d.stride + kk) - static_cast<long>(d.padding);
        if (src < 0 || src >= static_cast<long>(d.frames)) continue;
        double* dst = dx + (ci * d.frames + static_cast<std::size_t>(src)) * d.joints;
        const double* s = row + t * d.joints;
        for (std::size_t n = 0; n < d.joints; ++n) dst[n] += s[n];
      }
    }
  }
}

bool is_plain_pointwise(const ConvDims& d) {
  return d.kernel == 1 && d.stride == 1 && d.padding == 0;
}

}  // namespace

void conv_forward(const ConvDims& d, const double* x, const double* w, const double* bias,
                  double* y) {
  const std::size_t to = d.out_frames();
  const std::size_t cols_rows = d.c_in * d.kernel;
  const std::size_t cols_n = to * d.joints;
  const long nb = static_cast<long>(d.batch);
#pragma omp parallel
  {
    std::vector<double> cols(is_plain_pointwise(d) ? 0 : cols_rows * cols_n);
#pragma omp for schedule(static)
    for (long bi = 0; bi < nb; ++bi) {
      const auto b = static_cast<std::size_t>(bi);
      const double* xb = x + b * d.c_in * d.frames * d.joints;
      double* yb = y + b * d.c_out * cols_n;
      const double* src = xb;
      if (!is_plain_pointwise(d)) {
        im2col(d, xb, cols.data());
        src = cols.data();
      }
      gemm({false, false, d.c_out, cols_n, cols_rows, 1.0, 0.0}, w, cols_rows, src, cols_n, yb,
           cols_n);
      if (bias) {
        for (std::size_t co = 0; co < d.c_out; ++co) {
          double* row = yb + co * cols_n;
          const double bv = bias[co];
          for (std::size_t i = 0; i < cols_n; ++i) row[i] += bv;
        }
      }
    }
  }
}

void conv_backward(const ConvDims& d, const double* x, const double* w, const double* dy,
                   double* dx, double* dw, double* dbias) {
  const std::size_t to = d.out_frames();
  const std::size_t cols_rows = d.c_in * d.kernel;
  const std::size_t cols_n = to * d.joints;
  const long nb = static_cast<long>(d.batch);
  const bool plain = is_plain_pointwise(d);
  Partials pw(d.c_out * cols_rows, dw != nullptr), pb(d.c_out, dbias != nullptr);
#pragma omp parallel
  {
    std::vector<double> cols(plain ? 0 : cols_rows * cols_n);
    std::vector<double> dcols(plain ? 0 : cols_rows * cols_n);
    auto& local_dw = pw.local();
    auto& local_db = pb.local();
#pragma omp for schedule(static)
    for (long bi = 0; bi < nb; ++bi) {
      const auto b = static_cast<std::size_t>(bi);
      const double* xb = x + b * d.c_in * d.frames * d.joints;
      const double* dyb = dy + b * d.c_out * cols_n;
      if (dbias) {
        for (std::size_t co = 0; co < d.c_out; ++co) {
          const double* row = dyb + co * cols_n;
          double s = 0.0;
          for (std::size_t i = 0; i < cols_n; ++i) s += row[i];
          local_db[co] += s;
        }
      }
      const double* src = xb;
      if (!plain && dw) {
        im2col(d, xb, cols.data());
        src = cols.data();
      }
      if (dw) {
        gemm({false, true, d.c_out, cols_rows, cols_n, 1.0, 1.0}, dyb, cols_n, src, cols_n,
             local_dw.data(), cols_rows);
      }
      if (dx) {
        double* dxb = dx + b * d.c_in * d.frames * d.joints;
        if (plain) {
          gemm({true, false, cols_rows, cols_n, d.c_out, 1.0, 1.0}, w, cols_rows, dyb, cols_n, dxb,
               cols_n);
        } else {
          gemm({true, false, cols_rows, cols_n, d.c_out, 1.0, 0.0}, w, cols_rows, dyb, cols_n,
               dcols.data(), cols_n);
          col2im_add(d, dcols.data(), dxb);
        }
      }
    }
  }
  pw.reduce_into(dw);
  pb.reduce_into(dbias);
}

}  // namespace cgt::kernels
