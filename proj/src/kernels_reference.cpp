// Serial loop implementations. Kept deliberately naive: they are the oracle
// the parallel kernels are tested against.

#include <algorithm>
#include <cmath>
#include <vector>

#include "cgtgait/kernels.hpp"

namespace cgt::kernels::reference {

void gemm(const GemmArgs& g, const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < g.m; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < g.k; ++p) {
        const double av = g.trans_a ? a[p * lda + i] : a[i * lda + p];
        const double bv = g.trans_b ? b[j * ldb + p] : b[p * ldb + j];
        acc += av * bv;
      }
      double& out = c[i * ldc + j];
      out = g.alpha * acc + (g.beta == 0.0 ? 0.0 : g.beta * out);
    }
  }
}

void softmax_forward(std::size_t outer, std::size_t n, std::size_t inner, const double* x,
                     double* y) {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = x[base];
      for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[base + i * inner]);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        y[base + i * inner] = std::exp(x[base + i * inner] - mx);
        sum += y[base + i * inner];
      }
      for (std::size_t i = 0; i < n; ++i) y[base + i * inner] /= sum;
    }
  }
}

void softmax_backward(std::size_t outer, std::size_t n, std::size_t inner, const double* y,
                      const double* dy, double* dx) {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += y[base + i * inner] * dy[base + i * inner];
      for (std::size_t i = 0; i < n; ++i) {
        dx[base + i * inner] += y[base + i * inner] * (dy[base + i * inner] - dot);
      }
    }
  }
}

void layer_norm_forward(std::size_t outer, std::size_t n, std::size_t inner, const double* x,
                        const double* gamma, const double* beta, double eps, double* y,
                        double* mean, double* rstd) {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mu = 0.0;
      for (std::size_t i = 0; i < n; ++i) mu += x[base + i * inner];
      mu /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double dlt = x[base + i * inner] - mu;
        var += dlt * dlt;
      }
      var /= static_cast<double>(n);
      const double r = 1.0 / std::sqrt(var + eps);
      for (std::size_t i = 0; i < n; ++i) {
        y[base + i * inner] = (x[base + i * inner] - mu) * r * gamma[i] + beta[i];
      }
      mean[o * inner + in] = mu;
      rstd[o * inner + in] = r;
    }
  }
}

void layer_norm_backward(std::size_t outer, std::size_t n, std::size_t inner, const double* x,
                         const double* gamma, const double* mean, const double* rstd,
                         const double* dy, double* dx, double* dgamma, double* dbeta) {
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      const double mu = mean[o * inner + in];
      const double r = rstd[o * inner + in];
      double sum_g = 0.0;
      double sum_gx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = base + i * inner;
        const double xhat = (x[idx] - mu) * r;
        const double gi = dy[idx] * gamma[i];
        sum_g += gi;
        sum_gx += gi * xhat;
        if (dgamma) dgamma[i] += dy[idx] * xhat;
        if (dbeta) dbeta[i] += dy[idx];
      }
      if (!dx) continue;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = base + i * inner;
        const double xhat = (x[idx] - mu) * r;
        dx[idx] += r * (dy[idx] * gamma[i] - inv_n * sum_g - xhat * inv_n * sum_gx);
      }
    }
  }
}

namespace {

void attention_scores(const AttentionDims& d, std::size_t g, std::size_t h, std::size_t i,
                      const double* q, const double* k, double* scores) {
  const std::size_t hd = d.channels / d.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (std::size_t j = 0; j < d.tk; ++j) {
    double s = 0.0;
    for (std::size_t c = 0; c < hd; ++c) {
      s += q[(g * d.tq + i) * d.channels + h * hd + c] * k[(g * d.tk + j) * d.channels + h * hd + c];
    }
    scores[j] = s * scale;
  }
}

}  // namespace

void attention_forward(const AttentionDims& d, const double* q, const double* k, const double* v,
                       double* out, double* lse) {
  const std::size_t hd = d.channels / d.heads;
  std::vector<double> scores(d.tk), p(d.tk);
  for (std::size_t g = 0; g < d.groups; ++g) {
    for (std::size_t h = 0; h < d.heads; ++h) {
      for (std::size_t i = 0; i < d.tq; ++i) {
        attention_scores(d, g, h, i, q, k, scores.data());
        softmax_forward(1, d.tk, 1, scores.data(), p.data());
        const double mx = *std::max_element(scores.begin(), scores.end());
        double sum = 0.0;
        for (double s : scores) sum += std::exp(s - mx);
        lse[(g * d.heads + h) * d.tq + i] = mx + std::log(sum);
        for (std::size_t c = 0; c < hd; ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j < d.tk; ++j) acc += p[j] * v[(g * d.tk + j) * d.channels + h * hd + c];
          out[(g * d.tq + i) * d.channels + h * hd + c] = acc;
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
  std::vector<double> p(d.tk), dp(d.tk);
  for (std::size_t g = 0; g < d.groups; ++g) {
    for (std::size_t h = 0; h < d.heads; ++h) {
      for (std::size_t i = 0; i < d.tq; ++i) {
        attention_scores(d, g, h, i, q, k, p.data());
        for (double& pj : p) pj = std::exp(pj - lse[(g * d.heads + h) * d.tq + i]);
        const double* go = dout + (g * d.tq + i) * d.channels + h * hd;
        double dot = 0.0;
        for (std::size_t j = 0; j < d.tk; ++j) {
          const double* vj = v + (g * d.tk + j) * d.channels + h * hd;
          double s = 0.0;
          for (std::size_t c = 0; c < hd; ++c) s += go[c] * vj[c];
          dp[j] = s;
          dot += p[j] * s;
          if (dv) {
            double* dvj = dv + (g * d.tk + j) * d.channels + h * hd;
            for (std::size_t c = 0; c < hd; ++c) dvj[c] += p[j] * go[c];
          }
        }
        for (std::size_t j = 0; j < d.tk; ++j) {
          const double ds = p[j] * (dp[j] - dot) * scale;
          for (std::size_t c = 0; c < hd; ++c) {
            if (dq) dq[(g * d.tq + i) * d.channels + h * hd + c] += ds * k[(g * d.tk + j) * d.channels + h * hd + c];
            if (dk) dk[(g * d.tk + j) * d.channels + h * hd + c] += ds * q[(g * d.tq + i) * d.channels + h * hd + c];
          }
        }
      }
    }
  }
}

void conv_forward(const ConvDims& d, const double* x, const double* w, const double* bias,
                  double* y) {
  const std::size_t to = d.out_frames();
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t co = 0; co < d.c_out; ++co) {
      for (std::size_t t = 0; t < to; ++t) {
        for (std::size_t n = 0; n < d.joints; ++n) {
          double acc = bias ? bias[co] : 0.0;
          for (std::size_t ci = 0; ci < d.c_in; ++ci) {
            for (std::size_t kk = 0; kk < d.kernel; ++kk) {
              const long src = static_cast<long>(t * d.stride + kk) - static_cast<long>(d.padding);
              if (src < 0 || src >= static_cast<long>(d.frames)) continue;
              acc += w[(co * d.c_in + ci) * d.kernel + kk] *
                     x[((b * d.c_in + ci) * d.frames + static_cast<std::size_t>(src)) * d.joints + n];
            }
          }
          y[((b * d.c_out + co) * to + t) * d.joints + n] = acc;
        }
      }
    }
  }
}

void conv_backward(const ConvDims& d, const double* x, const double* w, const double* dy,
                   double* dx, double* dw, double* dbias) {
  const std::size_t to = d.out_frames();
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t co = 0; co < d.c_out; ++co) {
      for (std::size_t t = 0; t < to; ++t) {
        for (std::size_t n = 0; n < d.joints; ++n) {
          const double g = dy[((b * d.c_out + co) * to + t) * d.joints + n];
          if (dbias) dbias[co] += g;
          for (std::size_t ci = 0; ci < d.c_in; ++ci) {
            for (std::size_t kk = 0; kk < d.kernel; ++kk) {
              const long src = static_cast<long>(t * d.stride + kk) - static_cast<long>(d.padding);
              if (src < 0 || src >= static_cast<long>(d.frames)) continue;
              const std::size_t xi =
                  ((b * d.c_in + ci) * d.frames + static_cast<std::size_t>(src)) * d.joints + n;
              const std::size_t wi = (co * d.c_in + ci) * d.kernel + kk;
              if (dw) dw[wi] += g * x[xi];
              if (dx) dx[xi] += g * w[wi];
            }
          }
        }
      }
    }
  }
}

}  // namespace cgt::kernels::reference
