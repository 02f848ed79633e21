#pragma once

// Raw numeric kernels behind the tensor operations.
//
// `cgt::kernels` holds the OpenMP-parallel versions used by the library;
// `cgt::kernels::reference` holds plain serial loops with identical
// signatures. The reference versions exist for testing and benchmarking only.
//
// Layout conventions: everything is row-major. Axis-wise kernels take the
// tensor as (outer, n, inner) where `n` is the extent of the reduced axis.
// Backward kernels accumulate (+=) into their gradient outputs; a null
// gradient pointer skips that output.

#include <cstddef>

namespace cgt::kernels {

struct GemmArgs {
  bool trans_a = false;
  bool trans_b = false;
  std::size_t m = 0, n = 0, k = 0;
  double alpha = 1.0;
  double beta = 0.0;
};

/// C = alpha * op(A) * op(B) + beta * C with op(A) m×k and op(B) k×n.
void gemm(const GemmArgs& g, const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double* c, std::size_t ldc);

/// `batch` independent gemms; a zero stride broadcasts that operand.
void gemm_batched(std::size_t batch, const GemmArgs& g, const double* a, std::size_t stride_a,
                  std::size_t lda, const double* b, std::size_t stride_b, std::size_t ldb, double* c,
                  std::size_t stride_c, std::size_t ldc);

void softmax_forward(std::size_t outer, std::size_t n, std::size_t inner, const double* x,
                     double* y);
void softmax_backward(std::size_t outer, std::size_t n, std::size_t inner, const double* y,
                      const double* dy, double* dx);

void log_softmax_forward(std::size_t outer, std::size_t n, std::size_t inner, const double* x,
                         double* y);
void log_softmax_backward(std::size_t outer, std::size_t n, std::size_t inner, const double* y,
                          const double* dy, double* dx);

/// mean/rstd hold outer*inner entries each.
void layer_norm_forward(std::size_t outer, std::size_t n, std::size_t inner, const double* x,
                        const double* gamma, const double* beta, double eps, double* y,
                        double* mean, double* rstd);
void layer_norm_backward(std::size_t outer, std::size_t n, std::size_t inner, const double* x,
                         const double* gamma, const double* mean, const double* rstd,
                         const double* dy, double* dx, double* dgamma, double* dbeta);

/// Multi-head scaled dot-product attention over `groups` independent token
/// sets. q: [groups, tq, channels]; k, v: [groups, tk, channels]; heads split
/// the channel axis into contiguous slices. lse: [groups, heads, tq] row
/// log-sum-exp of the scaled scores; backward recomputes the probabilities
/// from it.
struct AttentionDims {
  std::size_t groups = 0, tq = 0, tk = 0, channels = 0, heads = 1;
};
void attention_forward(const AttentionDims& d, const double* q, const double* k, const double* v,
                       double* out, double* lse);
void attention_backward(const AttentionDims& d, const double* q, const double* k, const double* v,
                        const double* lse, const double* dout, double* dq, double* dk,
                        double* dv);

/// 1x1 convolution over [batch, c_in, frames, joints] with a temporal stride;
/// output frames = ceil(frames / stride), keeping frame indices 0, s, 2s, ...
struct ConvDims {
  std::size_t batch = 0, c_in = 0, c_out = 0, frames = 0, joints = 0, stride = 1;
  std::size_t kernel = 1;   // temporal kernel size (odd); 1 for pointwise
  std::size_t padding = 0;  // zero padding on both ends of the frame axis
  std::size_t out_frames() const { return (frames + 2 * padding - kernel) / stride + 1; }
};
/// w: [c_out, c_in, kernel] (kernel = 1 is the pointwise case); bias may be null.
void conv_forward(const ConvDims& d, const double* x, const double* w, const double* bias,
                  double* y);
void conv_backward(const ConvDims& d, const double* x, const double* w, const double* dy,
                   double* dx, double* dw, double* dbias);

namespace reference {

void gemm(const GemmArgs& g, const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double* c, std::size_t ldc);
void softmax_forward(std::size_t outer, std::size_t n, std::size_t inner, const double* x,
                     double* y);
void softmax_backward(std::size_t outer, std::size_t n, std::size_t inner, const double* y,
                      const double* dy, double* dx);
void layer_norm_forward(std::size_t outer, std::size_t n, std::size_t inner, const double* x,
                        const double* gamma, const double* beta, double eps, double* y,
                        double* mean, double* rstd);
void layer_norm_backward(std::size_t outer, std::size_t n, std::size_t inner, const double* x,
                         const double* gamma, const double* mean, const double* rstd,
                         const double* dy, double* dx, double* dgamma, double* dbeta);
void attention_forward(const AttentionDims& d, const double* q, const double* k, const double* v,
                       double* out, double* lse);
void attention_backward(const AttentionDims& d, const double* q, const double* k, const double* v,
                        const double* lse, const double* dout, double* dq, double* dk,
                        double* dv);
void conv_forward(const ConvDims& d, const double* x, const double* w, const double* bias,
                  double* y);
void conv_backward(const ConvDims& d, const double* x, const double* w, const double* dy,
                   double* dx, double* dw, double* dbias);

}  // namespace reference

/// Number of OpenMP threads the parallel kernels will use.
int thread_count();

}  // namespace cgt::kernels
