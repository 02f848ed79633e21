#pragma once

#include <cstdint>
#include <vector>

#include "cgtgait/tensor.hpp"

// Differentiable tensor operations. Binary elementwise operations broadcast
// with trailing-axis alignment (numpy rules).

namespace cgt {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);

/// Batched matrix product over the last two axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

/// x[..., in] · w[in, out] (+ bias[out]). `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);

/// Normalizes every slice along `axis` to zero mean / unit (biased) variance,
/// then applies gamma/beta (extent = x.dim(axis)).
Tensor layer_norm(const Tensor& x, int axis, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

/// 1x1 convolution on [B, C_in, T, N] with weights [C_out, C_in] and optional
/// bias [C_out]; stride 2 keeps the even frames.
Tensor pointwise_conv(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride = 1);

/// K x 1 temporal convolution on [B, C_in, T, N], weights [C_out, C_in, K],
/// zero padding (K-1)/2 on both ends.
Tensor temporal_conv(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride = 1);

Tensor reduce_sum(const Tensor& x, std::vector<int> axes);
Tensor reduce_mean(const Tensor& x, std::vector<int> axes);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Euclidean norm along `axis` (axis removed).
Tensor norm(const Tensor& x, int axis);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& order);
Tensor transpose(const Tensor& x, int axis0, int axis1);
Tensor concat(const std::vector<Tensor>& parts, int axis);

/// Keeps indices 0, stride, 2*stride, ... along `axis`.
Tensor stride_select(const Tensor& x, int axis, std::size_t stride);

/// Multi-head scaled dot-product attention. q: [..., Tq, C]; k, v: [..., Tk, C]
/// with identical leading axes; heads split C into contiguous slices.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

/// Multiply-accumulates issued on this thread by forward matmul, linear,
/// convolution and attention calls since the last reset. Temporal
/// convolution counts zero-padding taps.
std::uint64_t mac_count();
void reset_mac_count();

/// Broadcast result shape of two shapes; throws ShapeError when incompatible.
Shape broadcast_shape(const Shape& a, const Shape& b);

}  // namespace cgt
