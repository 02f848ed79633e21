#include "cgtgait/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cgtgait/kernels.hpp"

namespace cgt {

namespace {

thread_local std::uint64_t t_macs = 0;

using detail::Node;
using BackwardFn = std::function<void(Node&)>;

Tensor make_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                   BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (grad_enabled()) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.defined() && t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      for (const auto& t : inputs) {
        if (t.defined()) node->inputs.push_back(t.node());
      }
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

// Gradient buffer of `t` if it participates in differentiation, else null.
double* grad_of(const Tensor& t) {
  if (!t.defined() || !t.requires_grad()) return nullptr;
  return t.node()->grad_buffer().data();
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

void require_defined(const Tensor& t, const char* what) {
  if (!t.defined()) throw std::invalid_argument(std::string(what) + ": undefined tensor");
}

// Strides of `in` mapped onto the axes of `out` (0 where broadcast).
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> s(out.size(), 0);
  const auto natural = strides_of(in);
  const std::size_t offset = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    s[offset + i] = in[i] == 1 ? 0 : natural[i];
  }
  return s;
}

// Calls f(out_index, a_index, b_index) for every output element, innermost
// axis in a tight loop.
template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t total = numel(out);
  if (out.empty()) {
    f(0, 0, 0);
    return;
  }
  const std::size_t r = out.size();
  const std::size_t last = out[r - 1];
  const std::size_t la = sa[r - 1], lb = sb[r - 1];
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < total; o += last) {
    for (std::size_t j = 0; j < last; ++j) f(o + j, ia + j * la, ib + j * lb);
    for (std::size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

enum class Binary { kAdd, kSub, kMul, kDiv };

Tensor binary(const Tensor& a, const Tensor& b, Binary op) {
  require_defined(a, "binary op");
  require_defined(b, "binary op");
  Shape out = broadcast_shape(a.shape(), b.shape());
  std::vector<double> value(numel(out));
  const double* av = a.data().data();
  const double* bv = b.data().data();
  const bool same = a.shape() == b.shape();
  auto sa = broadcast_strides(a.shape(), out);
  auto sb = broadcast_strides(b.shape(), out);
  auto apply = [op](double x, double y) {
    switch (op) {
      case Binary::kAdd: return x + y;
      case Binary::kSub: return x - y;
      case Binary::kMul: return x * y;
      case Binary::kDiv: return x / y;
    }
    return 0.0;
  };
  if (same) {
    for (std::size_t i = 0; i < value.size(); ++i) value[i] = apply(av[i], bv[i]);
  } else {
    for_each_broadcast(out, sa, sb,
                       [&](std::size_t o, std::size_t i, std::size_t j) { value[o] = apply(av[i], bv[j]); });
  }
  auto backward = [a, b, op, out, sa, sb, same](Node& self) {
    const double* g = self.grad.data();
    double* ga = grad_of(a);
    double* gb = grad_of(b);
    const double* av = a.data().data();
    const double* bv = b.data().data();
    auto step = [&](std::size_t o, std::size_t i, std::size_t j) {
      switch (op) {
        case Binary::kAdd:
          if (ga) ga[i] += g[o];
          if (gb) gb[j] += g[o];
          break;
        case Binary::kSub:
          if (ga) ga[i] += g[o];
          if (gb) gb[j] -= g[o];
          break;
        case Binary::kMul:
          if (ga) ga[i] += g[o] * bv[j];
          if (gb) gb[j] += g[o] * av[i];
          break;
        case Binary::kDiv:
          if (ga) ga[i] += g[o] / bv[j];
          if (gb) gb[j] -= g[o] * av[i] / (bv[j] * bv[j]);
          break;
      }
    };
    if (same) {
      for (std::size_t i = 0; i < self.value.size(); ++i) step(i, i, i);
    } else {
      for_each_broadcast(out, sa, sb, step);
    }
  };
  return make_result(std::move(out), std::move(value), {a, b}, std::move(backward));
}

// Elementwise map with derivative expressed through input x and output y.
template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  require_defined(x, "unary op");
  std::vector<double> value(x.numel());
  const double* xv = x.data().data();
  for (std::size_t i = 0; i < value.size(); ++i) value[i] = fwd(xv[i]);
  auto backward = [x, deriv](Node& self) {
    double* gx = grad_of(x);
    if (!gx) return;
    const double* xv = x.data().data();
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      gx[i] += self.grad[i] * deriv(xv[i], self.value[i]);
    }
  };
  return make_result(x.shape(), std::move(value), {x}, std::move(backward));
}

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
  const int a = normalize_axis(axis, shape.size());
  AxisSplit s;
  for (int i = 0; i < a; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  s.n = shape[static_cast<std::size_t>(a)];
  for (std::size_t i = static_cast<std::size_t>(a) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

std::uint64_t mac_count() { return t_macs; }
void reset_mac_count() { t_macs = 0; }

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kMul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kDiv); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul needs rank >= 2 operands");
  const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) {
    throw ShapeError("matmul inner extents differ: " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Shape batch = broadcast_shape(batch_a, batch_b);
  const std::size_t nbatch = numel(batch);
  // Offsets (in matrices) of each batch entry into a and b.
  std::vector<std::size_t> off_a(nbatch), off_b(nbatch);
  {
    auto sa = broadcast_strides(batch_a, batch);
    auto sb = broadcast_strides(batch_b, batch);
    if (batch.empty()) {
      off_a[0] = off_b[0] = 0;
    } else {
      for_each_broadcast(batch, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
        off_a[o] = i;
        off_b[o] = j;
      });
    }
  }
  Shape out = batch;
  out.push_back(m);
  out.push_back(n);
  std::vector<double> value(numel(out));
  t_macs += nbatch * m * n * k;
  const double* av = a.data().data();
  const double* bv = b.data().data();
  // Shared right operand with contiguous left batches: one tall gemm.
  const bool fold = numel(batch_b) == 1 && numel(batch_a) == nbatch;
  if (fold) {
    kernels::gemm({false, false, nbatch * m, n, k, 1.0, 0.0}, av, k, bv, n, value.data(), n);
  } else {
    for (std::size_t i = 0; i < nbatch; ++i) {
      kernels::gemm({false, false, m, n, k, 1.0, 0.0}, av + off_a[i] * m * k, k,
                    bv + off_b[i] * k * n, n, value.data() + i * m * n, n);
    }
  }
  auto backward = [a, b, m, n, k, nbatch, off_a, off_b, fold](Node& self) {
    const double* g = self.grad.data();
    const double* av = a.data().data();
    const double* bv = b.data().data();
    double* ga = grad_of(a);
    double* gb = grad_of(b);
    if (fold) {
      if (ga) kernels::gemm({false, true, nbatch * m, k, n, 1.0, 1.0}, g, n, bv, n, ga, k);
      if (gb) kernels::gemm({true, false, k, n, nbatch * m, 1.0, 1.0}, av, k, g, n, gb, n);
      return;
    }
    for (std::size_t i = 0; i < nbatch; ++i) {
      const double* gi = g + i * m * n;
      if (ga) {
        kernels::gemm({false, true, m, k, n, 1.0, 1.0}, gi, n, bv + off_b[i] * k * n, n,
                      ga + off_a[i] * m * k, k);
      }
      if (gb) {
        kernels::gemm({true, false, k, n, m, 1.0, 1.0}, av + off_a[i] * m * k, k, gi, n,
                      gb + off_b[i] * k * n, n);
      }
    }
  };
  return make_result(std::move(out), std::move(value), {a, b}, std::move(backward));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_defined(x, "linear");
  require_defined(w, "linear");
  if (w.rank() != 2 || x.rank() < 1 || x.dim(-1) != w.dim(0)) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " vs weight " + to_string(w.shape()));
  }
  const std::size_t in = w.dim(0), outc = w.dim(1), rows = x.numel() / in;
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outc)) {
    throw ShapeError("linear: bias " + to_string(bias.shape()) + " for " + std::to_string(outc) +
                     " outputs");
  }
  Shape out = x.shape();
  out.back() = outc;
  std::vector<double> value(rows * outc);
  t_macs += rows * outc * in;
  kernels::gemm({false, false, rows, outc, in, 1.0, 0.0}, x.data().data(), in, w.data().data(),
                outc, value.data(), outc);
  if (bias.defined()) {
    const double* bv = bias.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < outc; ++c) value[r * outc + c] += bv[c];
    }
  }
  auto backward = [x, w, bias, rows, in, outc](Node& self) {
    const double* g = self.grad.data();
    if (double* gx = grad_of(x)) {
      kernels::gemm({false, true, rows, in, outc, 1.0, 1.0}, g, outc, w.data().data(), outc, gx, in);
    }
    if (double* gw = grad_of(w)) {
      kernels::gemm({true, false, in, outc, rows, 1.0, 1.0}, x.data().data(), in, g, outc, gw, outc);
    }
    if (double* gb = grad_of(bias)) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < outc; ++c) gb[c] += g[r * outc + c];
      }
    }
  };
  return make_result(std::move(out), std::move(value), {x, w, bias}, std::move(backward));
}

Tensor softmax(const Tensor& x, int axis) {
  require_defined(x, "softmax");
  const AxisSplit s = split_at(x.shape(), axis);
  std::vector<double> value(x.numel());
  kernels::softmax_forward(s.outer, s.n, s.inner, x.data().data(), value.data());
  auto backward = [x, s](Node& self) {
    if (double* gx = grad_of(x)) {
      kernels::softmax_backward(s.outer, s.n, s.inner, self.value.data(), self.grad.data(), gx);
    }
  };
  return make_result(x.shape(), std::move(value), {x}, std::move(backward));
}

Tensor log_softmax(const Tensor& x, int axis) {
  require_defined(x, "log_softmax");
  const AxisSplit s = split_at(x.shape(), axis);
  std::vector<double> value(x.numel());
  kernels::log_softmax_forward(s.outer, s.n, s.inner, x.data().data(), value.data());
  auto backward = [x, s](Node& self) {
    if (double* gx = grad_of(x)) {
      kernels::log_softmax_backward(s.outer, s.n, s.inner, self.value.data(), self.grad.data(), gx);
    }
  };
  return make_result(x.shape(), std::move(value), {x}, std::move(backward));
}

Tensor layer_norm(const Tensor& x, int axis, const Tensor& gamma, const Tensor& beta, double eps) {
  require_defined(x, "layer_norm");
  const AxisSplit s = split_at(x.shape(), axis);
  if (gamma.numel() != s.n || beta.numel() != s.n) {
    throw ShapeError("layer_norm: gamma/beta extent " + std::to_string(gamma.numel()) + "/" +
                     std::to_string(beta.numel()) + " vs normalized extent " + std::to_string(s.n));
  }
  std::vector<double> value(x.numel());
  auto mean = std::make_shared<std::vector<double>>(s.outer * s.inner);
  auto rstd = std::make_shared<std::vector<double>>(s.outer * s.inner);
  kernels::layer_norm_forward(s.outer, s.n, s.inner, x.data().data(), gamma.data().data(),
                              beta.data().data(), eps, value.data(), mean->data(), rstd->data());
  auto backward = [x, gamma, beta, s, mean, rstd](Node& self) {
    kernels::layer_norm_backward(s.outer, s.n, s.inner, x.data().data(), gamma.data().data(),
                                 mean->data(), rstd->data(), self.grad.data(), grad_of(x),
                                 grad_of(gamma), grad_of(beta));
  };
  return make_result(x.shape(), std::move(value), {x, gamma, beta}, std::move(backward));
}

namespace {

Tensor conv(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
            std::size_t kernel, const char* what) {
  require_defined(x, what);
  require_defined(w, what);
  if (x.rank() != 4) throw ShapeError(std::string(what) + ": expected [B,C,T,N], got " + to_string(x.shape()));
  if (stride == 0) throw ShapeError(std::string(what) + ": stride must be positive");
  kernels::ConvDims d;
  d.batch = x.dim(0);
  d.c_in = x.dim(1);
  d.frames = x.dim(2);
  d.joints = x.dim(3);
  d.c_out = w.dim(0);
  d.stride = stride;
  d.kernel = kernel;
  d.padding = (kernel - 1) / 2;
  const Shape expect_w = kernel == 1 ? Shape{d.c_out, d.c_in} : Shape{d.c_out, d.c_in, kernel};
  if (w.shape() != expect_w) {
    throw ShapeError(std::string(what) + ": weight " + to_string(w.shape()) + " for input " +
                     to_string(x.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{d.c_out}) {
    throw ShapeError(std::string(what) + ": bias " + to_string(bias.shape()));
  }
  Shape out{d.batch, d.c_out, d.out_frames(), d.joints};
  std::vector<double> value(numel(out));
  t_macs += numel(out) * d.c_in * kernel;
  kernels::conv_forward(d, x.data().data(), w.data().data(),
                        bias.defined() ? bias.data().data() : nullptr, value.data());
  auto backward = [x, w, bias, d](Node& self) {
    kernels::conv_backward(d, x.data().data(), w.data().data(), self.grad.data(), grad_of(x),
                           grad_of(w), grad_of(bias));
  };
  return make_result(std::move(out), std::move(value), {x, w, bias}, std::move(backward));
}

}  // namespace

Tensor pointwise_conv(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride) {
  return conv(x, w, bias, stride, 1, "pointwise_conv");
}

Tensor temporal_conv(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride) {
  if (w.rank() != 3 || w.dim(2) % 2 == 0) throw ShapeError("temporal_conv: weight must be [C_out, C_in, odd K]");
  return conv(x, w, bias, stride, w.dim(2), "temporal_conv");
}

Tensor reduce_sum(const Tensor& x, std::vector<int> axes) {
  require_defined(x, "reduce_sum");
  const std::size_t r = x.rank();
  std::vector<bool> reduced(r, false);
  for (int a : axes) {
    const auto n = static_cast<std::size_t>(normalize_axis(a, r));
    if (reduced[n]) throw ShapeError("reduce: duplicate axis " + std::to_string(a));
    reduced[n] = true;
  }
  Shape out;
  for (std::size_t i = 0; i < r; ++i) {
    if (!reduced[i]) out.push_back(x.shape()[i]);
  }
  // Map every input axis onto the output stride (0 for reduced axes).
  std::vector<std::size_t> out_strides_full(r, 0);
  {
    const auto os = strides_of(out);
    std::size_t j = 0;
    for (std::size_t i = 0; i < r; ++i) {
      if (!reduced[i]) out_strides_full[i] = os[j++];
    }
  }
  std::vector<double> value(numel(out), 0.0);
  const double* xv = x.data().data();
  const Shape& in_shape = x.shape();
  const auto in_strides = strides_of(in_shape);
  if (r == 0) {
    value[0] = xv[0];
  } else {
    // a = input index (contiguous), b = output index
    for_each_broadcast(in_shape, in_strides, out_strides_full,
                       [&](std::size_t, std::size_t i, std::size_t o) { value[o] += xv[i]; });
  }
  auto backward = [x, in_shape, in_strides, out_strides_full, r](Node& self) {
    double* gx = grad_of(x);
    if (!gx) return;
    const double* g = self.grad.data();
    if (r == 0) {
      gx[0] += g[0];
      return;
    }
    for_each_broadcast(in_shape, in_strides, out_strides_full,
                       [&](std::size_t, std::size_t i, std::size_t o) { gx[i] += g[o]; });
  };
  return make_result(std::move(out), std::move(value), {x}, std::move(backward));
}

Tensor reduce_mean(const Tensor& x, std::vector<int> axes) {
  require_defined(x, "reduce_mean");
  std::size_t count = 1;
  for (int a : axes) count *= x.shape()[static_cast<std::size_t>(normalize_axis(a, x.rank()))];
  return scale(reduce_sum(x, std::move(axes)), 1.0 / static_cast<double>(count));
}

Tensor sum(const Tensor& x) {
  std::vector<int> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return reduce_sum(x, axes);
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor norm(const Tensor& x, int axis) {
  require_defined(x, "norm");
  const AxisSplit s = split_at(x.shape(), axis);
  Shape out = x.shape();
  out.erase(out.begin() + normalize_axis(axis, x.rank()));
  std::vector<double> value(s.outer * s.inner, 0.0);
  const double* xv = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.n; ++i) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const double v = xv[(o * s.n + i) * s.inner + in];
        value[o * s.inner + in] += v * v;
      }
    }
  }
  for (auto& v : value) v = std::sqrt(v);
  auto backward = [x, s](Node& self) {
    double* gx = grad_of(x);
    if (!gx) return;
    const double* xv = x.data().data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const double nrm = self.value[o * s.inner + in];
        if (nrm == 0.0) continue;
        const double g = self.grad[o * s.inner + in] / nrm;
        for (std::size_t i = 0; i < s.n; ++i) {
          const std::size_t idx = (o * s.n + i) * s.inner + in;
          gx[idx] += g * xv[idx];
        }
      }
    }
  };
  return make_result(std::move(out), std::move(value), {x}, std::move(backward));
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  std::vector<double> value(x.data().begin(), x.data().end());
  auto backward = [x](Node& self) {
    if (double* gx = grad_of(x)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    }
  };
  return make_result(std::move(shape), std::move(value), {x}, std::move(backward));
}

Tensor permute(const Tensor& x, const std::vector<int>& order) {
  require_defined(x, "permute");
  const std::size_t r = x.rank();
  if (order.size() != r) throw ShapeError("permute: order length differs from rank");
  std::vector<bool> seen(r, false);
  Shape out(r);
  const auto in_strides = strides_of(x.shape());
  std::vector<std::size_t> gather(r);
  for (std::size_t i = 0; i < r; ++i) {
    const auto a = static_cast<std::size_t>(normalize_axis(order[i], r));
    if (seen[a]) throw ShapeError("permute: repeated axis");
    seen[a] = true;
    out[i] = x.shape()[a];
    gather[i] = in_strides[a];
  }
  const auto out_strides = strides_of(out);
  std::vector<double> value(x.numel());
  const double* xv = x.data().data();
  if (r == 0) {
    value[0] = xv[0];
  } else {
    for_each_broadcast(out, out_strides, gather,
                       [&](std::size_t, std::size_t o, std::size_t i) { value[o] = xv[i]; });
  }
  auto backward = [x, out, out_strides, gather, r](Node& self) {
    double* gx = grad_of(x);
    if (!gx) return;
    if (r == 0) {
      gx[0] += self.grad[0];
      return;
    }
    for_each_broadcast(out, out_strides, gather,
                       [&](std::size_t, std::size_t o, std::size_t i) { gx[i] += self.grad[o]; });
  };
  return make_result(out, std::move(value), {x}, std::move(backward));
}

Tensor transpose(const Tensor& x, int axis0, int axis1) {
  std::vector<int> order(x.rank());
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[static_cast<std::size_t>(normalize_axis(axis0, x.rank()))],
            order[static_cast<std::size_t>(normalize_axis(axis1, x.rank()))]);
  return permute(x, order);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  for (const auto& p : parts) require_defined(p, "concat");
  const std::size_t r = parts[0].rank();
  const auto a = static_cast<std::size_t>(normalize_axis(axis, r));
  Shape out = parts[0].shape();
  out[a] = 0;
  for (const auto& p : parts) {
    if (p.rank() != r) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < r; ++i) {
      if (i != a && p.shape()[i] != parts[0].shape()[i]) {
        throw ShapeError("concat: " + to_string(p.shape()) + " vs " + to_string(parts[0].shape()));
      }
    }
    out[a] += p.shape()[a];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < a; ++i) outer *= out[i];
  for (std::size_t i = a + 1; i < r; ++i) inner *= out[i];
  const std::size_t out_chunk = out[a] * inner;
  std::vector<double> value(numel(out));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t chunk = p.shape()[a] * inner;
    const double* pv = p.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(pv + o * chunk, pv + (o + 1) * chunk, value.begin() + static_cast<long>(o * out_chunk + off));
    }
    off += chunk;
  }
  auto backward = [parts, offsets, outer, inner, out_chunk, a](Node& self) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      double* gp = grad_of(parts[k]);
      if (!gp) continue;
      const std::size_t chunk = parts[k].shape()[a] * inner;
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = self.grad.data() + o * out_chunk + offsets[k];
        for (std::size_t i = 0; i < chunk; ++i) gp[o * chunk + i] += src[i];
      }
    }
  };
  return make_result(std::move(out), std::move(value), parts, std::move(backward));
}

Tensor stride_select(const Tensor& x, int axis, std::size_t stride) {
  require_defined(x, "stride_select");
  if (stride == 0) throw ShapeError("stride_select: stride must be positive");
  const AxisSplit s = split_at(x.shape(), axis);
  const std::size_t kept = (s.n + stride - 1) / stride;
  Shape out = x.shape();
  out[static_cast<std::size_t>(normalize_axis(axis, x.rank()))] = kept;
  std::vector<double> value(s.outer * kept * s.inner);
  const double* xv = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < kept; ++i) {
      const double* src = xv + (o * s.n + i * stride) * s.inner;
      std::copy(src, src + s.inner, value.begin() + static_cast<long>((o * kept + i) * s.inner));
    }
  }
  auto backward = [x, s, kept, stride](Node& self) {
    double* gx = grad_of(x);
    if (!gx) return;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < kept; ++i) {
        const double* src = self.grad.data() + (o * kept + i) * s.inner;
        double* dst = gx + (o * s.n + i * stride) * s.inner;
        for (std::size_t in = 0; in < s.inner; ++in) dst[in] += src[in];
      }
    }
  };
  return make_result(std::move(out), std::move(value), {x}, std::move(backward));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  require_defined(q, "attention");
  require_defined(k, "attention");
  require_defined(v, "attention");
  if (q.rank() < 2 || k.rank() != q.rank() || v.shape() != k.shape()) {
    throw ShapeError("attention: q " + to_string(q.shape()) + ", k " + to_string(k.shape()) +
                     ", v " + to_string(v.shape()));
  }
  const std::size_t channels = q.dim(-1);
  if (k.dim(-1) != channels) throw ShapeError("attention: query/key channel mismatch");
  if (!std::equal(q.shape().begin(), q.shape().end() - 2, k.shape().begin())) {
    throw ShapeError("attention: leading axes differ");
  }
  if (heads == 0 || channels % heads != 0) {
    throw std::invalid_argument("attention: " + std::to_string(heads) + " heads do not divide " +
                                std::to_string(channels) + " channels");
  }
  kernels::AttentionDims d;
  d.tq = q.dim(-2);
  d.tk = k.dim(-2);
  d.channels = channels;
  d.heads = heads;
  d.groups = q.numel() / (d.tq * channels);
  std::vector<double> value(q.numel());
  auto lse = std::make_shared<std::vector<double>>(d.groups * heads * d.tq);
  kernels::attention_forward(d, q.data().data(), k.data().data(), v.data().data(), value.data(),
                             lse->data());
  t_macs += 2 * d.groups * d.tq * d.tk * channels;
  auto backward = [q, k, v, d, lse](Node& self) {
    kernels::attention_backward(d, q.data().data(), k.data().data(), v.data().data(), lse->data(),
                                self.grad.data(), grad_of(q), grad_of(k), grad_of(v));
  };
  return make_result(q.shape(), std::move(value), {q, k, v}, std::move(backward));
}

}  // namespace cgt
