#include "dropforge/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dropforge/errors.hpp"

namespace dropforge::detail {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  // a is [k x m], b is [k x n].
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace dropforge::detail

namespace dropforge::ops {

using detail::make_result;

namespace {

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool same = false;
};

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

Broadcast broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    bc.same = true;
    return bc;
  }
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                         shape_str(b) + " (rank mismatch)");
  }
  const auto sa = strides_of(a);
  const auto sb = strides_of(b);
  bc.out.resize(a.size());
  bc.stride_a.resize(a.size());
  bc.stride_b.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                           shape_str(b));
    }
    bc.out[i] = std::max(a[i], b[i]);
    bc.stride_a[i] = a[i] == 1 ? 0 : sa[i];
    bc.stride_b[i] = b[i] == 1 ? 0 : sb[i];
  }
  return bc;
}

// Calls fn(out_index, a_index, b_index) over the broadcast output.
template <typename Fn>
void for_each_broadcast(const Broadcast& bc, Fn&& fn) {
  const std::size_t n = shape_numel(bc.out);
  if (bc.same) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
    return;
  }
  const std::size_t rank = bc.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    fn(o, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += bc.stride_a[d];
      ib += bc.stride_b[d];
      if (idx[d] < bc.out[d]) break;
      ia -= bc.stride_a[d] * idx[d];
      ib -= bc.stride_b[d] * idx[d];
      idx[d] = 0;
    }
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename Fwd, typename Dfa, typename Dfb>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Dfa dfa, Dfb dfb) {
  const Broadcast bc = broadcast_shapes(a.shape(), b.shape(), name);
  std::vector<double> out(shape_numel(bc.out));
  const auto ad = a.data();
  const auto bd = b.data();
  for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = fwd(ad[ia], bd[ib]); });
  return make_result(bc.out, std::move(out), {a, b}, name, [a, b, bc, dfa, dfb](const TensorImpl& res) {
    const auto ad = a.data();
    const auto bd = b.data();
    const auto& g = res.grad;
    if (a.requires_grad()) {
      auto& ga = a.impl()->ensure_grad();
      for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) { ga[ia] += g[o] * dfa(ad[ia], bd[ib]); });
    }
    if (b.requires_grad()) {
      auto& gb = b.impl()->ensure_grad();
      for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) { gb[ib] += g[o] * dfb(ad[ia], bd[ib]); });
    }
  });
}

void check_finite(std::span<const double> d, const char* op) {
  for (double v : d) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a}, "scale", [a, factor](const TensorImpl& res) {
    auto& ga = a.impl()->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * res.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double value) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += value;
  return make_result(a.shape(), std::move(out), {a}, "add_scalar",
                     [a](const TensorImpl& res) { a.impl()->accumulate_grad(res.grad); });
}

Tensor sigmoid(const Tensor& a) {
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) {
    // Split by sign so exp never overflows.
    const double x = ad[i];
    if (x >= 0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  return make_result(a.shape(), std::move(out), {a}, "sigmoid", [a](const TensorImpl& res) {
    auto& ga = a.impl()->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double y = res.data[i];
      ga[i] += res.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor relu(const Tensor& a) {
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] > 0 ? ad[i] : 0.0;
  return make_result(a.shape(), std::move(out), {a}, "relu", [a](const TensorImpl& res) {
    auto& ga = a.impl()->ensure_grad();
    const auto ad = a.data();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (ad[i] > 0) ga[i] += res.grad[i];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
  return make_result({m, n}, std::move(out), {a, b}, "matmul", [a, b, m, n, k](const TensorImpl& res) {
    if (a.requires_grad()) {
      // dA = dC . B^T
      detail::gemm_nt(m, k, n, res.grad.data(), b.data().data(), a.impl()->ensure_grad().data());
    }
    if (b.requires_grad()) {
      // dB = A^T . dC
      detail::gemm_tn(k, n, m, a.data().data(), res.grad.data(), b.impl()->ensure_grad().data());
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape()));
  return permute(a, {1, 0});
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(s));
  }
  const auto xd = x.data();
  check_finite(xd, "softmax");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];

  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xd[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xd[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(xd[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= z;
    }
  }
  return make_result(s, std::move(out), {x}, "softmax", [x, outer, inner, len](const TensorImpl& res) {
    auto& gx = x.impl()->ensure_grad();
    const auto& y = res.data;
    const auto& g = res.grad;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t idx = base + j * inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

namespace {

struct ConvGeometry {
  std::size_t cin, h, w, cout, kh, kw, stride, pad, oh, ow;
  std::size_t patch() const { return cin * kh * kw; }
  std::size_t pixels() const { return oh * ow; }
};

// cols is [cin*kh*kw x oh*ow]
std::vector<double> im2col(const double* x, const ConvGeometry& g) {
  std::vector<double> cols(g.patch() * g.pixels(), 0.0);
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = cols.data() + ((c * g.kh + ki) * g.kw + kj) * g.pixels();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          const double* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          double* dst = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ox] = src[ix];
          }
        }
      }
    }
  }
  return cols;
}

void col2im_accumulate(const double* cols, const ConvGeometry& g, double* dx) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = cols + ((c * g.kh + ki) * g.kw + kj) * g.pixels();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const double* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const std::optional<Tensor>& bias,
              std::size_t stride, std::size_t padding) {
  if (input.rank() != 3 || kernel.rank() != 4 || kernel.dim(1) != input.dim(0)) {
    throw DimensionError("conv2d: input " + shape_str(input.shape()) + " incompatible with kernel " +
                         shape_str(kernel.shape()));
  }
  if (stride == 0) throw ConfigError("conv2d: stride must be >= 1");
  ConvGeometry g{};
  g.cin = input.dim(0);
  g.h = input.dim(1);
  g.w = input.dim(2);
  g.cout = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = stride;
  g.pad = padding;
  const std::size_t ph = g.h + 2 * padding, pw = g.w + 2 * padding;
  if (g.kh > ph || g.kw > pw) {
    throw ConfigError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                      shape_str(input.shape()));
  }
  if ((ph - g.kh) % stride != 0 || (pw - g.kw) % stride != 0) {
    throw ConfigError("conv2d: output extent not integral for input " + shape_str(input.shape()) +
                      ", kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) + ", stride " +
                      std::to_string(stride) + ", padding " + std::to_string(padding));
  }
  g.oh = (ph - g.kh) / stride + 1;
  g.ow = (pw - g.kw) / stride + 1;
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.cout)) {
    throw DimensionError("conv2d: bias " + shape_str(bias->shape()) + " does not match " +
                         std::to_string(g.cout) + " output channels");
  }

  auto cols = std::make_shared<std::vector<double>>(im2col(input.data().data(), g));
  std::vector<double> out(g.cout * g.pixels(), 0.0);
  if (bias) {
    const auto bd = bias->data();
    for (std::size_t o = 0; o < g.cout; ++o) std::fill_n(out.begin() + o * g.pixels(), g.pixels(), bd[o]);
  }
  detail::gemm_nn(g.cout, g.pixels(), g.patch(), kernel.data().data(), cols->data(), out.data());

  std::vector<Tensor> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  Tensor b = bias ? *bias : Tensor();
  return make_result({g.cout, g.oh, g.ow}, std::move(out), inputs, "conv2d",
                     [input, kernel, b, g, cols](const TensorImpl& res) {
                       const double* gout = res.grad.data();
                       if (kernel.requires_grad()) {
                         detail::gemm_nt(g.cout, g.patch(), g.pixels(), gout, cols->data(),
                                         kernel.impl()->ensure_grad().data());
                       }
                       if (b.defined() && b.requires_grad()) {
                         auto& gb = b.impl()->ensure_grad();
                         for (std::size_t o = 0; o < g.cout; ++o) {
                           double acc = 0.0;
                           for (std::size_t p = 0; p < g.pixels(); ++p) acc += gout[o * g.pixels() + p];
                           gb[o] += acc;
                         }
                       }
                       if (input.requires_grad()) {
                         std::vector<double> dcols(g.patch() * g.pixels(), 0.0);
                         detail::gemm_tn(g.patch(), g.pixels(), g.cout, kernel.data().data(), gout, dcols.data());
                         col2im_accumulate(dcols.data(), g, input.impl()->ensure_grad().data());
                       }
                     });
}

Tensor upsample_nearest2x(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("upsample: expected [C x H x W], got " + shape_str(x.shape()));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto xd = x.data();
  std::vector<double> out(c * 4 * h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t xx = 0; xx < 2 * w; ++xx) {
        out[(ch * 2 * h + y) * 2 * w + xx] = xd[(ch * h + y / 2) * w + xx / 2];
      }
    }
  }
  return make_result({c, 2 * h, 2 * w}, std::move(out), {x}, "upsample_nearest2x",
                     [x, c, h, w](const TensorImpl& res) {
                       auto& gx = x.impl()->ensure_grad();
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         for (std::size_t y = 0; y < 2 * h; ++y) {
                           for (std::size_t xx = 0; xx < 2 * w; ++xx) {
                             gx[(ch * h + y / 2) * w + xx / 2] += res.grad[(ch * 2 * h + y) * 2 * w + xx];
                           }
                         }
                       }
                     });
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(shape, std::move(out), {x}, "reshape",
                     [x](const TensorImpl& res) { x.impl()->accumulate_grad(res.grad); });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const auto& s = x.shape();
  const std::size_t rank = s.size();
  if (axes.size() != rank) {
    throw DimensionError("permute: " + std::to_string(axes.size()) + " axes for " + shape_str(s));
  }
  std::vector<bool> used(rank, false);
  for (auto a : axes) {
    if (a >= rank || used[a]) throw DimensionError("permute: invalid axis list for " + shape_str(s));
    used[a] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = s[axes[i]];
  const auto in_strides = strides_of(s);
  // Source stride for each output axis, so a single odometer walks the output.
  std::vector<std::size_t> src_stride(rank);
  for (std::size_t i = 0; i < rank; ++i) src_stride[i] = in_strides[axes[i]];

  auto index_map = std::make_shared<std::vector<std::size_t>>(x.numel());
  {
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < index_map->size(); ++o) {
      (*index_map)[o] = src;
      for (std::size_t d = rank; d-- > 0;) {
        ++idx[d];
        src += src_stride[d];
        if (idx[d] < out_shape[d]) break;
        src -= src_stride[d] * idx[d];
        idx[d] = 0;
      }
    }
  }
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = xd[(*index_map)[o]];
  return make_result(out_shape, std::move(out), {x}, "permute", [x, index_map](const TensorImpl& res) {
    auto& gx = x.impl()->ensure_grad();
    for (std::size_t o = 0; o < index_map->size(); ++o) gx[(*index_map)[o]] += res.grad[o];
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  for (const auto& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (t != tail) {
      throw DimensionError("concat: trailing extents differ, " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * shape_numel(tail));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Shape shape = parts[0].shape();
  shape[0] = rows;
  return make_result(shape, std::move(out), parts, "concat", [parts](const TensorImpl& res) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t n = p.numel();
      if (p.requires_grad()) {
        p.impl()->accumulate_grad(std::span<const double>(res.grad).subspan(offset, n));
      }
      offset += n;
    }
  });
}

Tensor slice(const Tensor& x, std::size_t start, std::size_t length) {
  if (x.rank() == 0 || length == 0 || start + length > x.dim(0)) {
    throw DimensionError("slice: rows [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t row = x.numel() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = length;
  std::vector<double> out(x.data().begin() + start * row, x.data().begin() + (start + length) * row);
  return make_result(shape, std::move(out), {x}, "slice", [x, start, row](const TensorImpl& res) {
    auto& gx = x.impl()->ensure_grad();
    for (std::size_t i = 0; i < res.grad.size(); ++i) gx[start * row + i] += res.grad[i];
  });
}

namespace {

// Compensated (Neumaier) summation; keeps reduction rounding near one ulp of
// the result regardless of element count.
class Accumulator {
 public:
  void add(double v) {
    const double t = sum_ + v;
    comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double compensated_sum(std::span<const double> xs) {
  Accumulator acc;
  for (double v : xs) acc.add(v);
  return acc.value();
}

}  // namespace

Tensor sum(const Tensor& x) {
  const auto xd = x.data();
  const double s = compensated_sum(xd);
  return make_result({1}, {s}, {x}, "sum", [x](const TensorImpl& res) {
    auto& gx = x.impl()->ensure_grad();
    for (auto& v : gx) v += res.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const auto xd = x.data();
  const double n = static_cast<double>(xd.size());
  const double s = compensated_sum(xd) / n;
  return make_result({1}, {s}, {x}, "mean", [x, n](const TensorImpl& res) {
    auto& gx = x.impl()->ensure_grad();
    for (auto& v : gx) v += res.grad[0] / n;
  });
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse");
  const auto p = pred.data();
  const auto t = target.data();
  const double n = static_cast<double>(p.size());
  Accumulator acc;
  for (std::size_t i = 0; i < p.size(); ++i) acc.add((p[i] - t[i]) * (p[i] - t[i]));
  return make_result({1}, {acc.value() / n}, {pred, target}, "mse", [pred, target, n](const TensorImpl& res) {
    const auto p = pred.data();
    const auto t = target.data();
    const double k = 2.0 * res.grad[0] / n;
    if (pred.requires_grad()) {
      auto& g = pred.impl()->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * (p[i] - t[i]);
    }
    if (target.requires_grad()) {
      auto& g = target.impl()->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= k * (p[i] - t[i]);
    }
  });
}

Tensor l1(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "l1");
  const auto p = pred.data();
  const auto t = target.data();
  const double n = static_cast<double>(p.size());
  Accumulator acc;
  for (std::size_t i = 0; i < p.size(); ++i) acc.add(std::abs(p[i] - t[i]));
  return make_result({1}, {acc.value() / n}, {pred, target}, "l1", [pred, target, n](const TensorImpl& res) {
    const auto p = pred.data();
    const auto t = target.data();
    const double k = res.grad[0] / n;
    auto sign = [](double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); };
    if (pred.requires_grad()) {
      auto& g = pred.impl()->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * sign(p[i] - t[i]);
    }
    if (target.requires_grad()) {
      auto& g = target.impl()->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= k * sign(p[i] - t[i]);
    }
  });
}

Tensor bce(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "bce");
  const auto p = pred.data();
  const auto t = target.data();
  const double n = static_cast<double>(p.size());
  auto clamp = [](double v) { return std::clamp(v, kBceEpsilon, 1.0 - kBceEpsilon); };
  Accumulator acc;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = clamp(p[i]);
    acc.add(-(t[i] * std::log(pc) + (1.0 - t[i]) * std::log1p(-pc)));
  }
  return make_result({1}, {acc.value() / n}, {pred, target}, "bce", [pred, target, n, clamp](const TensorImpl& res) {
    const auto p = pred.data();
    const auto t = target.data();
    const double k = res.grad[0] / n;
    if (pred.requires_grad()) {
      auto& g = pred.impl()->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        // The clamp is flat outside [eps, 1-eps].
        if (p[i] < kBceEpsilon || p[i] > 1.0 - kBceEpsilon) continue;
        g[i] += k * (p[i] - t[i]) / (p[i] * (1.0 - p[i]));
      }
    }
    if (target.requires_grad()) {
      auto& g = target.impl()->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double pc = clamp(p[i]);
        g[i] -= k * (std::log(pc) - std::log1p(-pc));
      }
    }
  });
}

}  // namespace dropforge::ops
