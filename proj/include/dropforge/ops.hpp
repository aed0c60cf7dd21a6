#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "dropforge/tensor.hpp"

// Differentiable tensor operations. Every function records a backward node
// when graph recording is enabled and an input requires a gradient.
namespace dropforge::ops {

// Elementwise. Operands must have equal rank; along each axis the extents
// must match or one of them must be 1, in which case it is stretched.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);

/// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Exp-normalizes along `axis` after subtracting the per-slice maximum.
/// Throws NumericError on non-finite input.
Tensor softmax(const Tensor& x, std::size_t axis);

/// Cross-correlation of a [C_in x H x W] input with a [C_out x C_in x kh x kw]
/// kernel plus an optional [C_out] bias. (H + 2*padding - kh) must be an exact
/// multiple of stride (likewise for W); otherwise a ConfigError is thrown.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const std::optional<Tensor>& bias,
              std::size_t stride, std::size_t padding);

/// Nearest-neighbour x2 upsampling of a [C x H x W] tensor.
Tensor upsample_nearest2x(const Tensor& x);

Tensor reshape(const Tensor& x, const Shape& shape);
/// Output axis i is input axis axes[i].
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
/// Concatenation along axis 0; trailing extents must agree.
Tensor concat(const std::vector<Tensor>& parts);
/// Rows [start, start + length) along axis 0.
Tensor slice(const Tensor& x, std::size_t start, std::size_t length);

// Reductions to a [1] tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse(const Tensor& pred, const Tensor& target);
Tensor l1(const Tensor& pred, const Tensor& target);

inline constexpr double kBceEpsilon = 1e-7;
/// Mean of -[t ln p + (1-t) ln(1-p)] with p clamped to [eps, 1-eps].
Tensor bce(const Tensor& pred, const Tensor& target);

}  // namespace dropforge::ops

namespace dropforge::detail {

// Row-major kernels shared by matmul and conv2d. All accumulate into c.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);

}  // namespace dropforge::detail
