#pragma once

#include <cstdint>
#include <vector>

#include "gsnet/autograd.hpp"

// Differentiable tensor kernels. Every op checks its shape contract, refuses
// to produce non-finite values, and records a vector-Jacobian product when
// any input requires a gradient. Image-like tensors are NCHW.

namespace gsnet::ops {

inline constexpr double kNormEps = 1e-12;
inline constexpr double kGroupNormEps = 1e-5;
inline constexpr double kLayerNormEps = 1e-5;

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
template <typename T> Var<T> sum(const Var<T>& a);

template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);
template <typename T> Var<T> gelu(const Var<T>& x);
/// Gradient passes only where lo <= x <= hi.
template <typename T> Var<T> clamp(const Var<T>& x, T lo, T hi);

/// x / sqrt(sum(x^2) + eps) along the last axis; the zero vector stays zero.
template <typename T> Var<T> l2_normalize(const Var<T>& x, double eps = kNormEps);
template <typename T> Var<T> softmax_lastdim(const Var<T>& x);
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = kLayerNormEps);

template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);
template <typename T> Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& axes);
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
template <typename T> Var<T> slice(const Var<T>& x, std::size_t axis, std::int64_t start, std::int64_t length);
/// [1, ...] -> [n, ...] by repetition; the gradient sums over the copies.
template <typename T> Var<T> repeat_batch(const Var<T>& x, std::int64_t n);

/// [m,k]x[k,n] or batched [b,m,k]x[b,k,n].
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
/// Affine map over the last axis; weight is Din x Dout.
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// weight: Cout x Cin x k x k, bias: Cout.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding);
/// Transposed convolution with stride == kernel and no padding.
/// weight: Cin x Cout x k x k, bias: Cout. Output extent is input x stride.
template <typename T>
Var<T> deconv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int kernel);
template <typename T>
Var<T> group_norm(const Var<T>& x, int groups, const Var<T>& gamma, const Var<T>& beta,
                  double eps = kGroupNormEps);
/// Bilinear interpolation with half-pixel centers (align_corners = false).
template <typename T> Var<T> bilinear_resize(const Var<T>& x, std::int64_t out_h, std::int64_t out_w);

}  // namespace gsnet::ops
