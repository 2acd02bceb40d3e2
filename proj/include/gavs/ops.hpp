#pragma once

#include <vector>

#include "gavs/tensor.hpp"

// Differentiable tensor operations. Every op returns a fresh tensor and
// records a backward closure when any input requires grad.
namespace gavs {

// Elementwise with numpy-style broadcasting (right-aligned, extents equal or 1).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

// a[..., m, k] x b[..., k, n] with broadcast batch dims. Both operands need rank >= 2.
Tensor matmul(const Tensor& a, const Tensor& b);

// x[..., in] * weight[in, out] + bias[out]; bias may be undefined. Rank-1 x is one row.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Swap the last two axes (materialized).
Tensor transpose(const Tensor& x);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& x, Shape shape);

Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Reductions. sum/mean return shape [1].
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mean_over(const Tensor& x, int axis);  // removes `axis`
Tensor max_over(const Tensor& x, int axis);   // removes `axis`; grad routed to first argmax

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
Tensor diagonal(const Tensor& x);  // [n, n] -> [n]

// x[c_in, h, w] or [B, c_in, h, w]; kernel[c_in, c_out, 2, 2]; bias[c_out] or undefined.
// Output spatial extents are exactly doubled.
Tensor conv_transpose2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                        std::size_t stride = 2);

// Row-wise x / sqrt(|x|^2 + eps) along the last axis.
Tensor l2_normalize(const Tensor& x, double eps = 1e-12);

// Mean binary cross-entropy from logits, stable form
// max(z,0) - z*y + log(1 + exp(-|z|)). Target is a constant.
Tensor bce_with_logits(const Tensor& logits, const Tensor& target);
// Unreduced per-element terms of bce_with_logits, same shape as `logits`.
Tensor bce_with_logits_terms(const Tensor& logits, const Tensor& target);

// Mean softmax cross-entropy of logits[..., K] against integer class targets,
// one per row.
Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& targets);

}  // namespace gavs
