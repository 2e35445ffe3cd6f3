// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "t2t/tensor.hpp"

// Differentiable primitives. Every op records itself on the tape of its
// tracked inputs; with no tracked input it is a plain computation.
//
// Broadcasting is deliberately narrow: element-wise binaries need equal
// shapes, matmul allows a rank-2 right operand against batched left
// operands, and broadcast_to only prepends leading dims.
namespace t2t::ops {

// a:[..., m, k] x b:[..., k, n] with equal leading dims, or b:[k, n].
Tensor matmul(const Tensor& a, const Tensor& b);
// Swaps the last two axes.
Tensor transpose(const Tensor& a);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& a, Shape shape);
// Repeats `a` over new leading dims; a.shape() must be a suffix of `shape`.
Tensor broadcast_to(const Tensor& a, const Shape& shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double epsilon);

// Inverted dropout; keep_prob == 1 is the identity and draws nothing.
Tensor dropout(const Tensor& x, double keep_prob, std::mt19937_64& rng);

// Rows of table:[V, d] selected by ids (shape ids_shape) -> ids_shape + [d].
Tensor embedding(const Tensor& table, std::span<const int> ids, const Shape& ids_shape);
// x:[..., V] -> [...], element ids[i] of each last-axis slice.
Tensor pick(const Tensor& x, std::span<const int> ids);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace t2t::ops
