// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. Every op records itself on the given
// graph when any input requires a gradient and the graph is recording.
//
// Broadcasting is limited to add_bias (a vector added along the last axis).
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hmnet/tensor.hpp"

namespace hmnet::ops {

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);
/// [m,k] x [n,k]^T -> [m,n]
Tensor matmul_nt(Graph& g, const Tensor& a, const Tensor& b);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& x, double factor);
/// x[..., d] + bias[d]
Tensor add_bias(Graph& g, const Tensor& x, const Tensor& bias);

Tensor gelu(Graph& g, const Tensor& x);
Tensor tanh(Graph& g, const Tensor& x);

/// Softmax along `axis`, stabilized by max subtraction. Entries equal to
/// -infinity map to exactly zero probability.
Tensor softmax(Graph& g, const Tensor& x, std::size_t axis);

/// Normalize each position over the last axis, then apply gamma/beta.
Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

/// Rows of a rank-2 table selected by index: table[V,d], ids -> [ids.size(), d].
Tensor gather_rows(Graph& g, const Tensor& table, std::span<const std::size_t> ids);
/// Sub-block rows [r0, r0+nr) x cols [c0, c0+nc) of a rank-2 tensor.
Tensor slice_block(Graph& g, const Tensor& x, std::size_t r0, std::size_t nr, std::size_t c0, std::size_t nc);
Tensor concat_rows(Graph& g, std::span<const Tensor> parts);
Tensor concat_cols(Graph& g, std::span<const Tensor> parts);

Tensor sum(Graph& g, const Tensor& x);
Tensor mean(Graph& g, const Tensor& x);

/// Mean cross-entropy of logits[B,C] against integer class labels.
Tensor cross_entropy(Graph& g, const Tensor& logits, std::span<const std::size_t> labels);
/// Mean squared error of pred[B,1] (or [B]) against targets.
Tensor mse_loss(Graph& g, const Tensor& pred, std::span<const double> targets);

}  // namespace hmnet::ops
