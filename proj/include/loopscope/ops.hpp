// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "loopscope/tensor.hpp"

namespace loopscope::ops {

inline constexpr double kRmsNormEps = 1e-6;

// [m x k] * [k x n] -> [m x n]. 1-D `a` is treated as [1 x k].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// Adds a length-n bias to every row of an [m x n] tensor. This is the only
// broadcast the op set supports.
Tensor add_rowwise(const Tensor& x, const Tensor& bias);

Tensor silu(const Tensor& x);

// Row-wise x / sqrt(mean(x^2) + eps) * gain.
Tensor rmsnorm(const Tensor& x, const Tensor& gain);

// Row-wise, max-subtracted.
Tensor softmax(const Tensor& z);
Tensor log_softmax(const Tensor& z);

// [m x a] ++ [m x b] -> [m x (a+b)].
Tensor concat_cols(const Tensor& a, const Tensor& b);

// Row r of the result is `next` row r where keep_next[r] != 0, else `prev`.
Tensor select_rows(const Tensor& prev, const Tensor& next,
                   std::span<const unsigned char> keep_next);

// Gathers rows of `table` ([V x d]) for each id.
Tensor embedding(const Tensor& table, std::span<const int> ids);

// First `n` rows of a 2-D tensor.
Tensor take_rows(const Tensor& x, std::size_t n);

// Multi-head causal self-attention on projected q, k, v (all [T x d]).
// Head h uses columns [h*d/H, (h+1)*d/H). Scores are scaled by
// 1/sqrt(d/H) and positions j > i are masked out.
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        std::size_t n_heads);

// Mean next-token cross-entropy (nats) of [T x V] logits.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_squares(const Tensor& x);
// sum(x * w) for a constant weight tensor of the same shape.
Tensor weighted_sum(const Tensor& x, const Tensor& weights);

}  // namespace loopscope::ops
