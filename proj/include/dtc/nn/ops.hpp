#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dtc/nn/tensor.hpp"

namespace dtc::nn {

// Every op checks shapes (DimensionError naming both shapes) and that its
// output is finite (NumericError), then records its backward rule when any
// input requires a gradient.

Tensor matmul(const Tensor& a, const Tensor& b);  // (m,k) x (k,n)
Tensor transpose(const Tensor& a);                // 2-D
Tensor add(const Tensor& a, const Tensor& b);     // same shape
Tensor add_bias(const Tensor& a, const Tensor& bias);  // (m,n) + (n) per row
Tensor mul(const Tensor& a, const Tensor& b);     // elementwise, same shape
Tensor scale(const Tensor& a, double s);
Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar

// Numerically stabilized softmax along `axis` (negative counts from the end).
Tensor softmax(const Tensor& a, int axis = -1);
// Row softmax over the last axis of a 2-D tensor with keys where
// key_mask[j] == 0 treated as -inf: their weights are exactly zero.
Tensor masked_softmax(const Tensor& a, std::span<const std::uint8_t> key_mask);

// Normalizes each row over the last axis, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-12);
Tensor gelu(const Tensor& x);  // exact erf form

Tensor embedding(const Tensor& table, std::span<const int> ids);  // (V,d) -> (len,d)
Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Inverted dropout with a mask drawn from `seed`; identity when p == 0.
Tensor dropout(const Tensor& x, double p, std::uint64_t seed);

// Mean over rows of -log softmax(logits)[target], via log-sum-exp.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);
// Mean over rows of KL(target_probs || softmax(logits)). target_probs is a
// constant (no gradient flows into it).
Tensor kl_divergence(const Tensor& logits, const Tensor& target_probs);

// Relative-position gather for disentangled attention. `a` is (S, 2k+1).
// Plain:      out[i][j] = a[i][clip(i - j) + k]
// Transposed: out[i][j] = a[j][clip(j - i) + k]
// with clip() clamping to [-k, k].
Tensor gather_relative(const Tensor& a, std::size_t seq, std::size_t k, bool transposed);

}  // namespace dtc::nn
