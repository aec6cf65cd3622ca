#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "iptkit/autograd.hpp"

namespace iptkit {

// Differentiable operations on Tape variables. All operands must live on
// the same tape. Matrices are rank-2; bias vectors may be rank-1 or 1 x C.
// Shape problems throw DimensionError naming the operation.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// a (R x C) + b broadcast over rows; b has C entries.
Var add_row(Var a, Var b);
Var mul(Var a, Var b);
Var mul_scalar(Var a, double s);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var gather_rows(Var a, std::span<const std::size_t> rows);

Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
/// Row-wise normalization followed by the affine gamma/beta transform.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Exact GELU, x * Phi(x).
Var gelu(Var a);
Var tanh(Var a);
/// Inverted dropout. Identity (the same Var) when not training or p == 0.
Var dropout(Var a, double p, Rng& rng, bool training);
Var embedding_lookup(Var table, std::span<const int> ids);
/// Column means over rows, shape 1 x C.
Var mean_rows(Var a);
Var sum(Var a);

/// Mean over rows of -log softmax(logits)[row, target].
Var cross_entropy(Var logits, std::span<const std::size_t> targets);

/// Row r of the output is the mean of rows [spans[r].first, spans[r].second).
Var pool_spans(Var x, std::span<const std::pair<std::size_t, std::size_t>> spans);

/// Biaffine scores of dependents X (N x H) against heads Xh (M x H) with a
/// weight tensor W (H x H x R) and head bias b (H x R):
///   Y[i, j, r] = X[i] W[:, :, r] Xh[j]^T + Xh[j] b[:, r]
/// Output shape N x M x R.
Var biaffine(Var x, Var w, Var b, Var xh);

/// For Y (N x M x R) returns the N x R matrix Y[i, cols[i], :].
Var select_cols(Var y, std::span<const std::size_t> cols);

// Value-only versions used by decoding and analysis.
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
Tensor biaffine(const Tensor& x, const Tensor& w, const Tensor& b, const Tensor& xh);

}  // namespace iptkit
