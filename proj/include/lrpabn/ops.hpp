#pragma once

#include <cstddef>
#include <vector>

#include "lrpabn/tape.hpp"

// Differentiable operators. Each records its forward value on the operands'
// tape together with a backward rule. No implicit broadcasting: apart from the
// per-channel bias/affine terms, operand shapes must match exactly.
namespace lrpabn::ops {

/// 3x3 cross-correlation. input [b,c_in,h,w], kernel [c_out,c_in,3,3],
/// bias [c_out]; padding is 0 or 1.
Var conv2d(Var input, Var kernel, Var bias, int padding);

/// Batch normalization over axis 1 using statistics of the current batch.
/// Accepts [b,c,h,w] or [b,c,l]; gamma and beta are [c].
Var batchnorm(Var input, Var gamma, Var beta, double eps = 1e-5);

Var relu(Var x);
Var sigmoid(Var x);

/// 2x2 max pooling with stride 2 over the last two axes of [b,c,h,w]. Odd
/// extents are floored.
Var maxpool2x2(Var x);

/// x [b,in], weight [out,in], bias [out] -> [b,out].
Var linear(Var x, Var weight, Var bias);

Var hadamard(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var x, double factor);

/// [m,k]x[k,n] or batched [b,m,k]x[b,k,n]. With transpose_b the right operand
/// is given as [.., n, k].
Var matmul(Var a, Var b, bool transpose_b = false);

/// Sum over one axis, removing it. A rank-1 input reduces to shape [1].
Var sum_axis(Var x, std::size_t axis);
/// Sum of all elements, shape [1].
Var sum(Var x);
/// Mean of squared element differences, shape [1].
Var mse(Var a, Var b);

Var reshape(Var x, Shape shape);
/// Rows of x along axis 0, in the given order (repeats allowed).
Var gather(Var x, const std::vector<std::size_t>& rows);
/// Stack [b,c1,l] and [b,c2,l] along axis 1.
Var concat_channels(Var a, Var b);

/// projᵀ·x per batch item: x [b,c,l], proj [c,n] -> [b,n,l]. This is a 1x1
/// convolution without bias.
Var project_channels(Var x, Var proj);

/// z[p,i,j] = a[p,:,j]ᵀ · w[i] · b[p,:,j] for a,b [p,c,l] and w [n,c,c].
Var bilinear_form(Var a, Var w, Var b);

/// Spatial mean of the Hadamard product for every (row of a, row of b) pair:
/// a [m,n,l], b [k,n,l] -> [m·k, n] with out[i·k + j, r] = mean_l a[i,r,l]·b[j,r,l].
Var paired_hadamard_mean(Var a, Var b);

/// sign(v)·sqrt(|v|) elementwise. The derivative at exactly zero is taken as 0.
Var signed_sqrt(Var x);
/// Each row of [p,d] divided by its L2 norm; all-zero rows pass through.
Var l2_normalize_rows(Var x);
/// Cosine similarity of matching rows of two [p,d] operands -> [p].
/// Throws NumericError on an all-zero row.
Var row_cosine(Var a, Var b);

}  // namespace lrpabn::ops
