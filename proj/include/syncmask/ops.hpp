#pragma once

#include <span>
#include <vector>

#include "syncmask/tape.hpp"

// Differentiable operations. Every operation validates shapes, computes its
// value eagerly, and records a backward closure when an input is trainable.
// Rank-1 inputs are treated as a single row.
namespace syncmask {

Var matmul(const Var& a, const Var& b);
// a[m x k] * b[n x k]^T
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
// Adds a length-n row vector to every row of a[m x n].
Var add_row(const Var& a, const Var& row);
// Multiplies every element of a by the one-element tensor s.
Var mul_scalar(const Var& a, const Var& s);

Var exp(const Var& a);
Var reciprocal(const Var& a);
Var gelu(const Var& a);

Var softmax_rows(const Var& x);
Var log_softmax_rows(const Var& x);

// Per-row normalization over the columns; gain and bias have length cols.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

Var sum(const Var& a);
Var mean(const Var& a);

Var slice_rows(const Var& a, int begin, int count);
Var slice_cols(const Var& a, int begin, int count);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);

// out[i] = table[ids[i]]
Var gather_rows(const Var& table, std::span<const int> ids);

// Rows i with mask[i] != 0 are replaced by row (length cols).
Var replace_rows(const Var& x, std::span<const unsigned char> mask, const Var& row);

// Each row divided by its L2 norm. Rejects a zero row.
Var l2_normalize_rows(const Var& x);

// Elementwise smooth-L1 between a and b with threshold gamma.
Var smooth_l1(const Var& a, const Var& b, double gamma);

}  // namespace syncmask
