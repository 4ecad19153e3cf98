#pragma once

#include <cstddef>
#include <span>

#include "headscope/matrix.hpp"

namespace headscope::kernels {

// All kernels accumulate every output element with a fused multiply-add over
// the reduction index in ascending order. The result for a given element is
// therefore independent of the matrix sizes, of blocking, and of which code
// path produced it: a row computed inside a 5-row product is bit-identical
// to the same row computed inside a 500-row product.

/// out = a * b (+ bias broadcast over rows). a: [m x k], b: [k x n], out: [m x n].
void matmul(const Matrix& a, const Matrix& b, std::span<const float> bias, Matrix& out);

/// Same as matmul over a column window [col_begin, col_begin + out.cols()) of
/// b and bias; used to produce per-head slices without copying weights.
void matmul_columns(const Matrix& a, const Matrix& b, std::size_t col_begin,
                    std::span<const float> bias, Matrix& out);

/// out = a[:, a_col_begin : a_col_begin + k] * b[b_row_begin : b_row_begin + k, :]
void matmul_block(const Matrix& a, std::size_t a_col_begin, std::size_t k, const Matrix& b,
                  std::size_t b_row_begin, Matrix& out);

/// Sequential fused dot product in f32.
float dot(std::span<const float> x, std::span<const float> y);

/// Sequential dot product with f64 accumulation. Each f32 x f32 product is
/// exact in f64, so this is reproducible regardless of FMA contraction.
double dot_f64(std::span<const float> x, std::span<const float> y);

/// out[r] = dot(rows.row(r), x) with eight interleaved partial sums. Fixed
/// order, so still deterministic, but not bit-equal to dot().
void dot_rows(const Matrix& rows, std::span<const float> x, std::span<float> out);

}  // namespace headscope::kernels
