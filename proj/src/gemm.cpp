#include "headscope/gemm.hpp"

#include <immintrin.h>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace headscope::kernels {
namespace {

constexpr std::size_t kPanel = 16;

// Packs b[0:k, j:j+16] contiguously so the inner loop streams one cache line
// per reduction step.
void pack_panel(const float* b, std::size_t ldb, std::size_t k, std::size_t j, float* dst) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const float* src = b + kk * ldb + j;
    _mm256_storeu_ps(dst + kk * kPanel, _mm256_loadu_ps(src));
    _mm256_storeu_ps(dst + kk * kPanel + 8, _mm256_loadu_ps(src + 8));
  }
}

template <int Rows>
void panel_kernel(const float* a, std::size_t lda, const float* panel, std::size_t k, float* c,
                  std::size_t ldc, const float* bias) {
  __m256 acc[Rows][2];
  for (int r = 0; r < Rows; ++r) {
    acc[r][0] = _mm256_setzero_ps();
    acc[r][1] = _mm256_setzero_ps();
  }
  for (std::size_t kk = 0; kk < k; ++kk) {
    const __m256 b0 = _mm256_loadu_ps(panel + kk * kPanel);
    const __m256 b1 = _mm256_loadu_ps(panel + kk * kPanel + 8);
    for (int r = 0; r < Rows; ++r) {
      const __m256 av = _mm256_broadcast_ss(a + r * lda + kk);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < Rows; ++r) {
    __m256 lo = acc[r][0];
    __m256 hi = acc[r][1];
    if (bias != nullptr) {
      lo = _mm256_add_ps(lo, _mm256_loadu_ps(bias));
      hi = _mm256_add_ps(hi, _mm256_loadu_ps(bias + 8));
    }
    _mm256_storeu_ps(c + r * ldc, lo);
    _mm256_storeu_ps(c + r * ldc + 8, hi);
  }
}

void gemm(const float* a, std::size_t lda, const float* b, std::size_t ldb, float* c,
          std::size_t ldc, std::size_t m, std::size_t n, std::size_t k, const float* bias) {
  thread_local std::vector<float> panel;
  panel.resize(k * kPanel);
  const std::size_t full_cols = n - n % kPanel;
  for (std::size_t j = 0; j < full_cols; j += kPanel) {
    pack_panel(b, ldb, k, j, panel.data());
    const float* bias_j = bias != nullptr ? bias + j : nullptr;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      panel_kernel<4>(a + i * lda, lda, panel.data(), k, c + i * ldc + j, ldc, bias_j);
    }
    for (; i < m; ++i) {
      panel_kernel<1>(a + i * lda, lda, panel.data(), k, c + i * ldc + j, ldc, bias_j);
    }
  }
  for (std::size_t j = full_cols; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      float acc = 0.0f;
      for (std::size_t kk = 0; kk < k; ++kk) {
        acc = std::fma(a[i * lda + kk], b[kk * ldb + j], acc);
      }
      c[i * ldc + j] = bias != nullptr ? acc + bias[j] : acc;
    }
  }
}

}  // namespace

void matmul(const Matrix& a, const Matrix& b, std::span<const float> bias, Matrix& out) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  if (!bias.empty() && bias.size() != b.cols()) throw std::invalid_argument("matmul: bias size");
  if (out.rows() != a.rows() || out.cols() != b.cols()) out = Matrix(a.rows(), b.cols());
  gemm(a.data(), a.cols(), b.data(), b.cols(), out.data(), out.cols(), a.rows(), b.cols(),
       a.cols(), bias.empty() ? nullptr : bias.data());
}

void matmul_columns(const Matrix& a, const Matrix& b, std::size_t col_begin,
                    std::span<const float> bias, Matrix& out) {
  const std::size_t n = out.cols();
  if (a.cols() != b.rows() || col_begin + n > b.cols() || out.rows() != a.rows()) {
    throw std::invalid_argument("matmul_columns: shape mismatch");
  }
  if (!bias.empty() && bias.size() != b.cols()) throw std::invalid_argument("matmul_columns: bias");
  gemm(a.data(), a.cols(), b.data() + col_begin, b.cols(), out.data(), n, a.rows(), n, a.cols(),
       bias.empty() ? nullptr : bias.data() + col_begin);
}

void matmul_block(const Matrix& a, std::size_t a_col_begin, std::size_t k, const Matrix& b,
                  std::size_t b_row_begin, Matrix& out) {
  if (a_col_begin + k > a.cols() || b_row_begin + k > b.rows() || out.rows() != a.rows() ||
      out.cols() != b.cols()) {
    throw std::invalid_argument("matmul_block: shape mismatch");
  }
  gemm(a.data() + a_col_begin, a.cols(), b.data() + b_row_begin * b.cols(), b.cols(), out.data(),
       out.cols(), a.rows(), b.cols(), k, nullptr);
}

float dot(std::span<const float> x, std::span<const float> y) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < x.size(); ++i) acc = std::fma(x[i], y[i], acc);
  return acc;
}

double dot_f64(std::span<const float> x, std::span<const float> y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  }
  return acc;
}

void dot_rows(const Matrix& rows, std::span<const float> x, std::span<float> out) {
  if (rows.cols() != x.size() || rows.rows() != out.size()) {
    throw std::invalid_argument("dot_rows: shape mismatch");
  }
  const std::size_t k = x.size();
  const std::size_t vec_k = k - k % 8;
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    const float* row = rows.data() + r * k;
    __m256 acc = _mm256_setzero_ps();
    for (std::size_t i = 0; i < vec_k; i += 8) {
      acc = _mm256_fmadd_ps(_mm256_loadu_ps(row + i), _mm256_loadu_ps(x.data() + i), acc);
    }
    alignas(32) float lanes[8];
    _mm256_store_ps(lanes, acc);
    float sum = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    for (std::size_t i = vec_k; i < k; ++i) sum = std::fma(row[i], x[i], sum);
    out[r] = sum;
  }
}

}  // namespace headscope::kernels
