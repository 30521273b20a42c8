// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

// Row-major GEMM kernels. Each output row depends only on the matching input
// row, so results are independent of how many rows are stacked together.
namespace rpt::kernels {

/// C[m,n] += A[m,k] * B[k,n]
inline void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* __restrict a,
                    const double* __restrict b, double* __restrict c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

/// C[m,n] += A[m,k] * B[n,k]^T. B is transposed once so the inner loop
/// runs over contiguous output columns like gemm_nn.
inline void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* __restrict a,
                    const double* __restrict b, double* __restrict c) {
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(m, k, n, a, bt.data(), c);
}

/// C[k,n] += A[m,k]^T * B[m,n]
inline void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* __restrict a,
                    const double* __restrict b, double* __restrict c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace rpt::kernels
