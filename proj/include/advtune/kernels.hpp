#pragma once

// Small dense kernels used by the network layers. All matrices are row-major.
//
// Every output element is accumulated in an order fixed by the reduction
// length alone, so a sample's result is the same whether it is computed alone
// or inside a larger batch. Register blocking only changes which elements are
// computed together.

#include <algorithm>
#include <cstddef>

namespace advtune::kernels {

namespace detail {

// acc[i][j] = c[i][j] + sum_r x(i, r) * y(r, j), r ascending.
// x(i, r) = xs[i * x_row + r * x_col]; y(r, j) = ys[r * y_row + j].
template <std::size_t MR, std::size_t NR>
inline void block_update(const double* xs, std::size_t x_row, std::size_t x_col, const double* ys,
                         std::size_t y_row, std::size_t reduce, double* c, std::size_t c_row) {
  double acc[MR][NR];
  for (std::size_t i = 0; i < MR; ++i)
    for (std::size_t j = 0; j < NR; ++j) acc[i][j] = c[i * c_row + j];
  for (std::size_t r = 0; r < reduce; ++r) {
    const double* yr = ys + r * y_row;
    for (std::size_t i = 0; i < MR; ++i) {
      const double xv = xs[i * x_row + r * x_col];
#pragma omp simd
      for (std::size_t j = 0; j < NR; ++j) acc[i][j] += xv * yr[j];
    }
  }
  for (std::size_t i = 0; i < MR; ++i)
    for (std::size_t j = 0; j < NR; ++j) c[i * c_row + j] = acc[i][j];
}

inline void edge_update(const double* xs, std::size_t x_row, std::size_t x_col, const double* ys,
                        std::size_t y_row, std::size_t reduce, double* c, std::size_t c_row,
                        std::size_t mr, std::size_t nr) {
  for (std::size_t i = 0; i < mr; ++i)
    for (std::size_t j = 0; j < nr; ++j) {
      double s = c[i * c_row + j];
      for (std::size_t r = 0; r < reduce; ++r) s += xs[i * x_row + r * x_col] * ys[r * y_row + j];
      c[i * c_row + j] = s;
    }
}

// Shared driver: c[M,N] += X[M,R] Y[R,N] with X addressed by (x_row, x_col).
inline void blocked_gemm(const double* xs, std::size_t x_row, std::size_t x_col, const double* ys,
                         double* c, std::size_t m_dim, std::size_t reduce, std::size_t n_dim) {
  constexpr std::size_t MR = 4, NR = 16;
  std::size_t m0 = 0;
  for (; m0 + MR <= m_dim; m0 += MR) {
    std::size_t n0 = 0;
    for (; n0 + NR <= n_dim; n0 += NR)
      block_update<MR, NR>(xs + m0 * x_row, x_row, x_col, ys + n0, n_dim, reduce,
                           c + m0 * n_dim + n0, n_dim);
    for (; n0 + NR / 2 <= n_dim; n0 += NR / 2)
      block_update<MR, NR / 2>(xs + m0 * x_row, x_row, x_col, ys + n0, n_dim, reduce,
                               c + m0 * n_dim + n0, n_dim);
    if (n0 < n_dim)
      edge_update(xs + m0 * x_row, x_row, x_col, ys + n0, n_dim, reduce, c + m0 * n_dim + n0,
                  n_dim, MR, n_dim - n0);
  }
  for (; m0 < m_dim; ++m0) {
    std::size_t n0 = 0;
    for (; n0 + NR <= n_dim; n0 += NR)
      block_update<1, NR>(xs + m0 * x_row, x_row, x_col, ys + n0, n_dim, reduce,
                          c + m0 * n_dim + n0, n_dim);
    for (; n0 + NR / 2 <= n_dim; n0 += NR / 2)
      block_update<1, NR / 2>(xs + m0 * x_row, x_row, x_col, ys + n0, n_dim, reduce,
                              c + m0 * n_dim + n0, n_dim);
    if (n0 < n_dim)
      edge_update(xs + m0 * x_row, x_row, x_col, ys + n0, n_dim, reduce, c + m0 * n_dim + n0,
                  n_dim, 1, n_dim - n0);
  }
}

}  // namespace detail

// c[m, n] += sum_k a[m, k] * b[k, n]
inline void gemm_nn_acc(const double* a, const double* b, double* c, std::size_t m_dim,
                        std::size_t k_dim, std::size_t n_dim) {
  detail::blocked_gemm(a, k_dim, 1, b, c, m_dim, k_dim, n_dim);
}

// c[k, n] += sum_m a[m, k] * b[m, n]   (c += a^T b)
inline void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m_dim,
                        std::size_t k_dim, std::size_t n_dim) {
  detail::blocked_gemm(a, 1, k_dim, b, c, k_dim, m_dim, n_dim);
}

// c[m, k] += sum_n a[m, n] * b[k, n]   (c += a b^T)
//
// Each dot product is split into kLanes interleaved partial sums that are
// combined in lane order at the end.
inline void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m_dim,
                        std::size_t n_dim, std::size_t k_dim) {
  constexpr std::size_t kLanes = 8, KR = 4;
  const std::size_t n_full = n_dim - n_dim % kLanes;
  for (std::size_t m = 0; m < m_dim; ++m) {
    const double* arow = a + m * n_dim;
    std::size_t k0 = 0;
    for (; k0 < k_dim; k0 += KR) {
      const std::size_t kr = std::min(KR, k_dim - k0);
      double acc[KR][kLanes] = {};
      for (std::size_t n = 0; n < n_full; n += kLanes)
        for (std::size_t j = 0; j < kr; ++j) {
          const double* brow = b + (k0 + j) * n_dim + n;
#pragma omp simd
          for (std::size_t l = 0; l < kLanes; ++l) acc[j][l] += arow[n + l] * brow[l];
        }
      for (std::size_t j = 0; j < kr; ++j) {
        const double* brow = b + (k0 + j) * n_dim;
        for (std::size_t n = n_full; n < n_dim; ++n) acc[j][n - n_full] += arow[n] * brow[n];
        double s = 0.0;
        for (std::size_t l = 0; l < kLanes; ++l) s += acc[j][l];
        c[m * k_dim + k0 + j] += s;
      }
    }
  }
}

}  // namespace advtune::kernels
