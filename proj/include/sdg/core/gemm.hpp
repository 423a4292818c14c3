#pragma once

#include <cstddef>
#include <vector>

// Small single-threaded matrix kernels. Every output element is produced by a
// fixed loop order, so results are reproducible bit for bit.

namespace sdg::gemm {

/// C[m,n] (+)= A[m,k] * B[k,n]
template <class T>
void nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
        bool accumulate = false) {
  if (!accumulate)
    for (std::size_t i = 0; i < m * n; ++i) c[i] = T{0};
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// C[m,n] (+)= A[k,m]^T * B[k,n]
template <class T>
void tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
        bool accumulate = false) {
  if (!accumulate)
    for (std::size_t i = 0; i < m * n; ++i) c[i] = T{0};
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
}

/// C[m,n] (+)= A[m,k] * B[n,k]^T
template <class T>
void nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
        bool accumulate = false) {
  std::vector<T> bt(n * k);
  transpose(n, k, b, bt.data());
  nn(m, n, k, a, bt.data(), c, accumulate);
}

}  // namespace sdg::gemm
