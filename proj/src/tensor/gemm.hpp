#pragma once

// Small row-major matrix kernels used by the convolution ops. Accumulation order is
// fixed by the loop structure, so results are bit-reproducible within one build.

#include <cstddef>

namespace nwq::detail {

/// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

/// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

/// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

/// Sum of x[0..n) in eight interleaved lanes, then lane 0..7, then the tail.
template <typename T>
T lane_sum(const T* x, std::size_t n);

/// Dot product with the same lane structure as lane_sum.
template <typename T>
T lane_dot(const T* x, const T* y, std::size_t n);

}  // namespace nwq::detail
