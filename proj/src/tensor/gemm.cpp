#include "gemm.hpp"

#include <cstring>

namespace nwq::detail {

namespace {

constexpr std::size_t kLanes = 8;

// 64-byte GCC vector; the compiler splits it when the target has narrower registers.
template <typename T>
struct Simd {
  typedef T type __attribute__((vector_size(64)));
  static constexpr std::size_t width = 64 / sizeof(T);
};
template <typename T>
using Vec = typename Simd<T>::type;

template <typename T>
inline Vec<T> load(const T* p) {
  Vec<T> v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename T>
inline void add_store(T* p, Vec<T> v) {
  Vec<T> cur = load(p);
  cur += v;
  std::memcpy(p, &cur, sizeof cur);
}

template <typename T>
inline T hsum(Vec<T> v) {
  T s = T(0);
  for (std::size_t l = 0; l < Simd<T>::width; ++l) s += v[l];
  return s;
}

// MR rows of C += A * B, where A(i, p) = a[i * ars + p * acs]. Each C entry gets the
// sum over p (in order), added once.
template <typename T, std::size_t MR>
void rows_block(std::size_t i0, std::size_t n, std::size_t k, const T* a, std::size_t ars,
                std::size_t acs, const T* b, T* c) {
  constexpr std::size_t W = Simd<T>::width;
  std::size_t j = 0;
  for (; j + 2 * W <= n; j += 2 * W) {
    Vec<T> acc[MR][2] = {};
    for (std::size_t p = 0; p < k; ++p) {
      const Vec<T> b0 = load(b + p * n + j);
      const Vec<T> b1 = load(b + p * n + j + W);
      for (std::size_t r = 0; r < MR; ++r) {
        const T av = a[(i0 + r) * ars + p * acs];
        acc[r][0] += av * b0;
        acc[r][1] += av * b1;
      }
    }
    for (std::size_t r = 0; r < MR; ++r) {
      add_store(c + (i0 + r) * n + j, acc[r][0]);
      add_store(c + (i0 + r) * n + j + W, acc[r][1]);
    }
  }
  for (; j + W <= n; j += W) {
    Vec<T> acc[MR] = {};
    for (std::size_t p = 0; p < k; ++p) {
      const Vec<T> b0 = load(b + p * n + j);
      for (std::size_t r = 0; r < MR; ++r) acc[r] += a[(i0 + r) * ars + p * acs] * b0;
    }
    for (std::size_t r = 0; r < MR; ++r) add_store(c + (i0 + r) * n + j, acc[r]);
  }
  for (; j < n; ++j) {
    for (std::size_t r = 0; r < MR; ++r) {
      T s = T(0);
      for (std::size_t p = 0; p < k; ++p) s += a[(i0 + r) * ars + p * acs] * b[p * n + j];
      c[(i0 + r) * n + j] += s;
    }
  }
}

template <typename T>
void gemm_strided(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t ars,
                  std::size_t acs, const T* b, T* c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) rows_block<T, 4>(i, n, k, a, ars, acs, b, c);
  for (; i < m; ++i) rows_block<T, 1>(i, n, k, a, ars, acs, b, c);
}

// MR x NR dot products of rows of A [., K] with rows of B [., K].
template <typename T, std::size_t MR, std::size_t NR>
void dot_block(std::size_t i0, std::size_t j0, std::size_t n, std::size_t k, const T* a,
               const T* b, T* c) {
  constexpr std::size_t W = Simd<T>::width;
  Vec<T> acc[MR][NR] = {};
  std::size_t p = 0;
  for (; p + W <= k; p += W) {
    Vec<T> av[MR], bv[NR];
    for (std::size_t r = 0; r < MR; ++r) av[r] = load(a + (i0 + r) * k + p);
    for (std::size_t s = 0; s < NR; ++s) bv[s] = load(b + (j0 + s) * k + p);
    for (std::size_t r = 0; r < MR; ++r) {
      for (std::size_t s = 0; s < NR; ++s) acc[r][s] += av[r] * bv[s];
    }
  }
  for (std::size_t r = 0; r < MR; ++r) {
    for (std::size_t s = 0; s < NR; ++s) {
      T sum = hsum<T>(acc[r][s]);
      for (std::size_t q = p; q < k; ++q) sum += a[(i0 + r) * k + q] * b[(j0 + s) * k + q];
      c[(i0 + r) * n + j0 + s] += sum;
    }
  }
}

template <typename T, std::size_t MR>
void dot_rows(std::size_t i0, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) dot_block<T, MR, 4>(i0, j, n, k, a, b, c);
  for (; j < n; ++j) dot_block<T, MR, 1>(i0, j, n, k, a, b, c);
}

}  // namespace

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  gemm_strided(m, n, k, a, k, 1, b, c);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  gemm_strided(m, n, k, a, 1, m, b, c);
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) dot_rows<T, 4>(i, n, k, a, b, c);
  for (; i < m; ++i) dot_rows<T, 1>(i, n, k, a, b, c);
}

template <typename T>
T lane_dot(const T* x, const T* y, std::size_t n) {
  T acc[kLanes] = {};
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += x[j + l] * y[j + l];
  }
  T s = T(0);
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  for (; j < n; ++j) s += x[j] * y[j];
  return s;
}

template <typename T>
T lane_sum(const T* x, std::size_t n) {
  T acc[kLanes] = {};
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += x[j + l];
  }
  T s = T(0);
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  for (; j < n; ++j) s += x[j];
  return s;
}

#define NWQ_INSTANTIATE(T)                                                              \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*); \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*); \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*); \
  template T lane_sum<T>(const T*, std::size_t);                                         \
  template T lane_dot<T>(const T*, const T*, std::size_t);

NWQ_INSTANTIATE(float)
NWQ_INSTANTIATE(double)

#undef NWQ_INSTANTIATE

}  // namespace nwq::detail
