// AVX2 + FMA variants. This translation unit is the only one built with
// -mavx2 -mfma; nothing here may be called unless CPUID reports both.

#include <immintrin.h>

#include "trace/kernels.hpp"

namespace trace::kernels::detail {
namespace {

template <class Real>
struct Vec;

template <>
struct Vec<float> {
  using type = __m256;
  static constexpr std::size_t width = 8;
  static type zero() { return _mm256_setzero_ps(); }
  static type set1(float v) { return _mm256_set1_ps(v); }
  static type load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, type v) { _mm256_storeu_ps(p, v); }
  static type add(type a, type b) { return _mm256_add_ps(a, b); }
  static type fmadd(type a, type b, type c) { return _mm256_fmadd_ps(a, b, c); }
  static float hsum(type v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

template <>
struct Vec<double> {
  using type = __m256d;
  static constexpr std::size_t width = 4;
  static type zero() { return _mm256_setzero_pd(); }
  static type set1(double v) { return _mm256_set1_pd(v); }
  static type load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, type v) { _mm256_storeu_pd(p, v); }
  static type add(type a, type b) { return _mm256_add_pd(a, b); }
  static type fmadd(type a, type b, type c) { return _mm256_fmadd_pd(a, b, c); }
  static double hsum(type v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d hi64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, hi64));
  }
};

template <class Real>
void axpy(std::size_t n, Real alpha, const Real* x, Real* y) {
  using V = Vec<Real>;
  const auto va = V::set1(alpha);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) V::store(y + i, V::fmadd(va, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <class Real>
Real dot(std::size_t n, const Real* x, const Real* y) {
  using V = Vec<Real>;
  auto acc0 = V::zero();
  auto acc1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * V::width <= n; i += 2 * V::width) {
    acc0 = V::fmadd(V::load(x + i), V::load(y + i), acc0);
    acc1 = V::fmadd(V::load(x + i + V::width), V::load(y + i + V::width), acc1);
  }
  for (; i + V::width <= n; i += V::width) acc0 = V::fmadd(V::load(x + i), V::load(y + i), acc0);
  Real acc = V::hsum(V::add(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

// C[m x n] += sum_p a(i, p) * B[p, :], with a(i, p) = a[i * a_row + p * a_col].
// 4 x (2 * width) register tile; ragged edges fall back to axpy rows.
template <class Real>
void gemm_rank_update(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t a_row,
                      std::size_t a_col, const Real* b, Real* c) {
  using V = Vec<Real>;
  constexpr std::size_t kRows = 4;
  constexpr std::size_t kCols = 2 * V::width;
  const std::size_t n_tiled = n - n % kCols;
  std::size_t i = 0;
  for (; i + kRows <= m; i += kRows) {
    for (std::size_t j = 0; j < n_tiled; j += kCols) {
      typename V::type acc[kRows][2];
      for (std::size_t r = 0; r < kRows; ++r) {
        acc[r][0] = V::load(c + (i + r) * n + j);
        acc[r][1] = V::load(c + (i + r) * n + j + V::width);
      }
      for (std::size_t p = 0; p < k; ++p) {
        const auto b0 = V::load(b + p * n + j);
        const auto b1 = V::load(b + p * n + j + V::width);
        for (std::size_t r = 0; r < kRows; ++r) {
          const auto av = V::set1(a[(i + r) * a_row + p * a_col]);
          acc[r][0] = V::fmadd(av, b0, acc[r][0]);
          acc[r][1] = V::fmadd(av, b1, acc[r][1]);
        }
      }
      for (std::size_t r = 0; r < kRows; ++r) {
        V::store(c + (i + r) * n + j, acc[r][0]);
        V::store(c + (i + r) * n + j + V::width, acc[r][1]);
      }
    }
    if (n_tiled < n) {
      for (std::size_t r = 0; r < kRows; ++r) {
        for (std::size_t p = 0; p < k; ++p) {
          axpy<Real>(n - n_tiled, a[(i + r) * a_row + p * a_col], b + p * n + n_tiled, c + (i + r) * n + n_tiled);
        }
      }
    }
  }
  for (; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) axpy<Real>(n, a[i * a_row + p * a_col], b + p * n, c + i * n);
  }
}

template <class Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  gemm_rank_update<Real>(m, n, k, a, k, 1, b, c);
}

template <class Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  gemm_rank_update<Real>(m, n, k, a, 1, m, b, c);
}

template <class Real>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot<Real>(k, a + i * k, b + j * k);
  }
}

}  // namespace

template <class Real>
const KernelTable<Real>& avx2_table() {
  static const KernelTable<Real> t{&gemm_nn<Real>, &gemm_nt<Real>, &gemm_tn<Real>, &axpy<Real>, &dot<Real>};
  return t;
}

template const KernelTable<float>& avx2_table<float>();
template const KernelTable<double>& avx2_table<double>();

}  // namespace trace::kernels::detail
