#include "trace/kernels.hpp"

namespace trace::kernels::detail {
namespace {

template <class Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = a[i * k + p];
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += aip * b[p * n + j];
    }
  }
}

template <class Real>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] += acc;
    }
  }
}

template <class Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) {
      const Real api = a[p * m + i];
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += api * b[p * n + j];
    }
  }
}

template <class Real>
void axpy(std::size_t n, Real alpha, const Real* x, Real* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class Real>
Real dot(std::size_t n, const Real* x, const Real* y) {
  Real acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

}  // namespace

template <class Real>
const KernelTable<Real>& scalar_table() {
  static const KernelTable<Real> t{&gemm_nn<Real>, &gemm_nt<Real>, &gemm_tn<Real>, &axpy<Real>, &dot<Real>};
  return t;
}

template const KernelTable<float>& scalar_table<float>();
template const KernelTable<double>& scalar_table<double>();

}  // namespace trace::kernels::detail
