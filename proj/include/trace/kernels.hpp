#pragma once

// Dense arithmetic kernels behind the network layers.
//
// Every kernel has a portable scalar reference and, on x86-64, an AVX2/FMA
// variant. The variant is picked once at startup from CPUID and can be
// overridden with TRACE_ISA=scalar|avx2 or set_isa(). All matrices are
// row-major and contiguous; the gemm kernels accumulate into C.

#include <cstddef>
#include <string_view>

namespace trace::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);
bool isa_available(Isa isa);
Isa active_isa();
// Throws std::invalid_argument if the ISA is not available on this CPU/build.
void set_isa(Isa isa);

template <class Real>
struct KernelTable {
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c);
  // y += alpha * x
  void (*axpy)(std::size_t n, Real alpha, const Real* x, Real* y);
  Real (*dot)(std::size_t n, const Real* x, const Real* y);
};

template <class Real>
const KernelTable<Real>& table(Isa isa);

template <class Real>
const KernelTable<Real>& active() {
  return table<Real>(active_isa());
}

template <class Real>
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  active<Real>().gemm_nn(m, n, k, a, b, c);
}
template <class Real>
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  active<Real>().gemm_nt(m, n, k, a, b, c);
}
template <class Real>
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  active<Real>().gemm_tn(m, n, k, a, b, c);
}
template <class Real>
inline void axpy(std::size_t n, Real alpha, const Real* x, Real* y) {
  active<Real>().axpy(n, alpha, x, y);
}
template <class Real>
inline Real dot(std::size_t n, const Real* x, const Real* y) {
  return active<Real>().dot(n, x, y);
}

namespace detail {
template <class Real>
const KernelTable<Real>& scalar_table();
#if defined(TRACE_BUILD_AVX2)
template <class Real>
const KernelTable<Real>& avx2_table();
#endif
}  // namespace detail

}  // namespace trace::kernels
