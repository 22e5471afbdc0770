#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "trace/kernels.hpp"

namespace trace::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(TRACE_BUILD_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() {
  Isa best = cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
  if (const char* env = std::getenv("TRACE_ISA")) {
    const std::string want(env);
    if (want == "scalar") return Isa::kScalar;
    if (want == "avx2" && best == Isa::kAvx2) return Isa::kAvx2;
  }
  return best;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) { return isa == Isa::kScalar || cpu_has_avx2(); }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_available(isa)) throw std::invalid_argument("ISA not available: " + std::string(isa_name(isa)));
  current().store(isa, std::memory_order_relaxed);
}

template <class Real>
const KernelTable<Real>& table(Isa isa) {
#if defined(TRACE_BUILD_AVX2)
  if (isa == Isa::kAvx2) return detail::avx2_table<Real>();
#else
  (void)isa;
#endif
  return detail::scalar_table<Real>();
}

template const KernelTable<float>& table<float>(Isa);
template const KernelTable<double>& table<double>(Isa);

}  // namespace trace::kernels
