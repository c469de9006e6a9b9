#include <atomic>
#include <cstdlib>
#include <cstring>
#include <string>

#include "sinet/error.hpp"
#include "sinet/kernels.hpp"

namespace sinet::kernels {
namespace {

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(__i386__)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

bool compiled(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
      return detail::avx2_table<float>() != nullptr;
    case Isa::kNeon:
      return detail::neon_table<float>() != nullptr;
  }
  return false;
}

Isa default_isa() {
  if (const char* env = std::getenv("SINET_KERNELS")) {
    for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon}) {
      if (isa_name(isa) == env && isa_available(isa)) return isa;
    }
  }
  if (isa_available(Isa::kAvx2)) return Isa::kAvx2;
  if (isa_available(Isa::kNeon)) return Isa::kNeon;
  return Isa::kScalar;
}

std::atomic<int>& active_slot() {
  static std::atomic<int> slot{static_cast<int>(default_isa())};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) { return compiled(isa) && cpu_supports(isa); }

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon}) {
    if (isa_available(isa)) out.push_back(isa);
  }
  return out;
}

Isa active_isa() { return static_cast<Isa>(active_slot().load(std::memory_order_relaxed)); }

void set_active_isa(Isa isa) {
  if (!isa_available(isa)) {
    throw ConfigError("kernel ISA '" + std::string(isa_name(isa)) + "' is not available");
  }
  active_slot().store(static_cast<int>(isa), std::memory_order_relaxed);
}

template <typename T>
const KernelTable<T>& table(Isa isa) {
  switch (isa) {
    case Isa::kAvx2:
      if (const auto* t = detail::avx2_table<T>()) return *t;
      break;
    case Isa::kNeon:
      if (const auto* t = detail::neon_table<T>()) return *t;
      break;
    case Isa::kScalar:
      break;
  }
  return detail::scalar_table<T>();
}

template <typename T>
const KernelTable<T>& active() {
  return table<T>(active_isa());
}

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  if (trans_a && trans_b) throw ShapeError("gemm: A^T * B^T is not supported");
  const KernelTable<T>& kt = active<T>();
  if (!accumulate) std::memset(c, 0, sizeof(T) * m * n);
  if (!trans_a && !trans_b) {
    // C[i,:] += A[i,p] * B[p,:]
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        kt.axpy(a[i * k + p], b + p * n, crow, n);
      }
    }
  } else if (!trans_a && trans_b) {
    // C[i,j] += <A[i,:], B[j,:]>
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += kt.dot(a + i * k, b + j * k, k);
    }
  } else {
    // C[i,:] += A[p,i] * B[p,:]
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        kt.axpy(a[p * m + i], brow, c + i * n, n);
      }
    }
  }
}

template const KernelTable<float>& table<float>(Isa);
template const KernelTable<double>& table<double>(Isa);
template const KernelTable<float>& active<float>();
template const KernelTable<double>& active<double>();
template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t,
                          const float*, const float*, float*, bool);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t,
                           const double*, const double*, double*, bool);

}  // namespace sinet::kernels
