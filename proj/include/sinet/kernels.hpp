#pragma once

// Vector kernels behind every dense inner loop. A scalar reference table is
// always present; SIMD tables (AVX2+FMA on x86-64, NEON on AArch64) are
// compiled when the toolchain supports them and selected at runtime.
//
// SIMD tables may reassociate reductions (dot, sum) and fuse multiply-adds
// (axpy), so they agree with the scalar table to rounding, not bit-exactly.
// add, mul and scale are bit-identical across tables.

#include <cstddef>
#include <string_view>
#include <vector>

namespace sinet::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

template <typename T>
struct KernelTable {
  Isa isa;
  // sum_i x[i] * y[i]
  T (*dot)(const T* x, const T* y, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // z[i] = x[i] + y[i]; z may alias x or y
  void (*add)(const T* x, const T* y, T* z, std::size_t n);
  // z[i] = x[i] * y[i]; z may alias x or y
  void (*mul)(const T* x, const T* y, T* z, std::size_t n);
  // y[i] = alpha * x[i]; y may alias x
  void (*scale)(T alpha, const T* x, T* y, std::size_t n);
  T (*sum)(const T* x, std::size_t n);
};

// Tables compiled into this build and supported by the running CPU.
std::vector<Isa> available_isas();
bool isa_available(Isa isa);

// The table currently used by tensor operations. Defaults to the widest
// available ISA; the SINET_KERNELS environment variable ("scalar", "avx2",
// "neon") overrides the default at first use.
Isa active_isa();

// Switches the process-wide table. Throws ConfigError if unavailable.
// Not thread-safe with respect to concurrent tensor operations.
void set_active_isa(Isa isa);

template <typename T>
const KernelTable<T>& active();

template <typename T>
const KernelTable<T>& table(Isa isa);

// Scoped ISA override, mostly for equivalence tests.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

// Dense row-major GEMM built on the active table:
//   C[m x n] (+)= op(A) * op(B)
// where op(A) is A[m x k] or, when trans_a, A[k x m] read transposed; likewise
// op(B) is B[k x n] or B[n x k]. Both transposed is not supported.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const T* a, const T* b, T* c, bool accumulate);

namespace detail {
template <typename T>
const KernelTable<T>& scalar_table();
template <typename T>
const KernelTable<T>* avx2_table();
template <typename T>
const KernelTable<T>* neon_table();
}  // namespace detail

}  // namespace sinet::kernels
