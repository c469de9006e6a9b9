// Compiled with -mavx2 -mfma on x86-64; only reached when the CPU reports
// both features.
#include "sinet/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace sinet::kernels::detail {
namespace {

struct F32 {
  using T = float;
  using V = __m256;
  static constexpr std::size_t kLanes = 8;
  static V zero() { return _mm256_setzero_ps(); }
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V splat(T x) { return _mm256_set1_ps(x); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
  static V mul(V a, V b) { return _mm256_mul_ps(a, b); }
  static V fmadd(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
  static T hsum(V v) {
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

struct F64 {
  using T = double;
  using V = __m256d;
  static constexpr std::size_t kLanes = 4;
  static V zero() { return _mm256_setzero_pd(); }
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V splat(T x) { return _mm256_set1_pd(x); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static V mul(V a, V b) { return _mm256_mul_pd(a, b); }
  static V fmadd(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
  static T hsum(V v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
  }
};

template <typename S>
typename S::T dot(const typename S::T* x, const typename S::T* y,
                  std::size_t n) {
  constexpr std::size_t L = S::kLanes;
  typename S::V acc0 = S::zero();
  typename S::V acc1 = S::zero();
  std::size_t i = 0;
  for (; i + 2 * L <= n; i += 2 * L) {
    acc0 = S::fmadd(S::load(x + i), S::load(y + i), acc0);
    acc1 = S::fmadd(S::load(x + i + L), S::load(y + i + L), acc1);
  }
  for (; i + L <= n; i += L) acc0 = S::fmadd(S::load(x + i), S::load(y + i), acc0);
  typename S::T acc = S::hsum(S::add(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename S>
void axpy(typename S::T alpha, const typename S::T* x, typename S::T* y,
          std::size_t n) {
  constexpr std::size_t L = S::kLanes;
  const typename S::V a = S::splat(alpha);
  std::size_t i = 0;
  for (; i + L <= n; i += L) S::store(y + i, S::fmadd(a, S::load(x + i), S::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename S>
void add(const typename S::T* x, const typename S::T* y, typename S::T* z,
         std::size_t n) {
  constexpr std::size_t L = S::kLanes;
  std::size_t i = 0;
  for (; i + L <= n; i += L) S::store(z + i, S::add(S::load(x + i), S::load(y + i)));
  for (; i < n; ++i) z[i] = x[i] + y[i];
}

template <typename S>
void mul(const typename S::T* x, const typename S::T* y, typename S::T* z,
         std::size_t n) {
  constexpr std::size_t L = S::kLanes;
  std::size_t i = 0;
  for (; i + L <= n; i += L) S::store(z + i, S::mul(S::load(x + i), S::load(y + i)));
  for (; i < n; ++i) z[i] = x[i] * y[i];
}

template <typename S>
void scale(typename S::T alpha, const typename S::T* x, typename S::T* y,
           std::size_t n) {
  constexpr std::size_t L = S::kLanes;
  const typename S::V a = S::splat(alpha);
  std::size_t i = 0;
  for (; i + L <= n; i += L) S::store(y + i, S::mul(a, S::load(x + i)));
  for (; i < n; ++i) y[i] = alpha * x[i];
}

template <typename S>
typename S::T sum(const typename S::T* x, std::size_t n) {
  constexpr std::size_t L = S::kLanes;
  typename S::V acc = S::zero();
  std::size_t i = 0;
  for (; i + L <= n; i += L) acc = S::add(acc, S::load(x + i));
  typename S::T total = S::hsum(acc);
  for (; i < n; ++i) total += x[i];
  return total;
}

template <typename S>
constexpr KernelTable<typename S::T> kTable{Isa::kAvx2, &dot<S>,   &axpy<S>, &add<S>,
                                            &mul<S>,    &scale<S>, &sum<S>};

}  // namespace

template <>
const KernelTable<float>* avx2_table<float>() {
  return &kTable<F32>;
}
template <>
const KernelTable<double>* avx2_table<double>() {
  return &kTable<F64>;
}

}  // namespace sinet::kernels::detail

#else

namespace sinet::kernels::detail {
template <>
const KernelTable<float>* avx2_table<float>() {
  return nullptr;
}
template <>
const KernelTable<double>* avx2_table<double>() {
  return nullptr;
}
}  // namespace sinet::kernels::detail

#endif
