#include "sinet/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

namespace sinet::kernels::detail {
namespace {

struct F32 {
  using T = float;
  using V = float32x4_t;
  static constexpr std::size_t kLanes = 4;
  static V zero() { return vdupq_n_f32(0.0f); }
  static V load(const T* p) { return vld1q_f32(p); }
  static void store(T* p, V v) { vst1q_f32(p, v); }
  static V splat(T x) { return vdupq_n_f32(x); }
  static V add(V a, V b) { return vaddq_f32(a, b); }
  static V mul(V a, V b) { return vmulq_f32(a, b); }
  // c + a * b
  static V fmadd(V a, V b, V c) { return vfmaq_f32(c, a, b); }
  static T hsum(V v) { return vaddvq_f32(v); }
};

struct F64 {
  using T = double;
  using V = float64x2_t;
  static constexpr std::size_t kLanes = 2;
  static V zero() { return vdupq_n_f64(0.0); }
  static V load(const T* p) { return vld1q_f64(p); }
  static void store(T* p, V v) { vst1q_f64(p, v); }
  static V splat(T x) { return vdupq_n_f64(x); }
  static V add(V a, V b) { return vaddq_f64(a, b); }
  static V mul(V a, V b) { return vmulq_f64(a, b); }
  static V fmadd(V a, V b, V c) { return vfmaq_f64(c, a, b); }
  static T hsum(V v) { return vaddvq_f64(v); }
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
constexpr KernelTable<typename S::T> kTable{Isa::kNeon, &dot<S>,   &axpy<S>, &add<S>,
                                            &mul<S>,    &scale<S>, &sum<S>};

}  // namespace

template <>
const KernelTable<float>* neon_table<float>() {
  return &kTable<F32>;
}
template <>
const KernelTable<double>* neon_table<double>() {
  return &kTable<F64>;
}

}  // namespace sinet::kernels::detail

#else

namespace sinet::kernels::detail {
template <>
const KernelTable<float>* neon_table<float>() {
  return nullptr;
}
template <>
const KernelTable<double>* neon_table<double>() {
  return nullptr;
}
}  // namespace sinet::kernels::detail

#endif
