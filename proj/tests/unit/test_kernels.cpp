#include <gtest/gtest.h>

#include "sinet/kernels.hpp"
#include "support/test_util.hpp"

namespace sinet {
namespace {

using kernels::Isa;
using testing::random_tensor;

template <typename T>
class KernelEquivalence : public ::testing::Test {};
using Precisions = ::testing::Types<float, double>;
TYPED_TEST_SUITE(KernelEquivalence, Precisions);

template <typename T>
double tol() {
  return std::is_same_v<T, float> ? 2e-5 : 1e-13;
}

TYPED_TEST(KernelEquivalence, ElementwiseOpsAreBitIdentical) {
  using T = TypeParam;
  const auto& ref = kernels::table<T>(Isa::kScalar);
  Rng rng(1);
  for (Isa isa : kernels::available_isas()) {
    const auto& k = kernels::table<T>(isa);
    for (std::size_t n = 0; n < 70; ++n) {
      const Tensor<T> x = random_tensor<T>({n}, rng), y = random_tensor<T>({n}, rng);
      Tensor<T> a({n}), b({n});
      ref.add(x.data(), y.data(), a.data(), n);
      k.add(x.data(), y.data(), b.data(), n);
      EXPECT_EQ(a, b) << kernels::isa_name(isa) << " add n=" << n;
      ref.mul(x.data(), y.data(), a.data(), n);
      k.mul(x.data(), y.data(), b.data(), n);
      EXPECT_EQ(a, b) << kernels::isa_name(isa) << " mul n=" << n;
      ref.scale(T(0.37), x.data(), a.data(), n);
      k.scale(T(0.37), x.data(), b.data(), n);
      EXPECT_EQ(a, b) << kernels::isa_name(isa) << " scale n=" << n;
    }
  }
}

TYPED_TEST(KernelEquivalence, ReductionsAgreeToRounding) {
  using T = TypeParam;
  const auto& ref = kernels::table<T>(Isa::kScalar);
  Rng rng(2);
  for (Isa isa : kernels::available_isas()) {
    const auto& k = kernels::table<T>(isa);
    for (std::size_t n = 0; n < 130; n += (n < 20 ? 1 : 7)) {
      const Tensor<T> x = random_tensor<T>({n}, rng), y = random_tensor<T>({n}, rng);
      const double scale = 1.0 + static_cast<double>(n);
      EXPECT_NEAR(ref.dot(x.data(), y.data(), n), k.dot(x.data(), y.data(), n), tol<T>() * scale);
      EXPECT_NEAR(ref.sum(x.data(), n), k.sum(x.data(), n), tol<T>() * scale);
      Tensor<T> a = y, b = y;
      ref.axpy(T(-1.25), x.data(), a.data(), n);
      k.axpy(T(-1.25), x.data(), b.data(), n);
      EXPECT_LE(max_abs_diff(a, b), tol<T>() * 4);
    }
  }
}

TYPED_TEST(KernelEquivalence, AliasedOutputs) {
  using T = TypeParam;
  Rng rng(3);
  for (Isa isa : kernels::available_isas()) {
    const auto& k = kernels::table<T>(isa);
    const Tensor<T> x = random_tensor<T>({19}, rng), y = random_tensor<T>({19}, rng);
    Tensor<T> z = x;
    k.add(z.data(), y.data(), z.data(), 19);
    for (std::size_t i = 0; i < 19; ++i) EXPECT_EQ(z[i], x[i] + y[i]);
    k.scale(T(2), z.data(), z.data(), 19);
    for (std::size_t i = 0; i < 19; ++i) EXPECT_EQ(z[i], T(2) * (x[i] + y[i]));
  }
}

TYPED_TEST(KernelEquivalence, GemmMatchesNaiveForEveryLayout) {
  using T = TypeParam;
  Rng rng(4);
  for (Isa isa : kernels::available_isas()) {
    kernels::ScopedIsa scoped(isa);
    for (std::size_t m : {1, 3, 8, 13})
      for (std::size_t n : {1, 5, 16, 17})
        for (std::size_t kk : {1, 4, 9, 33}) {
          const Tensor<T> a = random_tensor<T>({m, kk}, rng), b = random_tensor<T>({kk, n}, rng);
          const Tensor<T> want = testing::naive_matmul(a, b);
          Tensor<T> c({m, n});
          kernels::gemm(false, false, m, n, kk, a.data(), b.data(), c.data(), false);
          EXPECT_LE(max_abs_diff(c, want), tol<T>() * kk);
          const Tensor<T> at = transposed(a), bt = transposed(b);
          kernels::gemm(true, false, m, n, kk, at.data(), b.data(), c.data(), false);
          EXPECT_LE(max_abs_diff(c, want), tol<T>() * kk);
          kernels::gemm(false, true, m, n, kk, a.data(), bt.data(), c.data(), false);
          EXPECT_LE(max_abs_diff(c, want), tol<T>() * kk);
          // accumulate doubles the product
          kernels::gemm(false, false, m, n, kk, a.data(), b.data(), c.data(), true);
          for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], 2 * want[i], 2 * tol<T>() * kk);
        }
  }
}

TEST(KernelDispatch, ScalarAlwaysAvailableAndScopedOverrideRestores) {
  EXPECT_TRUE(kernels::isa_available(Isa::kScalar));
  const Isa before = kernels::active_isa();
  {
    kernels::ScopedIsa s(Isa::kScalar);
    EXPECT_EQ(kernels::active_isa(), Isa::kScalar);
    EXPECT_EQ(kernels::active<float>().isa, Isa::kScalar);
  }
  EXPECT_EQ(kernels::active_isa(), before);
}

TEST(KernelDispatch, UnavailableIsaIsRejected) {
  for (Isa isa : {Isa::kAvx2, Isa::kNeon}) {
    if (!kernels::isa_available(isa)) EXPECT_THROW(kernels::set_active_isa(isa), ConfigError);
  }
}

TEST(KernelDispatch, ModelForwardAgreesAcrossIsas) {
  Rng rng(5);
  SinetModel<double> model(testing::toy_sinet_config(6, 8, 4));
  model.init(rng);
  std::vector<VideoSample<double>> videos;
  for (int i = 0; i < 3; ++i) videos.push_back(testing::random_video<double>(3, 4, 6, rng));
  const auto ptrs = testing::pointers(videos);
  Tensor<double> ref;
  {
    kernels::ScopedIsa s(Isa::kScalar);
    Graph<double> g(false);
    ref = model.forward_batch(g, std::span<const VideoSample<double>* const>(ptrs), Pass::eval()).value();
  }
  for (Isa isa : kernels::available_isas()) {
    kernels::ScopedIsa s(isa);
    Graph<double> g(false);
    const Tensor<double> got =
        model.forward_batch(g, std::span<const VideoSample<double>* const>(ptrs), Pass::eval()).value();
    EXPECT_LE(max_abs_diff(ref, got), 1e-12);
  }
}

}  // namespace
}  // namespace sinet
