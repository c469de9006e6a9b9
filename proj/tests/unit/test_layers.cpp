#include <gtest/gtest.h>

#include <cmath>

#include "sinet/gradcheck.hpp"
#include "support/test_util.hpp"

namespace sinet {
namespace {

using testing::random_tensor;
using M = Tensor<double>;

TEST(Linear, IdentityZeroAndOracle) {
  Linear<double> lin(3, 3);
  lin.weight = M::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  Graph<double> g(false);
  const M x = M::vector({1, -2, 3});
  EXPECT_EQ(lin.forward(g, g.constant(x)).value(), x);
  lin.weight.fill(0);
  lin.bias = M::vector({4, 5, 6});
  Graph<double> g2(false);
  EXPECT_EQ(lin.forward(g2, g2.constant(x)).value(), lin.bias);

  Rng rng(1);
  Linear<double> r(4, 2);
  r.init(rng);
  for (double b : r.bias.values()) EXPECT_EQ(b, 0.0);
  r.bias = random_tensor<double>({2}, rng);
  const M xs = testing::random_integer_tensor<double>({4, 3}, rng, 5);
  const M got = r.forward(g, g.constant(xs)).value();
  M want = testing::naive_matmul(r.weight, xs);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) want(i, j) += r.bias[i];
  EXPECT_LE(max_abs_diff(got, want), 1e-14);
  EXPECT_THROW(r.forward(g, g.constant(M({5}))), ShapeError);
}

TEST(Linear, XavierBound) {
  Rng rng(2);
  Linear<double> lin(30, 20);
  lin.init(rng);
  const double a = std::sqrt(6.0 / 50.0);
  for (double w : lin.weight.values()) EXPECT_LE(std::abs(w), a);
}

TEST(BatchNorm, TrainNormalizesAndUpdatesRunningStats) {
  Rng rng(3);
  BatchNorm<double> bn(4);
  const M x = random_tensor<double>({4, 16}, rng, -3, 5);
  Graph<double> g(false);
  const M y = bn.forward(g, g.constant(x), Pass::train(rng)).value();
  for (std::size_t i = 0; i < 4; ++i) {
    double mean = 0, var = 0, xm = 0;
    for (std::size_t j = 0; j < 16; ++j) {
      mean += y(i, j) / 16;
      xm += x(i, j) / 16;
    }
    for (std::size_t j = 0; j < 16; ++j) var += (y(i, j) - mean) * (y(i, j) - mean) / 16;
    EXPECT_LT(std::abs(mean), 1e-5);
    EXPECT_NEAR(var, 1.0, 1e-4);
    EXPECT_NEAR(bn.running_mean[i], 0.1 * xm, 1e-12);
  }
  EXPECT_THROW(bn.forward(g, g.constant(M({4, 1})), Pass::train(rng)), BatchTooSmallError);
}

TEST(BatchNorm, EvalUsesRunningStatsOnly) {
  BatchNorm<double> bn(2);
  bn.gamma = M::vector({2, 3});
  bn.beta = M::vector({1, -1});
  Graph<double> g(false);
  const M x = M::matrix({{1, 2}, {3, 4}});
  const M y = bn.forward(g, g.constant(x), Pass::eval()).value();
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      EXPECT_NEAR(y(i, j), x(i, j) / std::sqrt(1 + 1e-5) * bn.gamma[i] + bn.beta[i], 1e-12);
  const M again = bn.forward(g, g.constant(x), Pass::eval()).value();
  EXPECT_EQ(y, again);
  EXPECT_EQ(bn.running_mean, M({2}));
}

TEST(MlpBlock, StagesShapesAndPurity) {
  Rng rng(4);
  MlpBlock<double> mlp(6, {5, 4, 3});
  mlp.init(rng);
  EXPECT_EQ(mlp.stages.size(), 3u);
  EXPECT_EQ(mlp.out_dim(), 3u);
  Graph<double> g(false);
  const M x = random_tensor<double>({6, 7}, rng);
  const M a = mlp.forward(g, g.constant(x), Pass::eval()).value();
  const M b = mlp.forward(g, g.constant(x), Pass::eval()).value();
  EXPECT_EQ(a.shape(), (Shape{3, 7}));
  EXPECT_EQ(a, b);
  for (double v : a.values()) EXPECT_GE(v, 0.0);
  EXPECT_THROW(mlp.forward(g, g.constant(M({5, 2})), Pass::eval()), ShapeError);
  EXPECT_THROW(MlpBlock<double>(3, {}), ConfigError);
}

TEST(MlpBlock, IdentityConfigurationOnStandardizedInput) {
  MlpBlock<double> mlp(2, {2});
  mlp.stages[0].fc.weight = M::matrix({{1, 0}, {0, 1}});
  const M x = M::matrix({{1, -1}, {-2, 2}});  // per row mean 0; variance 1 and 4
  Rng rng(0);
  Graph<double> g(false);
  const M y = mlp.forward(g, g.constant(x), Pass::train(rng)).value();
  EXPECT_NEAR(y(0, 0), 1.0, 1e-4);
  EXPECT_EQ(y(0, 1), 0.0);
  EXPECT_NEAR(y(1, 1), 1.0, 1e-4);
}

TEST(Lstm, ZeroFixedPointAndSaturation) {
  LstmCell<double> cell(3, 2);
  Graph<double> g(false);
  LstmState<double> s = cell.step(g, g.constant(M({3})), cell.zero_state(g));
  EXPECT_EQ(s.h.value(), M({2}));
  EXPECT_EQ(s.c.value(), M({2}));

  cell.bias.fill(50);
  Graph<double> h(false);
  const M c_prev = M::vector({0.3, -0.4});
  LstmState<double> prev{h.constant(M::vector({0.1, -0.2})), h.constant(c_prev)};
  LstmState<double> next = cell.step(h, h.constant(M({3})), prev);
  const M c = next.c.value(), hv = next.h.value();
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(c[i], c_prev[i] + 1, 1e-12);
    EXPECT_NEAR(hv[i], std::tanh(c[i]), 1e-12);
  }
  EXPECT_THROW(cell.step(h, h.constant(M({4})), prev), ShapeError);
}

TEST(Lstm, ForgetBiasInitAndBoundedness) {
  Rng rng(5);
  LstmCell<double> cell(4, 3);
  cell.init(rng);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(cell.bias[i], i >= 3 && i < 6 ? 1.0 : 0.0);
  Graph<double> g(false);
  LstmState<double> s = cell.zero_state(g);
  for (int t = 1; t <= 20; ++t) {
    s = cell.step(g, g.constant(random_tensor<double>({4}, rng, -5, 5)), s);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_LT(std::abs(s.h.value()[i]), 1.0);
      EXPECT_LE(std::abs(s.c.value()[i]), static_cast<double>(t));
    }
  }
}

TEST(Lstm, GradCheckThroughThreeSteps) {
  Rng rng(6);
  LstmCell<double> cell(3, 2);
  cell.init(rng);
  const std::vector<M> xs = {random_tensor<double>({3}, rng), random_tensor<double>({3}, rng),
                             random_tensor<double>({3}, rng)};
  auto f = [&](Graph<double>& g) {
    LstmState<double> s = cell.zero_state(g);
    for (const M& x : xs) s = cell.step(g, g.constant(x), s);
    return reduce_sum(mul(s.h, s.c));
  };
  std::vector<Tensor<double>*> params = {&cell.w_ih, &cell.w_hh, &cell.bias};
  EXPECT_LT(grad_check_parameters<double>(f, std::span<Tensor<double>* const>(params), 1e-5), 1e-6);
}

TEST(Dropout, IdentityCasesAndUnbiasedness) {
  Rng rng(7);
  Graph<double> g(false);
  const M x = random_tensor<double>({100}, rng, 1, 2);
  Var<double> v = g.constant(x);
  EXPECT_EQ(dropout(g, v, 0.0, Pass::train(rng)).value(), x);
  EXPECT_EQ(dropout(g, v, 0.5, Pass::eval()).value(), x);
  EXPECT_THROW(dropout(g, v, 1.0, Pass::train(rng)), ConfigError);
  M mean({100});
  const int masks = 10000;
  for (int i = 0; i < masks; ++i) {
    Graph<double> h(false);
    const M y = dropout(h, h.constant(x), 0.5, Pass::train(rng)).value();
    for (std::size_t j = 0; j < 100; ++j) mean[j] += y[j] / masks;
  }
  double total_in = 0, total_out = 0;
  for (std::size_t j = 0; j < 100; ++j) {
    EXPECT_NEAR(mean[j], x[j], 0.05 * x[j]);
    total_in += x[j];
    total_out += mean[j];
  }
  EXPECT_NEAR(total_out, total_in, 0.02 * total_in);
}

TEST(Embedding, LookupAndGradient) {
  Embedding<double> e(3, 3);
  e.table = M::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  Graph<double> g;
  Var<double> a = e.lookup(g, 1);
  const M row = a.value();
  EXPECT_EQ(row, M::vector({0, 1, 0}));
  const M again = e.lookup(g, 1).value();
  EXPECT_EQ(again, row);
  EXPECT_THROW(e.lookup(g, 3), VocabError);
  g.backward(reduce_sum(a));
  EXPECT_EQ(g.parameter_grad(e.table), M::matrix({{0, 0, 0}, {1, 1, 1}, {0, 0, 0}}));
}

}  // namespace
}  // namespace sinet
