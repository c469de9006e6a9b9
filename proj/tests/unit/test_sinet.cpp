#include <gtest/gtest.h>

#include <cmath>

#include "sinet/sinet.hpp"
#include "sinet/train.hpp"
#include "support/test_util.hpp"

namespace sinet {
namespace {

using testing::random_tensor;
using M = Tensor<double>;
using Ptrs = std::span<const VideoSample<double>* const>;

std::vector<VideoSample<double>> videos(std::size_t count, Rng& rng, std::size_t dim = 6) {
  std::vector<VideoSample<double>> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(testing::random_video<double>(2 + i % 2, 3, dim, rng));
    out.back().label = i % 4;
  }
  return out;
}

class SinetByBranch : public ::testing::TestWithParam<FineBranch> {};

TEST_P(SinetByBranch, EvalIsDeterministicAndBatchInvariant) {
  Rng rng(1);
  SinetModel<double> model(testing::toy_sinet_config(6, 8, 4, GetParam()));
  model.init(rng);
  const auto vs = videos(3, rng);
  const auto ptrs = testing::pointers(vs);
  Graph<double> g(false);
  const M batch = model.forward_batch(g, Ptrs(ptrs), Pass::eval()).value();
  EXPECT_EQ(batch, model.forward_batch(g, Ptrs(ptrs), Pass::eval()).value());
  EXPECT_EQ(batch.shape(), (Shape{4, 3}));
  for (std::size_t j = 0; j < 3; ++j) {
    const M one = model.forward(g, vs[j], Pass::eval()).value();
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(one[c], batch(c, j), 1e-13);
  }
}

TEST_P(SinetByBranch, TrainModeNeedsTwoVideos) {
  Rng rng(2);
  SinetModel<double> model(testing::toy_sinet_config(6, 8, 4, GetParam()));
  model.init(rng);
  const auto vs = videos(1, rng);
  const auto ptrs = testing::pointers(vs);
  Graph<double> g;
  EXPECT_THROW(model.loss(g, Ptrs(ptrs), Pass::train(rng)), BatchTooSmallError);
}

INSTANTIATE_TEST_SUITE_P(Branches, SinetByBranch,
                         ::testing::Values(FineBranch::kHoi, FineBranch::kMeanPool, FineBranch::kPairs,
                                           FineBranch::kTriplets),
                         [](const auto& info) { return fine_branch_name(info.param); });

TEST(Sinet, ZeroFusionGivesUniformPrediction) {
  Rng rng(3);
  SinetModel<double> model(testing::toy_sinet_config(6, 8, 5));
  model.init(rng);
  model.fusion.weight.fill(0);
  const auto vs = videos(1, rng);
  Graph<double> g(false);
  const M z = model.forward(g, vs[0], Pass::eval()).value();
  const std::vector<std::size_t> label = {3};
  EXPECT_NEAR(cross_entropy(g.constant(z), std::span<const std::size_t>(label)).value().item(), std::log(5.0), 1e-14);
}

TEST(Sinet, FusionMatchesHandComputation) {
  Rng rng(4);
  SinetModel<double> model(testing::toy_sinet_config(4, 3, 2));
  model.init(rng);
  model.fusion.bias = M::vector({0.5, -0.25});
  model.bn_coarse.running_mean = random_tensor<double>({3}, rng);
  model.bn_fine.running_var = random_tensor<double>({3}, rng, 0.5, 2);
  VideoSample<double> v = testing::random_video<double>(1, 1, 4, rng);
  Graph<double> g(false);
  const VideoFeatures<double> f = model.features(g, v, Pass::eval());
  std::vector<double> fused;
  for (std::size_t i = 0; i < 3; ++i) {
    fused.push_back((f.coarse.value()[i] - model.bn_coarse.running_mean[i]) /
                    std::sqrt(model.bn_coarse.running_var[i] + 1e-5));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    fused.push_back((f.fine.value()[i] - model.bn_fine.running_mean[i]) / std::sqrt(model.bn_fine.running_var[i] + 1e-5));
  }
  const M logits = model.forward(g, v, Pass::eval()).value();
  for (std::size_t c = 0; c < 2; ++c) {
    double want = model.fusion.bias[c];
    for (std::size_t i = 0; i < 6; ++i) want += model.fusion.weight(c, i) * fused[i];
    EXPECT_NEAR(logits[c], want, 1e-13);
  }
  // with one frame the temporal attention returns the projected frame
  Var<double> phi = model.phi.forward(g, g.constant(transposed(v.frames)), Pass::eval());
  EXPECT_LE(max_abs_diff(f.coarse.value(), reshape(phi, Shape{3}).value()), 1e-15);
}

TEST(CrossEntropyLoss, SaturationAndExplicitFormula) {
  Graph<double> g(false);
  const std::vector<std::size_t> one = {1};
  EXPECT_NEAR(cross_entropy(g.constant(M::vector({0, 1e6, 0})), std::span<const std::size_t>(one)).value().item(),
              0.0, 1e-12);
  Rng rng(5);
  const M z = random_tensor<double>({6}, rng, -4, 4);
  double sum = 0;
  for (double v : z.values()) sum += std::exp(v);
  EXPECT_NEAR(cross_entropy(g.constant(z), std::span<const std::size_t>(one)).value().item(),
              -std::log(std::exp(z[1]) / sum), 1e-10);
  const std::vector<std::size_t> bad = {6};
  EXPECT_THROW(cross_entropy(g.constant(z), std::span<const std::size_t>(bad)), LabelError);
}

TEST(TopK, ExamplesTiesAndShiftInvariance) {
  const M logits = M::matrix({{1, 2, 0}, {1, 2, 5}, {0, 1, 5}});  // [3 classes x 3 samples]
  const std::vector<std::size_t> labels = {1, 0, 2};
  // columns are samples; ties rank the lower class first, so only sample 1
  // (label 0 tied with class 1) is a top-1 hit
  EXPECT_DOUBLE_EQ(topk_accuracy(logits, std::span<const std::size_t>(labels), 1), 1.0 / 3);
  EXPECT_DOUBLE_EQ(topk_accuracy(logits, std::span<const std::size_t>(labels), 2), 1.0);
  EXPECT_DOUBLE_EQ(topk_accuracy(logits, std::span<const std::size_t>(labels), 3), 1.0);
  M shifted = logits;
  for (double& v : shifted.storage()) v += 123.0;
  EXPECT_DOUBLE_EQ(topk_accuracy(shifted, std::span<const std::size_t>(labels), 1), 1.0 / 3);
  EXPECT_THROW(topk_accuracy(logits, std::span<const std::size_t>(labels), 4), ConfigError);
  EXPECT_THROW(topk_accuracy(logits, std::span<const std::size_t>(labels), 0), ConfigError);
  const std::vector<std::size_t> single = {2};
  EXPECT_DOUBLE_EQ(topk_accuracy(M::vector({0, 1, 3}), std::span<const std::size_t>(single), 1), 1.0);
}

TEST(Sinet, ConfigRoundTripAndValidation) {
  SinetConfig c = testing::toy_sinet_config(6, 8, 4, FineBranch::kPairs, Selection::kAlpha);
  c.norm_scope = NormScope::kFrame;
  ConfigMap m;
  c.write(m);
  const SinetConfig back = SinetConfig::read(m);
  EXPECT_EQ(back.fine, FineBranch::kPairs);
  EXPECT_EQ(back.selection, Selection::kAlpha);
  EXPECT_EQ(back.theta_widths, c.theta_widths);
  EXPECT_EQ(back.norm_scope, NormScope::kFrame);
  c.num_classes = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_fine_branch("quads"), ConfigError);
  EXPECT_THROW(parse_selection("softmax"), ConfigError);
}

TEST(Sinet, LossFallsOnASeparableToy) {
  Rng rng(6);
  SinetModel<double> model(testing::toy_sinet_config(4, 6, 2));
  model.init(rng);
  std::vector<VideoSample<double>> data;
  for (int i = 0; i < 8; ++i) {
    VideoSample<double> v = testing::random_video<double>(2, 2, 4, rng);
    const double shift = i % 2 ? 2.0 : -2.0;
    for (double& x : v.frames.storage()) x += shift;
    v.label = i % 2;
    data.push_back(v);
  }
  const auto ptrs = testing::pointers(data);
  TrainHooks<double> hooks;
  hooks.loss = [&](Graph<double>& g, Ptrs b, const Pass& p) { return model.loss(g, b, p); };
  model.collect(hooks.params, hooks.buffers);
  AdamState<double> adam;
  adam.lr = 1e-2;
  adam.reset(hooks.params);
  double first = 0, last = 0;
  for (int step = 0; step < 50; ++step) {
    Rng r(step);
    const double l = train_step(hooks, adam, Ptrs(ptrs), r);
    if (step == 0) first = l;
    last = l;
  }
  EXPECT_LT(last, first * 0.5);
}

TEST(Sinet, NormScopesAgreeInEvalMode) {
  Rng rng(7);
  SinetConfig c = testing::toy_sinet_config(6, 8, 4);
  SinetModel<double> a(c);
  a.init(rng);
  c.norm_scope = NormScope::kFrame;
  SinetModel<double> b(c);
  b.phi = a.phi;
  b.hoi = a.hoi;
  b.bn_coarse = a.bn_coarse;
  b.bn_fine = a.bn_fine;
  b.fusion = a.fusion;
  const auto vs = videos(3, rng);
  const auto ptrs = testing::pointers(vs);
  Graph<double> g(false);
  const M la = a.forward_batch(g, Ptrs(ptrs), Pass::eval()).value();
  const M lb = b.forward_batch(g, Ptrs(ptrs), Pass::eval()).value();
  EXPECT_LE(max_abs_diff(la, lb), 1e-13);
}

}  // namespace
}  // namespace sinet
