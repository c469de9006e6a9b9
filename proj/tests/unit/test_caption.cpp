#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "sinet/caption.hpp"
#include "support/test_util.hpp"

namespace sinet {
namespace {

using testing::random_tensor;
using M = Tensor<double>;
using Tokens = std::vector<std::size_t>;
constexpr std::size_t kBos = Vocabulary::kBos, kEos = Vocabulary::kEos;

CaptionModel<double> toy_model(Rng& rng, CaptionMode mode = CaptionMode::kCoAttention, std::size_t vocab = 9) {
  CaptionModel<double> m(testing::toy_caption_config(5, 6, vocab, mode));
  m.init(rng);
  return m;
}

TEST(CoAttend, OneHotUniformAndConvexity) {
  Rng rng(1);
  Graph<double> g(false);
  const M h = random_tensor<double>({4, 3}, rng);
  Var<double> hs = g.constant(h);
  const M at2 = co_attend(g.constant(M::matrix({{0, 1, 0}})), hs).value();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(at2[i], h(i, 1));
  const M mean = co_attend(g.constant(M({1, 3}, 1.0 / 3)), hs).value();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(mean[i], (h(i, 0) + h(i, 1) + h(i, 2)) / 3, 1e-15);
  for (int rep = 0; rep < 50; ++rep) {
    Graph<double> r(false);
    const M w = row_softmax(r.constant(random_tensor<double>({1, 3}, rng, -3, 3))).value();
    const M out = co_attend(r.constant(w), r.constant(h)).value();
    const M u = random_tensor<double>({4}, rng);
    double lo = INFINITY, hi = -INFINITY, at = 0;
    for (std::size_t t = 0; t < 3; ++t) {
      double p = 0;
      for (std::size_t i = 0; i < 4; ++i) p += u[i] * h(i, t);
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
    for (std::size_t i = 0; i < 4; ++i) at += u[i] * out[i];
    EXPECT_LE(lo, at + 1e-12);
    EXPECT_LE(at, hi + 1e-12);
  }
  EXPECT_THROW(co_attend(g.constant(M({1, 2}, 0.5)), hs), ShapeError);
}

TEST(TemporalAttend, SingletonAndIdenticalFrames) {
  Rng rng(2);
  CaptionModel<double> m = toy_model(rng);
  Graph<double> g(false);
  Var<double> h1 = g.constant(random_tensor<double>({6}, rng));
  const M one = random_tensor<double>({6, 1}, rng);
  AttentionOutput<double> a = m.temporal_attend(g, h1, g.constant(one));
  EXPECT_EQ(a.weights.value(), M::matrix({{1}}));
  EXPECT_EQ(a.attended.value(), one.reshaped({6}));
  M same({6, 4});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t t = 0; t < 4; ++t) same(i, t) = one[i];
  AttentionOutput<double> b = m.temporal_attend(g, h1, g.constant(same));
  for (double w : b.weights.value().values()) EXPECT_NEAR(w, 0.25, 1e-15);
  EXPECT_LE(max_abs_diff(b.attended.value(), one.reshaped({6})), 1e-15);
}

TEST(CaptionModel, StepsAreDeterministicAndDistributionsNormalized) {
  Rng rng(3);
  CaptionModel<double> m = toy_model(rng);
  VideoSample<double> v = testing::random_video<double>(3, 2, 5, rng);
  Graph<double> g(false);
  const CaptionContext<double> ctx = m.encode(g, v, Pass::eval());
  const DecoderState<double> s0 = m.initial_state(g);
  const DecoderStep<double> a = m.step(g, ctx, s0, kBos, Pass::eval());
  const DecoderStep<double> b = m.step(g, ctx, s0, kBos, Pass::eval());
  EXPECT_EQ(a.logits.value(), b.logits.value());
  EXPECT_EQ(a.frame_weights.value().shape(), (Shape{1, 3}));
  DecoderState<double> s = s0;
  std::size_t word = kBos;
  for (int t = 0; t < 5; ++t) {
    const DecoderStep<double> st = m.step(g, ctx, s, word, Pass::eval());
    double total = 0;
    for (double lp : log_softmax(st.logits.value())) total += std::exp(lp);
    EXPECT_NEAR(total, 1.0, 1e-12);
    s = st.state;
    word = 4 + static_cast<std::size_t>(t) % 5;
  }
  EXPECT_THROW(m.step(g, ctx, s0, 9, Pass::eval()), VocabError);
}

class CaptionByMode : public ::testing::TestWithParam<CaptionMode> {};

TEST_P(CaptionByMode, UniformModelScoresLengthTimesLogVocab) {
  Rng rng(4);
  CaptionModel<double> m = toy_model(rng, GetParam());
  m.out.weight.fill(0);
  VideoSample<double> v = testing::random_video<double>(2, 3, 5, rng);
  const Tokens tokens = {kBos, 4, 7, 5, kEos};
  Graph<double> g(false);
  const CaptionContext<double> ctx = m.encode(g, v, Pass::eval());
  const double nll = m.caption_nll(g, ctx, tokens, Pass::eval()).value().item();
  EXPECT_NEAR(nll, 4 * std::log(9.0), 1e-12);
}

TEST_P(CaptionByMode, BatchLossIsTheMeanCaptionNll) {
  Rng rng(5);
  CaptionModel<double> m = toy_model(rng, GetParam());
  std::vector<VideoSample<double>> vs;
  for (int i = 0; i < 3; ++i) {
    vs.push_back(testing::random_video<double>(2 + i, 2, 5, rng));
    vs.back().caption = i == 0 ? Tokens{kBos, 4, kEos} : Tokens{kBos, 5, 6, 8, kEos};
  }
  const auto ptrs = testing::pointers(vs);
  Graph<double> g(false);
  const double batch = m.loss(g, std::span<const VideoSample<double>* const>(ptrs), Pass::eval()).value().item();
  double mean = 0;
  for (const auto& v : vs) {
    Graph<double> h(false);
    mean += m.caption_nll(h, m.encode(h, v, Pass::eval()), v.caption, Pass::eval()).value().item() / 3;
  }
  EXPECT_NEAR(batch, mean, 1e-12);
  EXPECT_GT(batch, 0.0);
}

INSTANTIATE_TEST_SUITE_P(Modes, CaptionByMode,
                         ::testing::Values(CaptionMode::kImageOnly, CaptionMode::kObjectOnly,
                                           CaptionMode::kNoCoAttention, CaptionMode::kCoAttention),
                         [](const auto& info) {
                           std::string name = caption_mode_name(info.param);
                           std::replace(name.begin(), name.end(), '+', '_');
                           return name;
                         });

TEST(CaptionModel, ImageOnlyModeIgnoresTheHoiParameters) {
  Rng rng(6);
  CaptionModel<double> m = toy_model(rng, CaptionMode::kImageOnly);
  VideoSample<double> v = testing::random_video<double>(3, 2, 5, rng);
  const Tokens tokens = {kBos, 4, 5, kEos};
  Graph<double> g;
  g.backward(m.caption_nll(g, m.encode(g, v, Pass::eval()), tokens, Pass::eval()));
  for (const auto& grp : m.hoi.groups) EXPECT_EQ(g.parameter_grad(grp.w_h.weight), M(grp.w_h.weight.shape()));
  EXPECT_EQ(g.parameter_grad(m.hoi.lstm.w_ih), M(m.hoi.lstm.w_ih.shape()));
  double moved = 0;
  for (double x : g.parameter_grad(m.out.weight).values()) moved += std::abs(x);
  EXPECT_GT(moved, 0.0);
}

TEST(CaptionModel, NoCoAttentionHasItsOwnObjectWeights) {
  Rng rng(7);
  CaptionModel<double> co = toy_model(rng, CaptionMode::kCoAttention);
  CaptionModel<double> own = toy_model(rng, CaptionMode::kNoCoAttention);
  VideoSample<double> v = testing::random_video<double>(4, 2, 5, rng);
  Graph<double> g(false);
  const DecoderStep<double> a = co.step(g, co.encode(g, v, Pass::eval()), co.initial_state(g), kBos, Pass::eval());
  EXPECT_EQ(a.object_weights.value(), a.frame_weights.value());
  const DecoderStep<double> b = own.step(g, own.encode(g, v, Pass::eval()), own.initial_state(g), kBos, Pass::eval());
  EXPECT_GT(max_abs_diff(b.object_weights.value(), b.frame_weights.value()), 0.0);
}

TEST(ValidateCaption, Malformed) {
  EXPECT_NO_THROW(validate_caption(Tokens{kBos, 4, Vocabulary::kUnk, kEos}, 9));
  EXPECT_NO_THROW(validate_caption(Tokens{kBos, kEos}, 9));
  EXPECT_THROW(validate_caption(Tokens{4, kEos}, 9), SequenceError);
  EXPECT_THROW(validate_caption(Tokens{kBos, 4}, 9), SequenceError);
  EXPECT_THROW(validate_caption(Tokens{kBos}, 9), SequenceError);
  EXPECT_THROW(validate_caption(Tokens{kBos, Vocabulary::kPad, kEos}, 9), SequenceError);
  EXPECT_THROW(validate_caption(Tokens{kBos, kEos, 4, kEos}, 9), SequenceError);
  EXPECT_THROW(validate_caption(Tokens{kBos, 9, kEos}, 9), VocabError);
  Tokens longest = {kBos};
  longest.insert(longest.end(), kMaxCaptionWords, 4);
  longest.push_back(kEos);
  EXPECT_NO_THROW(validate_caption(longest, 9));
  longest.insert(longest.begin() + 1, 5);
  EXPECT_THROW(validate_caption(longest, 9), SequenceError);
}

TEST(CaptionConfig, RoundTripAndValidation) {
  CaptionConfig c = testing::toy_caption_config(5, 6, 12, CaptionMode::kObjectOnly);
  c.selection = Selection::kAlpha;
  ConfigMap m;
  c.write(m);
  const CaptionConfig back = CaptionConfig::read(m);
  EXPECT_EQ(back.mode, CaptionMode::kObjectOnly);
  EXPECT_EQ(back.selection, Selection::kAlpha);
  EXPECT_EQ(back.vocab_size, 12u);
  EXPECT_EQ(back.attn_input(), 18u);
  c.vocab_size = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  for (const char* name : {"img", "obj", "img+obj", "img+obj+coattn"})
    EXPECT_EQ(caption_mode_name(parse_caption_mode(name)), name);
  EXPECT_THROW(parse_caption_mode("audio"), ConfigError);
  const CaptionConfig defaults;
  EXPECT_EQ(defaults.attn_input(), 512u + 1024 + 512);
  EXPECT_EQ(defaults.lang_input(), 512u + 1024 + 1024);
}

// ---------------------------------------------------------------------------
// Decoding over hand-written step functions

using Prefix = std::vector<std::size_t>;
using Table = std::map<Prefix, std::vector<double>>;

// log-probs over ids 0..5 per prefix; unlisted prefixes end with certainty
auto table_step(const Table& table) {
  return [&table](const Prefix& prefix, std::size_t prev) {
    Prefix next = prefix;
    if (prev != kBos) next.push_back(prev);
    auto it = table.find(next);
    std::vector<double> p(6, 0.0);
    if (it == table.end()) {
      p[kEos] = 1;
    } else {
      p = it->second;
    }
    std::vector<double> lp;
    for (double x : p) lp.push_back(std::log(x));
    return std::pair<Prefix, std::vector<double>>(next, lp);
  };
}

const std::vector<std::size_t> kCand = {kEos, 4, 5};

TEST(Decoding, BeamBeatsGreedyOnARiggedTree) {
  // greedy takes 4 (0.6) then faces a flat 0.34/0.33/0.33; 5 (0.4) then EOS is likely
  const Table t = {{{}, {0, 0, 0, 0, 0.6, 0.4}},
                   {{4}, {0, 0, 0.34, 0, 0.33, 0.33}},
                   {{5}, {0, 0, 0.9, 0, 0.05, 0.05}}};
  auto step = table_step(t);
  const DecodeResult greedy = greedy_search(Prefix{}, step, std::span<const std::size_t>(kCand), 30);
  DecodeOptions one;
  one.beam = 1;
  DecodeOptions two;
  two.beam = 2;
  const DecodeResult b1 = beam_search(Prefix{}, step, std::span<const std::size_t>(kCand), one);
  const DecodeResult b2 = beam_search(Prefix{}, step, std::span<const std::size_t>(kCand), two);
  EXPECT_EQ(greedy.words, (Tokens{4}));
  EXPECT_EQ(b1.words, greedy.words);
  EXPECT_NEAR(greedy.log_prob, std::log(0.6 * 0.34), 1e-12);
  EXPECT_EQ(b2.words, (Tokens{5}));
  EXPECT_NEAR(b2.log_prob, std::log(0.4 * 0.9), 1e-12);
}

TEST(Decoding, ImmediateEosGivesAnEmptyCaption) {
  const Table t = {{{}, {0, 0, 0.98, 0, 0.01, 0.01}}};
  auto step = table_step(t);
  DecodeOptions opt;
  const DecodeResult r = beam_search(Prefix{}, step, std::span<const std::size_t>(kCand), opt);
  EXPECT_TRUE(r.words.empty());
  EXPECT_NEAR(r.log_prob, std::log(0.98), 1e-12);
  EXPECT_TRUE(greedy_search(Prefix{}, step, std::span<const std::size_t>(kCand), 30).words.empty());
}

TEST(Decoding, MaxLengthForcesEos) {
  // a model that never wants to stop
  auto step = [](const Prefix& prefix, std::size_t prev) {
    Prefix next = prefix;
    if (prev != kBos) next.push_back(prev);
    std::vector<double> lp = {-50, -50, next.size() < 4 ? -50.0 : -30.0, -50, -0.01, -5};
    return std::pair<Prefix, std::vector<double>>(next, lp);
  };
  DecodeOptions opt;
  opt.max_len = 4;
  const DecodeResult r = beam_search(Prefix{}, step, std::span<const std::size_t>(kCand), opt);
  EXPECT_EQ(r.words, (Tokens{4, 4, 4, 4}));
  EXPECT_NEAR(r.log_prob, -0.04 - 30, 1e-12);
  EXPECT_EQ(greedy_search(Prefix{}, step, std::span<const std::size_t>(kCand), 4).words.size(), 4u);
}

TEST(Decoding, TiesPreferShorterThenSmallerIds) {
  const Table t = {{{}, {0, 0, 0.25, 0, 0.375, 0.375}}, {{4}, {0, 0, 1. / 1.5, 0, 0.5 / 3, 0.5 / 3}}};
  auto step = table_step(t);
  DecodeOptions opt;
  opt.beam = 3;
  // [5] ends with 0.375; [4] and the empty caption end near 0.25
  const DecodeResult r = beam_search(Prefix{}, step, std::span<const std::size_t>(kCand), opt);
  EXPECT_EQ(r.words, (Tokens{5}));
  const Table tie = {{{}, {0, 0, 0, 0, 0.5, 0.5}}};
  auto step2 = table_step(tie);
  EXPECT_EQ(beam_search(Prefix{}, step2, std::span<const std::size_t>(kCand), opt).words, (Tokens{4}));
  EXPECT_EQ(greedy_search(Prefix{}, step2, std::span<const std::size_t>(kCand), 30).words, (Tokens{4}));
}

TEST(Decoding, LengthNormalizationIsOptional) {
  // one word at 0.5 then EOS at 0.9 versus EOS at 0.3 right away
  const Table t = {{{}, {0, 0, 0.3, 0, 0.5, 0.2}}, {{4}, {0, 0, 0.9, 0, 0.05, 0.05}}};
  auto step = table_step(t);
  DecodeOptions raw;
  raw.beam = 3;
  DecodeOptions norm = raw;
  norm.length_normalize = true;
  EXPECT_EQ(beam_search(Prefix{}, step, std::span<const std::size_t>(kCand), raw).words, (Tokens{4}));
  const Table t2 = {{{}, {0, 0, 0.4, 0, 0.5, 0.1}}, {{4}, {0, 0, 0.7, 0, 0.15, 0.15}}};
  auto step2 = table_step(t2);
  // raw: 0.4 vs 0.35 keeps the empty caption; normalized: log(0.35)/2 > log(0.4)
  EXPECT_TRUE(beam_search(Prefix{}, step2, std::span<const std::size_t>(kCand), raw).words.empty());
  EXPECT_EQ(beam_search(Prefix{}, step2, std::span<const std::size_t>(kCand), norm).words, (Tokens{4}));
  DecodeOptions bad;
  bad.beam = 0;
  EXPECT_THROW(beam_search(Prefix{}, step, std::span<const std::size_t>(kCand), bad), ConfigError);
}

TEST(Decoding, ModelDecodesAgreeAndZeroOutputStopsAtOnce) {
  Rng rng(8);
  CaptionModel<double> m = toy_model(rng);
  for (double& w : m.out.weight.storage()) w *= 4;
  VideoSample<double> v = testing::random_video<double>(3, 2, 5, rng);
  DecodeOptions greedy;
  greedy.beam = 1;
  greedy.max_len = 10;
  DecodeOptions wide = greedy;
  wide.beam = 5;
  const DecodeResult a = decode_caption(m, v, greedy);
  const DecodeResult b = decode_caption(m, v, wide);
  EXPECT_GE(b.log_prob, a.log_prob - 1e-12);
  // uniform logits: every candidate ties and EOS has the lowest id
  m.out.weight.fill(0);
  EXPECT_TRUE(decode_caption(m, v, wide).words.empty());
  EXPECT_TRUE(decode_caption(m, v, greedy).words.empty());
  DecodeOptions bad;
  bad.beam = 0;
  EXPECT_THROW(decode_caption(m, v, bad), ConfigError);
}

TEST(Decoding, CandidatesAndOutputLine) {
  EXPECT_EQ(decodable_tokens(7), (std::vector<std::size_t>{kEos, 4, 5, 6}));
  Vocabulary vocab = Vocabulary::build({{"a", "cat", "a"}});
  const std::size_t a = vocab.id("a"), cat = vocab.id("cat");
  EXPECT_EQ(format_caption_line("vid7", {a, cat}, vocab), "vid7\ta cat");
  EXPECT_EQ(format_caption_line("vid8", {}, vocab), "vid8\t");
}

}  // namespace
}  // namespace sinet
