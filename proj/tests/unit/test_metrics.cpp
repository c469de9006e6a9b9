#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sinet/error.hpp"
#include "sinet/metrics.hpp"

namespace sinet {
namespace {

Sentence words(const std::string& s) {
  Sentence out;
  std::string cur;
  for (char c : s + " ") {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

TEST(Bleu, SelfScoreIsOne) {
  const Sentence s = words("a man rides a horse");
  for (double b : bleu(s, {s})) EXPECT_DOUBLE_EQ(b, 1.0);
  const std::vector<Sentence> corpus = {s, words("a dog chases the red ball"), words("two cats sleep on a mat")};
  std::vector<std::vector<Sentence>> refs;
  for (const Sentence& c : corpus) refs.push_back({c});
  for (double b : bleu(corpus, refs)) EXPECT_DOUBLE_EQ(b, 1.0);
}

TEST(Bleu, ClippingAndBrevityPenalty) {
  EXPECT_DOUBLE_EQ(bleu(words("the the the"), {words("the cat")}, 1)[0], 1.0 / 3);
  // two of five words: every n-gram matches but the penalty is exp(1 - 5/2)
  const std::vector<double> b = bleu(words("a man"), {words("a man rides a horse")});
  EXPECT_NEAR(b[0], std::exp(-1.5), 1e-15);
  EXPECT_NEAR(b[1], std::exp(-1.5), 1e-15);
  EXPECT_EQ(b[2], 0.0);
  EXPECT_EQ(b[3], 0.0);
  // the closest reference length sets the penalty
  EXPECT_DOUBLE_EQ(bleu(words("a man"), {words("a man rides a horse"), words("a man")})[1], 1.0);
}

TEST(Bleu, BoundsAndMonotoneOrders) {
  std::mt19937_64 rng(3);
  const Sentence pool = words("a the man dog cat rides chases sits on ball horse mat red");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1), len(1, 9);
  for (int rep = 0; rep < 200; ++rep) {
    Sentence c, r;
    for (std::size_t i = len(rng); i > 0; --i) c.push_back(pool[pick(rng)]);
    for (std::size_t i = len(rng); i > 0; --i) r.push_back(pool[pick(rng)]);
    const std::vector<double> b = bleu(c, {r});
    for (std::size_t n = 0; n < 4; ++n) {
      EXPECT_GE(b[n], 0.0);
      EXPECT_LE(b[n], 1.0);
    }
  }
}

TEST(Bleu, Errors) {
  EXPECT_THROW(bleu(std::vector<Sentence>{words("a")}, std::vector<std::vector<Sentence>>{}), ShapeError);
  EXPECT_THROW(bleu(words("a"), {}), EmptyInputError);
  EXPECT_THROW(bleu(words("a"), {words("a")}, 0), ConfigError);
  for (double b : bleu(Sentence{}, {words("a b")})) EXPECT_EQ(b, 0.0);
}

TEST(RougeL, HandCaseAndEdges) {
  // LCS 3 of a 4-word candidate against a 3-word reference: P = 0.75, R = 1
  const double f = rouge_l(words("the cat sat down"), {words("the cat sat")});
  EXPECT_NEAR(f, 2.44 * 0.75 / (1 + 1.44 * 0.75), 1e-12);
  EXPECT_DOUBLE_EQ(rouge_l(words("a b c"), {words("a b c")}), 1.0);
  EXPECT_EQ(rouge_l(Sentence{}, {words("a")}), 0.0);
  EXPECT_EQ(rouge_l(words("x y"), {words("a b")}), 0.0);
  // best over references
  EXPECT_DOUBLE_EQ(rouge_l(words("a b c"), {words("x"), words("a b c")}), 1.0);
  const double corpus = rouge_l(std::vector<Sentence>{words("a b c"), words("x y")},
                                std::vector<std::vector<Sentence>>{{words("a b c")}, {words("a b")}});
  EXPECT_DOUBLE_EQ(corpus, 0.5);
}

TEST(Lcs, Lengths) {
  EXPECT_EQ(lcs_length(words("a b c d"), words("b d")), 2u);
  EXPECT_EQ(lcs_length(words("a b c"), words("c b a")), 1u);
  EXPECT_EQ(lcs_length(Sentence{}, words("a")), 0u);
  EXPECT_EQ(lcs_length(words("a x b y c"), words("a b c")), 3u);
}

}  // namespace
}  // namespace sinet
