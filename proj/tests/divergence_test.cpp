#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "creole/divergence.hpp"
#include "creole/rng.hpp"
#include "creole/synthetic.hpp"

using namespace creole;

namespace {

std::vector<std::vector<double>> gaussian(std::size_t n, std::size_t dim, double shift, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> out(n, std::vector<double>(dim));
  for (auto& v : out)
    for (auto& x : v) x = normal(rng) + shift;
  return out;
}

}  // namespace

TEST(Pad, FormulaFromError) {
  EXPECT_DOUBLE_EQ(pad_from_error(0.125), 1.5);
  EXPECT_DOUBLE_EQ(pad_from_error(0.0), 2.0);
  EXPECT_DOUBLE_EQ(pad_from_error(0.5), 0.0);
  EXPECT_DOUBLE_EQ(pad_from_error(0.7), 0.0);  // clamped
  EXPECT_THROW(pad_from_error(-0.1), std::invalid_argument);
}

TEST(Pad, SameDistributionIsNearZero) {
  const auto r = proxy_a_distance(gaussian(200, 8, 0.0, 1), gaussian(200, 8, 0.0, 2), 5);
  EXPECT_LE(r.pad, 0.3);
  EXPECT_GE(r.pad, 0.0);
}

TEST(Pad, DisjointDistributionsAreFar) {
  const auto r = proxy_a_distance(gaussian(200, 8, -3.0, 1), gaussian(200, 8, 3.0, 2), 5);
  EXPECT_GE(r.pad, 1.5);
  EXPECT_LE(r.pad, 2.0);
}

TEST(Pad, BalancesAndSplitsDomains) {
  const auto r = proxy_a_distance(gaussian(300, 4, 0.0, 1), gaussian(100, 4, 1.0, 2), 7);
  EXPECT_EQ(r.per_domain, 100u);
  EXPECT_EQ(r.train_size, 160u);
  EXPECT_EQ(r.test_size, 40u);
  EXPECT_EQ(r.seed, 7u);
  EXPECT_NEAR(r.pad, pad_from_error(r.error), 1e-12);
}

TEST(Pad, DeterministicPerSeed) {
  const auto a = gaussian(120, 6, 0.0, 1), b = gaussian(120, 6, 0.4, 2);
  EXPECT_EQ(proxy_a_distance(a, b, 3).error, proxy_a_distance(a, b, 3).error);
}

TEST(Pad, LabelSwapGivesSameError) {
  const auto x = gaussian(80, 5, 0.0, 3);
  const auto x2 = gaussian(80, 5, 0.5, 4);
  std::vector<std::vector<double>> train_x, test_x;
  std::vector<int> train_y, test_y;
  for (std::size_t i = 0; i < 80; ++i) {
    auto& xs = i < 64 ? train_x : test_x;
    auto& ys = i < 64 ? train_y : test_y;
    xs.push_back(x[i]);
    ys.push_back(0);
    xs.push_back(x2[i]);
    ys.push_back(1);
  }
  auto flip = [](std::vector<int> y) {
    for (auto& v : y) v = 1 - v;
    return y;
  };
  const PadOptions opt;
  const double e1 = holdout_error(train_x, train_y, test_x, test_y, opt, 9);
  const double e2 = holdout_error(train_x, flip(train_y), test_x, flip(test_y), opt, 9);
  EXPECT_DOUBLE_EQ(e1, e2);
}

TEST(Pad, DuplicatedDomainsAreIndistinguishable) {
  const auto a = gaussian(100, 4, 0.0, 1);
  EXPECT_LE(proxy_a_distance(a, a, 2).pad, 0.5);
}

TEST(Pad, RejectsSmallDomainsAndBadOptions) {
  EXPECT_THROW(proxy_a_distance(gaussian(39, 3, 0, 1), gaussian(100, 3, 0, 2), 1), std::invalid_argument);
  PadOptions bad;
  bad.train_fraction = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW(holdout_error({{1.0}}, {0, 1}, {{1.0}}, {0}, PadOptions{}, 1), std::invalid_argument);
}

TEST(Pad, EncodesOneVectorPerSentence) {
  const Vocab v({"[PAD]", "[UNK]", "[MASK]", "a", "b"});
  const auto params = init_encoder({"micro", 1, 16, 2, 16}, v.size(), 1);
  const Corpus c = synthetic::make_corpus("c", "en", {"a", "a b a", "b", "!!"});
  const auto enc = encode_sentences(params, v, c);
  ASSERT_EQ(enc.vectors.size(), 4u);  // "!!" tokenizes to UNK, not empty
  for (const auto& x : enc.vectors) EXPECT_EQ(x.size(), 16u);
  // A single-token sentence pools to its one hidden state, identical for equal inputs.
  const auto again = encode_sentences(params, v, synthetic::make_corpus("d", "en", {"a"}));
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(enc.vectors[0][i], again.vectors[0][i], 1e-6);
}

TEST(Pad, TsvSchema) {
  std::ostringstream out;
  write_pad_tsv(out, {{"Haitian", "bible", "news", 1.47}, {"English", "EWT", "NUD", 1.04}});
  EXPECT_EQ(out.str(), "language\tdomain-1\tdomain-2\tPAD\nHaitian\tbible\tnews\t1.4700\nEnglish\tEWT\tNUD\t1.0400\n");
}
