#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "creole/error.hpp"
#include "creole/langid.hpp"
#include "creole/objective.hpp"
#include "creole/synthetic.hpp"

using namespace creole;

namespace {

const SizePreset kMicro{"micro", 1, 16, 2, 16};

struct Toy {
  Corpus corpus;
  Vocab vocab;
};

Toy toy_data(std::size_t n = 60) {
  const auto en = synthetic::make_language("en", "abcdefghij", 40, 1);
  const auto yo = synthetic::make_language("yo", "klmnopqrst", 40, 2);
  const Corpus creole = synthetic::make_corpus("c", "creole:c", synthetic::mixed_sentences({en, yo}, {0.5, 0.5}, n, 3, 8, 3));
  const Corpus aux = synthetic::make_corpus("en", "en", synthetic::sentences(en, n, 3, 8, 4));
  Corpus mixed = build_mixed_dataset(creole, {aux}, MixPolicy{});
  Vocab vocab = Vocab::build(mixed, 200, 1);
  return {std::move(mixed), std::move(vocab)};
}

TrainConfig micro_config(Objective obj, GroupStrategy strategy, std::int64_t steps) {
  TrainConfig c;
  c.objective = obj;
  c.strategy = strategy;
  c.preset = kMicro;
  c.steps = steps;
  c.batch_size = 8;
  c.lr = 1e-3;
  c.seed = 21;
  return c;
}

double max_abs_diff(const EncoderParams& a, const EncoderParams& b) {
  double d = 0;
  for (std::size_t t = 0; t < a.tensors.size(); ++t)
    for (std::size_t i = 0; i < a.tensors[t].values.size(); ++i)
      d = std::max(d, static_cast<double>(std::abs(a.tensors[t].values[i] - b.tensors[t].values[i])));
  return d;
}

}  // namespace

TEST(Masking, SelectionRateAndSplit) {
  std::vector<std::vector<int>> seqs(400, std::vector<int>(50));
  for (auto& s : seqs) std::iota(s.begin(), s.end(), 3);
  const TokenBatch batch = TokenBatch::from_sequences(seqs);
  Rng rng(1);
  const MaskedBatch mb = apply_masking(batch, MaskPolicy{}, 60, rng);
  mb.validate();
  const double n = static_cast<double>(mb.masked.size());
  EXPECT_NEAR(n / 20000.0, 0.15, 0.01);
  std::size_t masked = 0, kept = 0;
  for (const auto& m : mb.masked) {
    const int now = mb.tokens.id(m.row, m.col);
    masked += now == Vocab::kMask;
    kept += now == m.original;
    EXPECT_GE(now, Vocab::kMask);
  }
  EXPECT_NEAR(masked / n, 0.8, 0.03);
  // Kept covers p_keep plus random draws that landed on the original id.
  EXPECT_NEAR(kept / n, 0.1 + 0.1 / 57, 0.03);
}

TEST(Masking, AtLeastOnePerRowAndUnmaskedUntouched) {
  const TokenBatch batch = TokenBatch::from_sequences({{3}, {4, 5}, {6, 7, 8}});
  MaskPolicy p;
  p.rate = 0.01;
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const MaskedBatch mb = apply_masking(batch, p, 10, rng);
    EXPECT_NO_THROW(mb.validate());
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < batch.cols; ++c) {
        bool is_masked = false;
        for (const auto& m : mb.masked) is_masked |= m.row == r && m.col == c;
        if (!is_masked) EXPECT_EQ(mb.tokens.id(r, c), batch.id(r, c));
      }
  }
}

TEST(Masking, PolicyValidation) {
  MaskPolicy p;
  p.rate = 1.5;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = MaskPolicy{};
  p.p_keep = 0.3;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Erm, MeanOfLosses) {
  const std::vector<double> l = {1.0, 2.0, 6.0};
  EXPECT_DOUBLE_EQ(erm_loss(l), 3.0);
  EXPECT_THROW(erm_loss(std::vector<double>{}), std::invalid_argument);
}

TEST(Dro, ClosedFormTwoGroups) {
  const auto upd = dro_update(GroupWeights::uniform(2, 1.0), {1.0, 2.0});
  const double e = std::exp(1.0);
  EXPECT_NEAR(upd.weights.q[0], 1.0 / (1.0 + e), 1e-9);
  EXPECT_NEAR(upd.weights.q[1], e / (1.0 + e), 1e-9);
  EXPECT_NEAR(upd.weights.q[0], 0.26894142, 1e-8);
  EXPECT_NEAR(upd.weights.q[1], 0.73105858, 1e-8);
  EXPECT_NEAR(upd.loss, (1.0 + 2.0 * e) / (1.0 + e), 1e-12);
}

TEST(Dro, ZeroStepSizeAndSingleGroup) {
  GroupWeights q{{0.2, 0.3, 0.5}, 0.0};
  const auto upd = dro_update(q, {4.0, 1.0, 2.0});
  for (int g = 0; g < 3; ++g) EXPECT_NEAR(upd.weights.q[g], q.q[g], 1e-15);
  EXPECT_NEAR(upd.loss, 0.2 * 4 + 0.3 * 1 + 0.5 * 2, 1e-12);
  const auto one = dro_update(GroupWeights::uniform(1, 0.5), {3.0});
  EXPECT_DOUBLE_EQ(one.weights.q[0], 1.0);
  EXPECT_DOUBLE_EQ(one.loss, 3.0);
}

TEST(Dro, AbsentGroupsKeepMassAndSkipLoss) {
  GroupWeights q{{0.5, 0.25, 0.25}, 1.0};
  const auto upd = dro_update(q, {std::nullopt, 1.0, 0.0});
  const double e = std::exp(1.0);
  const double z = 0.5 + 0.25 * e + 0.25;
  EXPECT_NEAR(upd.weights.q[0], 0.5 / z, 1e-12);
  EXPECT_NEAR(upd.weights.q[1], 0.25 * e / z, 1e-12);
  EXPECT_NEAR(upd.loss, 0.25 * e / z, 1e-12);
  EXPECT_THROW(dro_update(q, {std::nullopt, std::nullopt, std::nullopt}), std::invalid_argument);
  EXPECT_THROW(dro_update(q, {1.0, NAN, 1.0}), NumericError);
  EXPECT_THROW(dro_update(q, {1.0, 1.0}), std::invalid_argument);
}

TEST(Dro, StaysOnSimplexAndFavorsLossyGroup) {
  Rng rng(8);
  GroupWeights q = GroupWeights::uniform(5, 0.05);
  double prev = q.q[4];
  for (int step = 0; step < 300; ++step) {
    std::vector<std::optional<double>> l(5);
    for (std::size_t g = 0; g < 4; ++g)
      if (uniform01(rng) < 0.7) l[g] = uniform01(rng);
    l[4] = 2.0 + uniform01(rng);
    q = dro_update(q, l).weights;
    EXPECT_NEAR(std::accumulate(q.q.begin(), q.q.end(), 0.0), 1.0, 1e-12);
    for (double v : q.q) EXPECT_GE(v, 0.0);
    EXPECT_GT(q.q[4], prev);
    prev = q.q[4];
  }
}

TEST(Aggregate, MatchesRecount) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 20), G = 1 + uniform_index(rng, 5);
    std::vector<double> losses(n), w(n);
    std::vector<int> groups(n);
    for (std::size_t i = 0; i < n; ++i) {
      losses[i] = uniform01(rng) * 5;
      w[i] = 1.0 + static_cast<double>(uniform_index(rng, 4));
      groups[i] = static_cast<int>(uniform_index(rng, G));
    }
    const auto plain = aggregate_by_group(losses, groups, G);
    const auto weighted = aggregate_by_group(losses, groups, G, w);
    for (std::size_t g = 0; g < G; ++g) {
      double s = 0, c = 0, ws = 0, wc = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (groups[i] == static_cast<int>(g)) {
          s += losses[i];
          c += 1;
          ws += w[i] * losses[i];
          wc += w[i];
        }
      if (c == 0) {
        EXPECT_FALSE(plain.losses[g].has_value());
        continue;
      }
      EXPECT_NEAR(*plain.losses[g], s / c, 1e-12);
      EXPECT_DOUBLE_EQ(plain.mass[g], c);
      EXPECT_NEAR(*weighted.losses[g], ws / wc, 1e-12);
    }
  }
  EXPECT_THROW(aggregate_by_group(std::vector<double>{1.0}, std::vector<int>{3}, 2), std::invalid_argument);
}

TEST(Objective, ParseNames) {
  EXPECT_EQ(parse_objective("dro"), Objective::dro);
  EXPECT_EQ(to_string(Objective::erm), "erm");
  EXPECT_THROW(parse_objective("sgd"), std::invalid_argument);
}

TEST(Train, DroWithOneGroupEqualsErm) {
  const Toy t = toy_data();
  const auto grouped = annotate_groups(t.corpus, nullptr, {GroupStrategy::one, 4, 0.001, 0});
  const auto erm = train(grouped, t.vocab, micro_config(Objective::erm, GroupStrategy::one, 40));
  const auto dro = train(grouped, t.vocab, micro_config(Objective::dro, GroupStrategy::one, 40));
  EXPECT_LT(max_abs_diff(erm.final_params, dro.final_params), 1e-6);
  for (std::size_t s = 0; s < erm.log.size(); ++s) EXPECT_NEAR(erm.log[s].loss, dro.log[s].loss, 1e-9);
}

TEST(Train, DeterministicAndLogged) {
  const Toy t = toy_data();
  const auto grouped = annotate_groups(t.corpus, nullptr, {GroupStrategy::language, 4, 0.001, 0});
  auto cfg = micro_config(Objective::dro, GroupStrategy::language, 20);
  cfg.checkpoint_interval = 5;
  std::vector<std::int64_t> seen;
  const auto a = train(grouped, t.vocab, cfg, nullptr, [&](std::int64_t s, const EncoderParams&) { seen.push_back(s); });
  const auto b = train(grouped, t.vocab, cfg);
  EXPECT_EQ(seen, (std::vector<std::int64_t>{5, 10, 15, 20}));
  EXPECT_EQ(max_abs_diff(a.final_params, b.final_params), 0.0);
  std::ostringstream la, lb;
  write_train_log(la, a.log);
  write_train_log(lb, b.log);
  EXPECT_EQ(la.str(), lb.str());
  EXPECT_EQ(la.str().substr(0, la.str().find('\n')), "step\tloss\tL_0\tL_1\tq_0\tq_1");
  ASSERT_EQ(a.log.size(), 20u);
  for (const auto& row : a.log) EXPECT_NEAR(row.q[0] + row.q[1], 1.0, 1e-12);
}

TEST(Train, BestCheckpointTracksDevLoss) {
  const Toy t = toy_data();
  const auto [tr, dev] = split_train_dev(t.corpus, 0.2, 3);
  const auto grouped = annotate_groups(tr, nullptr, {GroupStrategy::one, 4, 0.001, 0});
  auto cfg = micro_config(Objective::erm, GroupStrategy::one, 30);
  cfg.checkpoint_interval = 10;
  const auto r = train(grouped, t.vocab, cfg, &dev);
  EXPECT_TRUE(r.best_step == 10 || r.best_step == 20 || r.best_step == 30);
  EXPECT_NEAR(masked_lm_loss(r.best_params, t.vocab, dev, cfg.mask, mix_seed(cfg.seed, 4)), r.best_dev_loss, 1e-9);
}

TEST(Train, RejectsBadConfigs) {
  const Toy t = toy_data();
  const auto grouped = annotate_groups(t.corpus, nullptr, {GroupStrategy::one, 4, 0.001, 0});
  auto cfg = micro_config(Objective::erm, GroupStrategy::one, 0);
  EXPECT_THROW(train(grouped, t.vocab, cfg), std::invalid_argument);
  cfg = micro_config(Objective::dro, GroupStrategy::language, 5);
  EXPECT_THROW(train(grouped, t.vocab, cfg), std::invalid_argument);
  cfg = micro_config(Objective::erm, GroupStrategy::one, 5);
  cfg.lr = 0;
  EXPECT_THROW(train(grouped, t.vocab, cfg), std::invalid_argument);
}
