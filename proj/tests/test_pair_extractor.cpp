#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"

using namespace rexpath;

namespace {

std::vector<PairLabel> gold_chain(int count) {
  std::vector<PairLabel> g;
  for (int i = 0; i < count; ++i) g.push_back({"p", 2 * i, 2 * i + 1, true});
  return g;
}

// Sampler rule evaluated in exact rational arithmetic, independently of the
// library: P_t = round-half-up(eta * num / (num + den)), then the caps.
std::pair<long, long> rule_counts(long gold, long available, long eta, long num, long den) {
  long pt = 0;
  // Smallest integer >= eta*num/(num+den) - 1/2, found by search.
  while (2 * (pt + 1) * (num + den) <= 2 * eta * num + (num + den)) ++pt;
  const long pos = std::min(gold, pt);
  long ratio_cap = 0;
  while ((ratio_cap + 1) * num <= pos * den) ++ratio_cap;
  const long neg = std::min({ratio_cap, eta - pos, available});
  return {pos, neg};
}

}  // namespace

TEST(Ratio, Parse) {
  EXPECT_EQ(Ratio::parse("1/5").num, 1);
  EXPECT_EQ(Ratio::parse("1/5").den, 5);
  const auto r = Ratio::parse("0.2");
  EXPECT_EQ(r.num, 1);
  EXPECT_EQ(r.den, 5);
  EXPECT_EQ(Ratio::parse("3").str(), "3/1");
  EXPECT_THROW(Ratio::parse("0"), Error);
  EXPECT_THROW(Ratio::parse("-1/2"), Error);
}

TEST(SampleCounts, WorkedExamples) {
  SamplerConfig cfg;
  EXPECT_EQ(cfg.target_positives(), 17);
  auto c = sample_counts(30, 10000, cfg);
  EXPECT_EQ(c.positives, 17);
  EXPECT_EQ(c.negatives, 83);
  c = sample_counts(5, 10000, cfg);
  EXPECT_EQ(c.positives, 5);
  EXPECT_EQ(c.negatives, 25);
  c = sample_counts(0, 10000, cfg);
  EXPECT_EQ(c.positives, 0);
  EXPECT_EQ(c.negatives, 0);
  // Few nodes: negatives limited by what exists.
  c = sample_counts(2, 4, cfg);
  EXPECT_EQ(c.negatives, 4);
}

TEST(SampleCounts, MatchesExactRule) {
  for (long eta : {2, 3, 10, 50, 100, 101}) {
    for (auto [num, den] : std::vector<std::pair<long, long>>{{1, 5}, {1, 1}, {2, 3}, {1, 9}, {3, 1}}) {
      SamplerConfig cfg;
      cfg.eta = static_cast<int>(eta);
      cfg.mu = {num, den};
      for (long gold = 0; gold <= 40; ++gold) {
        for (long avail : {0L, 3L, 50L, 100000L}) {
          const auto c = sample_counts(static_cast<int>(gold), avail, cfg);
          const auto [pos, neg] = rule_counts(gold, avail, eta, num, den);
          ASSERT_EQ(c.positives, pos) << eta << " " << num << "/" << den << " gold " << gold;
          ASSERT_EQ(c.negatives, neg) << eta << " " << num << "/" << den << " gold " << gold;
        }
      }
    }
  }
}

TEST(SamplePairs, SeventeenAndEightyThree) {
  SamplerConfig cfg;
  cfg.seed = 4;
  const auto pairs = sample_pairs(gold_chain(30), 80, cfg);
  int pos = 0, neg = 0;
  for (const auto& p : pairs) (p.positive ? pos : neg)++;
  EXPECT_EQ(pos, 17);
  EXPECT_EQ(neg, 83);
}

TEST(SamplePairs, LawsOnRandomPages) {
  Rng rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 2 + static_cast<int>(uniform_index(rng, 60));
    std::set<std::pair<int, int>> gold_set;
    const int want = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(std::min(40, n * (n - 1)))));
    std::vector<PairLabel> gold;
    while (static_cast<int>(gold_set.size()) < want) {
      const int s = static_cast<int>(uniform_index(rng, n)), o = static_cast<int>(uniform_index(rng, n));
      if (s != o && gold_set.emplace(s, o).second) gold.push_back({"p", s, o, true});
    }
    SamplerConfig cfg;
    cfg.eta = 2 + static_cast<int>(uniform_index(rng, 150));
    cfg.mu = {1 + static_cast<long>(uniform_index(rng, 3)), 1 + static_cast<long>(uniform_index(rng, 8))};
    cfg.seed = rng();
    const auto pairs = sample_pairs(gold, n, cfg);
    long pos = 0, neg = 0;
    std::set<std::pair<int, int>> seen;
    for (const auto& p : pairs) {
      ASSERT_NE(p.subject, p.object);
      ASSERT_TRUE(seen.emplace(p.subject, p.object).second) << "duplicate pair";
      ASSERT_EQ(gold_set.count({p.subject, p.object}) == 1, p.positive);
      (p.positive ? pos : neg)++;
    }
    ASSERT_LE(pos + neg, cfg.eta);
    ASSERT_LE(neg * cfg.mu.num, pos * cfg.mu.den);
    const auto [epos, eneg] = rule_counts(static_cast<long>(gold.size()), static_cast<long>(n) * (n - 1) - static_cast<long>(gold.size()),
                                          cfg.eta, cfg.mu.num, cfg.mu.den);
    ASSERT_EQ(pos, epos);
    ASSERT_EQ(neg, eneg);
    ASSERT_EQ(sample_pairs(gold, n, cfg), pairs);
  }
}

TEST(SamplePairs, NoPositivesIsAnError) {
  try {
    sample_pairs({}, 10, SamplerConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNoPositives);
  }
}

TEST(SamplePairs, DifferentSeedsDifferentNegatives) {
  SamplerConfig a, b;
  a.seed = 1;
  b.seed = 2;
  EXPECT_NE(sample_pairs(gold_chain(5), 50, a), sample_pairs(gold_chain(5), 50, b));
  EXPECT_NE(page_seed(1, "a"), page_seed(1, "b"));
  EXPECT_NE(page_seed(1, "a", 0), page_seed(1, "a", 1));
}

namespace {

struct Scorer {
  ParamStore<double> store;
  Biaffine<double> bi;
  explicit Scorer(int d) : bi(d, store) {}
};

}  // namespace

TEST(Biaffine, ZeroAndBiasOnly) {
  Scorer s(4);
  RowVec<double> u = RowVec<double>::Random(4), v = RowVec<double>::Random(4);
  EXPECT_EQ(s.bi.score(s.store, u, v), 0.0);
  EXPECT_EQ(sigmoid(0.0), 0.5);
  s.store.at("biaffine.b").value(0, 0) = 3.0;
  EXPECT_NEAR(sigmoid(s.bi.score(s.store, u, v)), 1.0 / (1.0 + std::exp(-3.0)), 1e-15);
  EXPECT_NEAR(sigmoid(3.0), 0.9525741268224334, 1e-15);
}

TEST(Biaffine, FormulaDirectednessAndSymmetricCase) {
  Scorer s(3);
  Rng rng(2);
  oracle::randomize(s.store, rng, 0.5);
  RowVec<double> u(3), v(3);
  u << 0.3, -1.0, 2.0;
  v << 1.5, 0.2, -0.7;
  const auto& M = s.store.at("biaffine.M").value;
  const auto& W = s.store.at("biaffine.W").value;
  double expected = s.store.at("biaffine.b").value(0, 0);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) expected += u(i) * M(i, j) * v(j);
    expected += W(0, i) * u(i) + W(0, 3 + i) * v(i);
  }
  EXPECT_NEAR(s.bi.score(s.store, u, v), expected, 1e-12);
  EXPECT_NE(s.bi.score(s.store, u, v), s.bi.score(s.store, v, u));

  Mat<double> nodes(2, 3);
  nodes.row(0) = u;
  nodes.row(1) = v;
  const auto all = s.bi.score_all(s.store, nodes);
  EXPECT_NEAR(all(0, 1), s.bi.score(s.store, u, v), 1e-12);
  EXPECT_NEAR(all(1, 0), s.bi.score(s.store, v, u), 1e-12);

  // Symmetric M and equal halves of W make the score symmetric.
  auto& Mm = s.store.at("biaffine.M").value;
  Mm = (Mm + Mm.transpose()).eval();
  auto& Wm = s.store.at("biaffine.W").value;
  Wm.rightCols(3) = Wm.leftCols(3);
  EXPECT_NEAR(s.bi.score(s.store, u, v), s.bi.score(s.store, v, u), 1e-12);
}

TEST(PairLoss, UniformPredictionIsLn2) {
  Scorer s(4);
  EncodedExample ex;
  ex.token_ids = {2, 4, 3, 5, 3};
  ex.node_spans = {{1, 1}, {3, 3}};
  const Mat<double> hidden = Mat<double>::Random(5, 4);
  const std::vector<LabeledPair> pairs = {{0, 1, true}, {1, 0, false}};
  EXPECT_NEAR(pair_loss(s.bi, s.store, ex, hidden, pairs).loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(pair_loss(s.bi, s.store, ex, hidden, {{0, 1, true}}).loss, std::log(2.0), 1e-15);

  s.store.at("biaffine.b").value(0, 0) = 40.0;
  EXPECT_LT(pair_loss(s.bi, s.store, ex, hidden, {{0, 1, true}}).loss, 1e-15);
  EXPECT_NEAR(pair_loss(s.bi, s.store, ex, hidden, {{0, 1, false}}).loss, 40.0, 1e-12);
  s.store.at("biaffine.b").value(0, 0) = -800.0;
  EXPECT_NEAR(bce_with_logit(-800.0, true), 800.0, 1e-9);
  EXPECT_TRUE(std::isfinite(pair_loss(s.bi, s.store, ex, hidden, {{0, 1, true}}).loss));
}

TEST(PairLoss, BiaffineGradientsMatchFiniteDifferences) {
  Scorer s(5);
  Rng rng(6);
  oracle::randomize(s.store, rng, 0.4);
  EncodedExample ex;
  ex.token_ids = {2, 4, 4, 3, 5, 3, 6, 3};
  ex.node_spans = {{1, 2}, {4, 4}, {6, 6}};
  Mat<double> hidden(8, 5);
  for (Eigen::Index i = 0; i < hidden.size(); ++i) hidden.data()[i] = uniform_unit(rng) - 0.5;
  const std::vector<LabeledPair> pairs = {{0, 1, true}, {1, 2, false}, {2, 0, false}, {0, 2, true}};
  s.store.zero_grad();
  Mat<double> dh = Mat<double>::Zero(8, 5);
  pair_loss(s.bi, s.store, ex, hidden, pairs, &dh);
  for (const char* name : {"biaffine.M", "biaffine.W", "biaffine.b"}) {
    const auto r = oracle::finite_difference(
        s.store, name, [&] { return pair_loss(s.bi, s.store, ex, hidden, pairs).loss; }, 1e-5, 100, rng);
    EXPECT_LE(r.rel_error, 1e-6) << name;
  }
  // dL/dhidden against finite differences on the hidden states.
  for (Eigen::Index i = 0; i < hidden.size(); ++i) {
    Mat<double> hp = hidden, hm = hidden;
    hp.data()[i] += 1e-5;
    hm.data()[i] -= 1e-5;
    const double num = (pair_loss(s.bi, s.store, ex, hp, pairs).loss - pair_loss(s.bi, s.store, ex, hm, pairs).loss) / 2e-5;
    EXPECT_NEAR(dh.data()[i], num, 1e-8);
  }
}

TEST(Decode, ThresholdsAndCandidateCount) {
  Scorer s(4);
  EncodedExample ex;
  ex.token_ids = {2, 4, 3, 5, 3, 6, 3, 7, 3};
  ex.node_spans = {{1, 1}, {3, 3}, {5, 5}, {7, 7}};
  const Mat<double> hidden = Mat<double>::Random(9, 4);
  std::size_t scored = 0;
  EXPECT_TRUE(decode(s.bi, s.store, ex, hidden, 0.5, &scored).empty());
  EXPECT_EQ(scored, 12u);
  const auto all = decode(s.bi, s.store, ex, hidden, 0.0);
  EXPECT_EQ(all.size(), 12u);
  for (const auto& p : all) {
    EXPECT_NE(p.subject, p.object);
    EXPECT_DOUBLE_EQ(p.probability, sigmoid(p.logit));
  }
  s.store.at("biaffine.b").value(0, 0) = 0.1;
  EXPECT_EQ(decode(s.bi, s.store, ex, hidden, 0.5).size(), 12u);
}
