#include <gtest/gtest.h>

#include <chrono>

#include "oracle.hpp"
#include "stance/metrics.hpp"

using namespace stance;

namespace {

using L = StanceLabel;
constexpr L A = L::agree, D = L::disagree, S = L::discuss, U = L::unrelated;

std::vector<std::string> names(const std::vector<L>& v) {
  std::vector<std::string> out;
  for (L l : v) out.emplace_back(to_string(l));
  return out;
}

const std::vector<std::string> kClasses{"agree", "disagree", "discuss",
                                        "unrelated"};

}  // namespace

TEST(Accuracy, Examples) {
  const std::vector<L> g{A, D, S, U, A};
  EXPECT_EQ(accuracy<L>(g, g), 1.0);
  const std::vector<L> g2{A, S}, p2{A, A};
  EXPECT_EQ(accuracy<L>(g2, p2), 0.5);
  const std::vector<L> g3{A, A}, p3{D, U};
  EXPECT_EQ(accuracy<L>(g3, p3), 0.0);
  EXPECT_THROW(accuracy<L>(g2, std::vector<L>{A}), std::invalid_argument);
  EXPECT_THROW(accuracy<L>(std::vector<L>{}, std::vector<L>{}),
               std::invalid_argument);
}

TEST(MacroF1, Examples) {
  const std::vector<L> g{A, D, S, U};
  const auto perfect = macro_f1(g, g);
  EXPECT_EQ(perfect.macro, 1.0);
  EXPECT_EQ(perfect.per_class, (std::vector<double>{1, 1, 1, 1}));

  const std::vector<L> gold{A, A, D, D}, pred{A, D, D, D};
  const std::array<L, 2> ad{A, D};
  const auto f = macro_f1<L>(gold, pred, ad);
  EXPECT_NEAR(f.per_class[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(f.per_class[1], 0.8, 1e-12);
  EXPECT_NEAR(f.macro, 0.7333333333333333, 1e-12);

  // discuss and unrelated never appear: F1 0 each.
  const auto four = macro_f1(gold, pred);
  EXPECT_EQ(four.per_class[2], 0.0);
  EXPECT_EQ(four.per_class[3], 0.0);
  EXPECT_NEAR(four.macro, (2.0 / 3.0 + 0.8) / 4.0, 1e-12);
}

TEST(WeightedAccuracy, Examples) {
  const std::vector<L> g{U, A};
  EXPECT_EQ(fnc_weighted_accuracy(g, g), 1.0);
  EXPECT_EQ(fnc_weighted_accuracy(std::vector<L>{A}, std::vector<L>{S}), 0.25);
  EXPECT_EQ(fnc_weighted_accuracy(std::vector<L>{U}, std::vector<L>{A}), 0.0);
  EXPECT_THROW(fnc_weighted_accuracy(g, std::vector<L>{U}),
               std::invalid_argument);
}

TEST(WeightedAccuracy, AllUnrelatedOnSkewedMix) {
  std::vector<L> gold(73, U), pred(100, U);
  for (int i = 0; i < 27; ++i) gold.push_back(i % 3 == 0 ? A : S);
  EXPECT_NEAR(fnc_weighted_accuracy(gold, pred), oracle::kAllUnrelated73, 1e-15);
}

TEST(Metrics, MatchBruteForceOnThousandRandomLists) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(200);
    std::vector<L> gold(n), pred(n);
    for (auto& x : gold) x = kAllStances[rng.below(4)];
    for (auto& x : pred) x = kAllStances[rng.below(4)];
    const auto gs = names(gold), ps = names(pred);
    ASSERT_EQ(fnc_weighted_accuracy(gold, pred), oracle::fnc_score(gs, ps));
    ASSERT_EQ(accuracy<L>(gold, pred), oracle::accuracy(gs, ps));
    const auto f = macro_f1(gold, pred);
    ASSERT_EQ(f.per_class, oracle::per_class_f1(gs, ps, kClasses));
    ASSERT_EQ(f.macro, oracle::macro_f1(gs, ps, kClasses));
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          start).count(),
            5.0);
}

TEST(Metrics, InvariantUnderJointPermutation) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<std::size_t> order(n);
    std::vector<L> gold(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      order[i] = i;
      gold[i] = kAllStances[rng.below(4)];
      pred[i] = kAllStances[rng.below(4)];
    }
    rng.shuffle(order);
    std::vector<L> g2, p2;
    for (std::size_t i : order) {
      g2.push_back(gold[i]);
      p2.push_back(pred[i]);
    }
    EXPECT_EQ(accuracy<L>(gold, pred), accuracy<L>(g2, p2));
    EXPECT_NEAR(fnc_weighted_accuracy(gold, pred), fnc_weighted_accuracy(g2, p2),
                1e-12);
    EXPECT_EQ(macro_f1(gold, pred).per_class, macro_f1(g2, p2).per_class);
  }
}

TEST(Metrics, PerfectScoresCoincideWhenAllClassesPresent) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<L> gold{A, D, S, U};
    for (std::size_t i = rng.below(12); i > 0; --i) {
      gold.push_back(kAllStances[rng.below(4)]);
    }
    std::vector<L> pred = gold;
    if (rng.below(2)) pred[rng.below(pred.size())] = kAllStances[rng.below(4)];
    const bool acc = accuracy<L>(gold, pred) == 1.0;
    const auto f = macro_f1(gold, pred);
    EXPECT_EQ(acc, f.macro == 1.0);
    EXPECT_EQ(acc, fnc_weighted_accuracy(gold, pred) == 1.0);
    double sum = 0;
    for (double x : f.per_class) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
      sum += x;
    }
    EXPECT_EQ(f.macro, sum / 4.0);
  }
}

TEST(Evaluate, RowOrderFollowsClassList) {
  const std::vector<L> gold{A, D, S, U}, pred{A, D, S, U};
  const auto row = evaluate(gold, pred);
  EXPECT_EQ(row.weighted_accuracy, 1.0);
  EXPECT_EQ(row.accuracy, 1.0);
  EXPECT_EQ(row.macro_f1, 1.0);
  EXPECT_EQ(row.per_class_f1.size(), 4u);
}
