#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "stance/hierarchy.hpp"
#include "stance/metrics.hpp"

using namespace stance;

namespace {

using L = StanceLabel;

// Bundles that carry their index in claim_ids[0], so stub stages can look up
// scripted answers.
std::vector<FeatureBundle> indexed_bundles(std::size_t n) {
  std::vector<FeatureBundle> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].claim_ids = {static_cast<int>(i)};
  return out;
}

struct ScriptedStages {
  std::vector<Relatedness> gate;
  std::vector<L> inner;  // answer stage 2 would give for each index
  std::vector<std::size_t> seen;
  std::size_t stage2_calls = 0;

  auto stage1() {
    return [this](std::span<const FeatureBundle> b) {
      std::vector<Relatedness> out;
      for (const auto& f : b) out.push_back(gate[f.claim_ids[0]]);
      return out;
    };
  }
  auto stage2() {
    return [this](std::span<const FeatureBundle> b) {
      ++stage2_calls;
      std::vector<L> out;
      for (const auto& f : b) {
        seen.push_back(static_cast<std::size_t>(f.claim_ids[0]));
        out.push_back(inner[f.claim_ids[0]]);
      }
      return out;
    };
  }
};

HierarchyConfig small_hierarchy() {
  HierarchyConfig h = HierarchyConfig::defaults();
  h.stage1 = fixtures::small_config(true, false);
  h.stage2 = fixtures::small_config(true, true, true);
  h.train1 = fixtures::small_train(4);
  h.train2 = fixtures::small_train(4);
  return h;
}

}  // namespace

TEST(CollapseBinary, OnlyUnrelatedIsUnrelated) {
  EXPECT_EQ(collapse_binary(L::agree), Relatedness::related);
  EXPECT_EQ(collapse_binary(L::disagree), Relatedness::related);
  EXPECT_EQ(collapse_binary(L::discuss), Relatedness::related);
  EXPECT_EQ(collapse_binary(L::unrelated), Relatedness::unrelated);
  for (L l : kAllStances) {
    EXPECT_EQ(static_cast<int>(collapse_binary(l)),
              class_of(LabelScheme::related2, l));
  }
}

TEST(Routing, UnrelatedThenAgree) {
  ScriptedStages s{{Relatedness::unrelated, Relatedness::related},
                   {L::discuss, L::agree}};
  HierarchyRoutingStats stats;
  const auto b = indexed_bundles(2);
  const auto out = predict_hierarchical(std::span<const FeatureBundle>(b),
                                        s.stage1(), s.stage2(), &stats);
  EXPECT_EQ(out, (std::vector<L>{L::unrelated, L::agree}));
  EXPECT_EQ(s.seen, (std::vector<std::size_t>{1}));
  EXPECT_EQ(stats.stage1_examples, 2u);
  EXPECT_EQ(stats.stage2_examples, 1u);
  EXPECT_EQ(stats.stage2_unrelated_inputs, 0u);
}

TEST(Routing, EmptyAndAllUnrelated) {
  ScriptedStages s;
  EXPECT_TRUE(predict_hierarchical(std::span<const FeatureBundle>{}, s.stage1(),
                                   s.stage2())
                  .empty());
  s.gate.assign(5, Relatedness::unrelated);
  s.inner.assign(5, L::agree);
  const auto b = indexed_bundles(5);
  const auto out = predict_hierarchical(std::span<const FeatureBundle>(b),
                                        s.stage1(), s.stage2());
  EXPECT_EQ(out, std::vector<L>(5, L::unrelated));
  EXPECT_EQ(s.stage2_calls, 0u);
}

// Stage 2 only ever sees what stage 1 let through, in order, and the output
// equals the pointwise composition.
TEST(Routing, RandomGatesComposePointwise) {
  Rng rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = rng.below(40);
    ScriptedStages s;
    std::vector<std::size_t> expect_seen;
    std::vector<L> expect;
    for (std::size_t i = 0; i < n; ++i) {
      s.gate.push_back(rng.below(2) ? Relatedness::related
                                    : Relatedness::unrelated);
      s.inner.push_back(kAllStances[rng.below(3)]);
      if (s.gate[i] == Relatedness::related) {
        expect_seen.push_back(i);
        expect.push_back(s.inner[i]);
      } else {
        expect.push_back(L::unrelated);
      }
    }
    const auto b = indexed_bundles(n);
    HierarchyRoutingStats stats;
    const auto out = predict_hierarchical(std::span<const FeatureBundle>(b),
                                          s.stage1(), s.stage2(), &stats);
    ASSERT_EQ(out, expect);
    ASSERT_EQ(s.seen, expect_seen);
    ASSERT_EQ(stats.stage2_examples, expect_seen.size());
    ASSERT_EQ(s.stage2_calls, expect_seen.empty() ? 0u : 1u);
  }
}

TEST(Routing, StageCountMismatchIsALogicError) {
  const auto b = indexed_bundles(3);
  auto short_gate = [](std::span<const FeatureBundle>) {
    return std::vector<Relatedness>{Relatedness::related};
  };
  auto inner = [](std::span<const FeatureBundle> x) {
    return std::vector<L>(x.size(), L::agree);
  };
  EXPECT_THROW(predict_hierarchical(std::span<const FeatureBundle>(b),
                                    short_gate, inner),
               std::logic_error);
}

TEST(Stage2Pool, KeepsGoldRelated) {
  const std::vector<LabeledPair> t{{"1", "c", "d", L::agree, DomainTag::target},
                                   {"2", "c", "d", L::unrelated, DomainTag::target},
                                   {"3", "c", "d", L::discuss, DomainTag::target},
                                   {"4", "c", "d", L::disagree, DomainTag::target}};
  const auto pool = stage2_pool(t);
  ASSERT_EQ(pool.size(), 3u);
  for (const auto& p : pool) EXPECT_NE(p.label, L::unrelated);
}

TEST(TrainHierarchical, SchemesAndEndToEnd) {
  const auto source = fixtures::small_synth(21).source;
  const auto target = fixtures::four_label_target(160, 21);
  const HierarchyTraining t = train_hierarchical(source, target, small_hierarchy());
  EXPECT_EQ(t.model.stage1.config.scheme, LabelScheme::related2);
  EXPECT_FALSE(t.model.stage1.config.has_domain_head());
  EXPECT_FALSE(t.model.stage1.config.use_cnn);
  EXPECT_EQ(t.model.stage2.config.scheme, LabelScheme::stance3);
  EXPECT_TRUE(t.model.stage2.config.has_domain_head());
  EXPECT_EQ(t.stage1_history.epochs.size(), 4u);
  for (const auto& e : t.stage1_history.epochs) {
    EXPECT_FALSE(e.train_domain_loss.has_value());
  }

  HierarchyRoutingStats stats;
  const auto pred = predict_hierarchical(t.model, target, &stats);
  ASSERT_EQ(pred.size(), target.size());
  EXPECT_EQ(stats.stage1_examples, target.size());
  std::size_t said_unrelated = 0;
  for (L l : pred) said_unrelated += l == L::unrelated;
  EXPECT_EQ(stats.stage2_examples, target.size() - said_unrelated);
}

TEST(TrainHierarchical, NeedsRelatedTargetExamples) {
  std::vector<LabeledPair> t{{"1", "c", "d", L::unrelated, DomainTag::target}};
  EXPECT_THROW(train_hierarchical({}, t, small_hierarchy()),
               std::invalid_argument);
  EXPECT_THROW(train_hierarchical({}, {}, small_hierarchy()),
               std::invalid_argument);
}

TEST(HierarchyCheckpoint, RoundTripAndBadManifest) {
  const auto target = fixtures::four_label_target(80, 22);
  const HierarchyTraining t =
      train_hierarchical({}, target, small_hierarchy());
  const std::string path = ::testing::TempDir() + "/h.ckpt";
  save_hierarchy(t.model, path);
  const HierarchicalModel back = load_hierarchy(path);
  EXPECT_EQ(predict_hierarchical(back, target),
            predict_hierarchical(t.model, target));

  const std::string bad = ::testing::TempDir() + "/h_bad.ckpt";
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    bytes.replace(bytes.find("stage2="), 7, "stageX=");
    std::ofstream out(bad, std::ios::binary);
    out << bytes;
  }
  EXPECT_THROW(load_hierarchy(bad), CheckpointError);
  EXPECT_THROW(load_hierarchy(::testing::TempDir() + "/missing.ckpt"),
               CheckpointError);
}
