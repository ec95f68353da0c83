#pragma once

// Two-level prediction: a related/unrelated gate followed by a three-way
// agree/disagree/discuss classifier for the examples it lets through.

#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stance/ingest.hpp"
#include "stance/model.hpp"
#include "stance/trainer.hpp"

namespace stance {

enum class Relatedness { related = 0, unrelated = 1 };

inline Relatedness collapse_binary(StanceLabel l) {
  return l == StanceLabel::unrelated ? Relatedness::unrelated
                                     : Relatedness::related;
}

struct HierarchicalModel {
  StanceModel stage1;  // related2
  StanceModel stage2;  // stance3
};

struct HierarchyConfig {
  ModelConfig stage1;
  ModelConfig stage2;
  TrainConfig train1;
  TrainConfig train2;

  // Stage 1 defaults to the BOW model without domain adaptation.
  static HierarchyConfig defaults() {
    HierarchyConfig h;
    h.stage1.use_cnn = false;
    h.stage1.da_bow = h.stage1.da_cnn = false;
    h.stage2.da_cnn = true;
    return h;
  }
};

struct HierarchyRoutingStats {
  std::size_t stage1_examples = 0;
  std::size_t stage2_examples = 0;
  // Stage-2 inputs that stage 1 had called unrelated; zero by construction.
  std::size_t stage2_unrelated_inputs = 0;
};

// Routing core. stage1 maps bundles to Relatedness, stage2 maps the bundles
// it receives to related stances.
template <typename Stage1Fn, typename Stage2Fn>
std::vector<StanceLabel> predict_hierarchical(
    std::span<const FeatureBundle> bundles, Stage1Fn&& stage1,
    Stage2Fn&& stage2, HierarchyRoutingStats* stats = nullptr) {
  std::vector<StanceLabel> out(bundles.size(), StanceLabel::unrelated);
  if (bundles.empty()) return out;
  const std::vector<Relatedness> gate = stage1(bundles);
  if (gate.size() != bundles.size()) {
    throw std::logic_error("hierarchy: stage 1 returned wrong count");
  }
  std::vector<FeatureBundle> forwarded;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    if (gate[i] == Relatedness::related) {
      forwarded.push_back(bundles[i]);
      where.push_back(i);
    }
  }
  HierarchyRoutingStats local;
  local.stage1_examples = bundles.size();
  local.stage2_examples = forwarded.size();
  for (std::size_t i : where) {
    if (gate[i] != Relatedness::related) ++local.stage2_unrelated_inputs;
  }
  if (!forwarded.empty()) {
    const std::vector<StanceLabel> inner =
        stage2(std::span<const FeatureBundle>(forwarded));
    if (inner.size() != forwarded.size()) {
      throw std::logic_error("hierarchy: stage 2 returned wrong count");
    }
    for (std::size_t k = 0; k < where.size(); ++k) out[where[k]] = inner[k];
  }
  if (stats) *stats = local;
  return out;
}

// Each stage has its own featurizer, so routing works on raw pairs.
inline std::vector<StanceLabel> predict_hierarchical(
    const HierarchicalModel& h, std::span<const LabeledPair> pairs,
    HierarchyRoutingStats* stats = nullptr) {
  std::vector<FeatureBundle> first;
  for (const auto& p : pairs) first.push_back(h.stage1.features(p));
  std::vector<std::size_t> forwarded_index;
  auto gate = [&](std::span<const FeatureBundle> b) {
    std::vector<Relatedness> out;
    for (std::size_t c : predict(h.stage1, b)) {
      out.push_back(static_cast<Relatedness>(c));
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i] == Relatedness::related) forwarded_index.push_back(i);
    }
    return out;
  };
  auto inner = [&](std::span<const FeatureBundle> b) {
    std::vector<FeatureBundle> second;
    for (std::size_t i : forwarded_index) {
      second.push_back(h.stage2.features(pairs[i]));
    }
    if (second.size() != b.size()) {
      throw std::logic_error("hierarchy: routing mismatch");
    }
    return predict_stances(h.stage2, second);
  };
  return predict_hierarchical(std::span<const FeatureBundle>(first), gate,
                              inner, stats);
}

// Gold-related target examples plus every source example; source is related
// by construction of the FEVER label mapping.
inline std::vector<LabeledPair> stage2_pool(
    std::span<const LabeledPair> target) {
  std::vector<LabeledPair> out;
  for (const auto& p : target) {
    if (is_related(p.label)) out.push_back(p);
  }
  return out;
}

struct HierarchyTraining {
  HierarchicalModel model;
  TrainingHistory stage1_history;
  TrainingHistory stage2_history;
};

// Stage 1 on all target examples with collapsed labels and no domain head;
// stage 2 on gold-related target plus source.
inline HierarchyTraining train_hierarchical(std::span<const LabeledPair> source,
                                            std::span<const LabeledPair> target,
                                            HierarchyConfig cfg) {
  if (target.empty()) throw std::invalid_argument("hierarchy: empty target");
  cfg.stage1.scheme = LabelScheme::related2;
  cfg.stage1.da_bow = cfg.stage1.da_cnn = false;
  cfg.stage2.scheme = LabelScheme::stance3;
  const auto related = stage2_pool(target);
  if (related.empty()) {
    throw std::invalid_argument("hierarchy: no related examples for stage 2");
  }
  TrainRun s1 = train(cfg.stage1, cfg.train1, {}, target);
  TrainRun s2 = train(cfg.stage2, cfg.train2, source, related);
  return {{std::move(s1.model), std::move(s2.model)},
          std::move(s1.history),
          std::move(s2.history)};
}

// A manifest line naming both class orders, then the two stage checkpoints
// as u64-length-prefixed blobs.
inline void save_hierarchy(const HierarchicalModel& h,
                           const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot write checkpoint: " + path);
  os << "#hierarchy stage1=related,unrelated stage2=agree,disagree,discuss\n";
  detail::ByteWriter w(os);
  for (const StanceModel* m : {&h.stage1, &h.stage2}) {
    std::ostringstream blob;
    write_checkpoint(blob, *m);
    w.str(blob.str());
  }
  if (!os) throw CheckpointError("error writing checkpoint: " + path);
}

inline HierarchicalModel load_hierarchy(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path);
  std::string manifest;
  std::getline(is, manifest);
  if (manifest !=
      "#hierarchy stage1=related,unrelated stage2=agree,disagree,discuss") {
    throw CheckpointError("hierarchy checkpoint: bad manifest line");
  }
  detail::ByteReader r(is);
  std::istringstream b1(r.str("stage 1")), b2(r.str("stage 2"));
  HierarchicalModel h{read_checkpoint(b1), read_checkpoint(b2)};
  if (h.stage1.config.scheme != LabelScheme::related2 ||
      h.stage2.config.scheme != LabelScheme::stance3) {
    throw CheckpointError("hierarchy checkpoint: stage class order mismatch");
  }
  return h;
}

}  // namespace stance
