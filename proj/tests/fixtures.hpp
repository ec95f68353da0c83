#pragma once

#include <string>
#include <vector>

#include "stance/ingest.hpp"
#include "stance/model.hpp"
#include "stance/synth.hpp"
#include "stance/trainer.hpp"

namespace fixtures {

// Small CNN+BOW config that trains in milliseconds.
inline stance::ModelConfig small_config(bool bow = true, bool cnn = true,
                                        bool da = false) {
  stance::ModelConfig c;
  c.use_bow = bow;
  c.use_cnn = cnn;
  c.da_cnn = da && cnn;
  c.da_bow = da && !cnn;
  c.embed_dim = 4;
  c.filter_widths = {2, 3};
  c.maps_per_width = 4;
  c.claim_max_len = 8;
  c.doc_max_len = 16;
  c.label_hidden = 8;
  c.domain_hidden = 8;
  c.bow_max_terms = 50;
  c.scheme = stance::LabelScheme::stance4;
  return c;
}

inline stance::TrainConfig small_train(std::size_t epochs = 3) {
  stance::TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 16;
  t.runs = 1;
  t.seed = 5;
  return t;
}

// Two-domain polarity data from the synthetic generator.
inline stance::SynthData small_synth(std::uint64_t seed = 1,
                                     std::size_t source = 120,
                                     std::size_t target = 60) {
  stance::SynthConfig c;
  c.source_examples = source;
  c.target_examples = target;
  c.test_examples = 40;
  c.cue_words = 6;
  c.common_words = 30;
  c.doc_len = 14;
  return stance::make_synthetic(c, seed);
}

// Four-label target data: synthetic polarity pairs, plus discuss and
// unrelated pairs marked by their own words.
inline std::vector<stance::LabeledPair> four_label_target(std::size_t n,
                                                          std::uint64_t seed) {
  using stance::StanceLabel;
  auto base = small_synth(seed, 0, n).target;
  stance::Rng rng(seed);
  for (std::size_t i = 0; i < base.size(); ++i) {
    const std::size_t r = rng.below(4);
    if (r == 2) {
      base[i].label = StanceLabel::discuss;
      base[i].document += " maybe perhaps";
    } else if (r == 3) {
      base[i].label = StanceLabel::unrelated;
      base[i].document = "weather sports market " + base[i].document;
    }
  }
  return base;
}

}  // namespace fixtures
