#pragma once

// Synthetic two-domain stance task and the DA vs no-DA benchmark built on it.
//
// Polarity is carried by cue words shared by both domains. The rest of each
// text is filler, and half of the filler tokens come from a small set of
// style words owned by the domain, so the two domains differ systematically
// in vocabulary while the label rule is the same.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stance/ingest.hpp"
#include "stance/metrics.hpp"
#include "stance/model.hpp"
#include "stance/optim.hpp"
#include "stance/trainer.hpp"

namespace stance {

struct SynthConfig {
  std::size_t source_examples = 2000;
  std::size_t target_examples = 100;
  std::size_t test_examples = 1000;  // per domain
  std::size_t topics = 20;
  std::size_t cue_words = 100;      // per polarity
  std::size_t cues_per_doc = 2;
  double label_noise = 0.0;         // recorded label disagrees with the cues
  std::size_t style_words = 10;     // per domain
  std::size_t common_words = 200;
  double style_share = 0.5;         // filler tokens drawn from the style set
  std::size_t claim_len = 6;
  std::size_t doc_len = 24;
};

struct SynthData {
  std::vector<LabeledPair> source, target, source_test, target_test;
};

namespace detail {

inline std::string synth_word(const char* prefix, std::size_t i) {
  return std::string(prefix) + std::to_string(i);
}

inline LabeledPair synth_pair(const SynthConfig& c, DomainTag domain,
                              std::size_t n, Rng& rng) {
  const bool cue_agree = rng.uniform() < 0.5;
  const bool agree = rng.uniform() < c.label_noise ? !cue_agree : cue_agree;
  const std::size_t topic = rng.below(c.topics);
  const char* style = domain == DomainTag::source ? "src" : "tgt";
  auto filler = [&]() {
    return rng.uniform() < c.style_share
               ? synth_word(style, rng.below(c.style_words))
               : synth_word("com", rng.below(c.common_words));
  };
  std::string claim = synth_word("topic", topic);
  for (std::size_t i = 1; i < c.claim_len; ++i) claim += " " + filler();

  std::vector<std::string> doc{synth_word("topic", topic)};
  while (doc.size() < c.doc_len) doc.push_back(filler());
  auto plant = [&](std::string w) {
    doc[1 + rng.below(doc.size() - 1)] = std::move(w);
  };
  for (std::size_t i = 0; i < c.cues_per_doc; ++i) {
    plant(synth_word(cue_agree ? "yes" : "no", rng.below(c.cue_words)));
  }
  std::string text;
  for (const auto& w : doc) text += (text.empty() ? "" : " ") + w;
  return {std::string(to_string(domain)) + "-" + std::to_string(n), claim,
          text, agree ? StanceLabel::agree : StanceLabel::disagree, domain};
}

}  // namespace detail

inline SynthData make_synthetic(const SynthConfig& c, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5171));
  SynthData d;
  for (std::size_t i = 0; i < c.source_examples; ++i) {
    d.source.push_back(detail::synth_pair(c, DomainTag::source, i, rng));
  }
  for (std::size_t i = 0; i < c.target_examples; ++i) {
    d.target.push_back(detail::synth_pair(c, DomainTag::target, i, rng));
  }
  for (std::size_t i = 0; i < c.test_examples; ++i) {
    d.source_test.push_back(detail::synth_pair(
        c, DomainTag::source, c.source_examples + i, rng));
    d.target_test.push_back(detail::synth_pair(
        c, DomainTag::target, c.target_examples + i, rng));
  }
  return d;
}

// Ordinary least-squares slope of ys against 0, 1, 2, ...
inline double least_squares_slope(std::span<const double> ys) {
  const std::size_t n = ys.size();
  if (n < 2) return 0.0;
  const double mx = static_cast<double>(n - 1) / 2.0;
  double my = 0.0;
  for (double y : ys) my += y;
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - mx;
    sxy += dx * (ys[i] - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

struct LossTrend {
  double label_slope = 0.0;
  double domain_slope = 0.0;
  std::size_t window = 0;
};

// Slopes of the validation losses over the final third of the epochs.
inline LossTrend final_third_trend(const TrainingHistory& h) {
  LossTrend t;
  const std::size_t n = h.epochs.size();
  t.window = (n + 2) / 3;
  std::vector<double> label, domain;
  for (std::size_t i = n - t.window; i < n; ++i) {
    label.push_back(h.epochs[i].val_label_loss);
    domain.push_back(h.epochs[i].val_domain_loss.value_or(0.0));
  }
  t.label_slope = least_squares_slope(label);
  t.domain_slope = least_squares_slope(domain);
  return t;
}

// CNN feature block (the domain-head input of a CNN model) for each pair.
inline std::vector<std::vector<double>> cnn_features(
    const StanceModel& m, std::span<const LabeledPair> pairs) {
  const ModelConfig& c = m.config;
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < pairs.size(); i += 256) {
    std::vector<FeatureBundle> bundles;
    for (std::size_t k = i; k < std::min(pairs.size(), i + 256); ++k) {
      bundles.push_back(m.features(pairs[k]));
    }
    std::vector<const FeatureBundle*> ptrs;
    for (const auto& b : bundles) ptrs.push_back(&b);
    const ForwardTrace tr = forward_trace(m, std::move(ptrs), 0.0);
    const std::size_t feat = c.feature_width(), lo = c.bow_width();
    for (std::size_t r = 0; r < bundles.size(); ++r) {
      out.emplace_back(tr.features.data.begin() + static_cast<long>(r * feat + lo),
                       tr.features.data.begin() + static_cast<long>((r + 1) * feat));
    }
  }
  return out;
}

// Held-out accuracy of a logistic-regression domain classifier trained on
// frozen features. Each domain's rows are split in half for fitting and
// scoring; features are standardized with the fitting half's statistics.
inline double domain_probe_accuracy(
    const std::vector<std::vector<double>>& source_features,
    const std::vector<std::vector<double>>& target_features,
    std::uint64_t seed, std::size_t steps = 300) {
  const std::size_t dim = source_features.at(0).size();
  std::vector<const std::vector<double>*> fit, score;
  std::vector<int> fit_y, score_y;
  for (int d = 0; d < 2; ++d) {
    const auto& rows = d == 0 ? source_features : target_features;
    const std::size_t half = rows.size() / 2;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      (i < half ? fit : score).push_back(&rows[i]);
      (i < half ? fit_y : score_y).push_back(d);
    }
  }
  std::vector<double> mean(dim, 0.0), sd(dim, 0.0);
  for (const auto* r : fit) {
    for (std::size_t k = 0; k < dim; ++k) mean[k] += (*r)[k];
  }
  for (auto& m : mean) m /= static_cast<double>(fit.size());
  for (const auto* r : fit) {
    for (std::size_t k = 0; k < dim; ++k) {
      sd[k] += ((*r)[k] - mean[k]) * ((*r)[k] - mean[k]);
    }
  }
  for (auto& s : sd) s = std::sqrt(s / static_cast<double>(fit.size()));
  auto matrix = [&](const std::vector<const std::vector<double>*>& rows) {
    Tensor x({rows.size(), dim});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t k = 0; k < dim; ++k) {
        x.at(i, k) = sd[k] > 1e-12 ? ((*rows[i])[k] - mean[k]) / sd[k] : 0.0;
      }
    }
    return x;
  };
  const Tensor xf = matrix(fit), xs = matrix(score);
  Rng rng(seed);
  Parameter w("probe.weight", Tensor({dim, 2}));
  Parameter b("probe.bias", Tensor({2}));
  for (double& v : w.value.data) v = rng.uniform(-0.01, 0.01);
  AdamConfig ac;
  ac.learning_rate = 0.05;
  Adam adam(ac);
  std::vector<Parameter*> params{&w, &b};
  for (std::size_t s = 0; s < steps; ++s) {
    const SoftmaxLoss ce = softmax_cross_entropy(dense_forward(xf, w, b), fit_y);
    dense_backward(xf, w, b, softmax_cross_entropy_backward(ce, fit_y));
    adam.step(params);
  }
  const auto pred = argmax_rows(dense_forward(xs, w, b));
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    hit += static_cast<int>(pred[i]) == score_y[i];
  }
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

struct SynthBenchConfig {
  SynthConfig data;
  ModelConfig model;
  TrainConfig train;
  std::size_t probe_examples = 1000;  // per domain, from the test pools
  std::size_t probe_steps = 300;

  static SynthBenchConfig defaults() {
    SynthBenchConfig b;
    ModelConfig& m = b.model;
    m.use_bow = false;
    m.use_cnn = true;
    m.da_cnn = true;
    // a narrow embedding leaves the domain head little room to hide style
    m.embed_dim = 3;
    m.filter_widths = {2, 3, 4};
    m.maps_per_width = 16;
    m.claim_max_len = 8;
    m.doc_max_len = 32;
    m.label_hidden = 32;
    m.domain_hidden = 100;
    m.scheme = LabelScheme::polarity2;
    TrainConfig& t = b.train;
    t.epochs = 300;
    t.batch_size = 32;
    t.adam.learning_rate = 5e-4;
    t.adam.beta1 = 0.5;
    t.lambda_max = 0.1;
    t.ramp_gamma = 3.0;
    t.runs = 1;
    t.validation_fraction = 0.2;
    return b;
  }
};

struct SynthVariantResult {
  double target_macro_f1 = 0.0;
  double target_accuracy = 0.0;
  double probe_accuracy = 0.0;
  LossTrend trend;
  TrainingHistory history;
};

struct SynthSeedResult {
  std::uint64_t seed = 0;
  SynthVariantResult da, no_da;
};

struct SynthBenchReport {
  std::vector<SynthSeedResult> seeds;
  double seconds = 0.0;
  std::size_t epochs = 0;
};

inline SynthVariantResult run_synth_variant(const SynthBenchConfig& cfg,
                                            const SynthData& data, bool da,
                                            std::uint64_t seed) {
  ModelConfig mc = cfg.model;
  mc.da_cnn = da;
  mc.da_bow = false;
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  TrainRun run = train(mc, tc, data.source, data.target);
  SynthVariantResult r;
  r.history = run.history;
  if (!run.history.epochs.empty()) r.trend = final_third_trend(run.history);

  std::vector<FeatureBundle> test;
  std::vector<StanceLabel> gold;
  for (const auto& p : data.target_test) {
    test.push_back(run.model.features(p));
    gold.push_back(p.label);
  }
  const std::vector<StanceLabel> pred = predict_stances(run.model, test);
  const std::array<StanceLabel, 2> classes{StanceLabel::agree,
                                           StanceLabel::disagree};
  r.target_macro_f1 =
      macro_f1<StanceLabel>(gold, pred, std::span<const StanceLabel>(classes))
          .macro;
  r.target_accuracy = accuracy<StanceLabel>(gold, pred);

  const std::size_t n = std::min(cfg.probe_examples, data.target_test.size());
  const auto src = cnn_features(
      run.model, std::span<const LabeledPair>(data.source_test).first(n));
  const auto tgt = cnn_features(
      run.model, std::span<const LabeledPair>(data.target_test).first(n));
  r.probe_accuracy =
      domain_probe_accuracy(src, tgt, derive_seed(seed, 0x9B0), cfg.probe_steps);
  return r;
}

inline SynthBenchReport run_synthbench(const SynthBenchConfig& cfg,
                                       std::span<const std::uint64_t> seeds) {
  const auto start = std::chrono::steady_clock::now();
  SynthBenchReport report;
  report.epochs = cfg.train.epochs;
  for (std::uint64_t seed : seeds) {
    const SynthData data = make_synthetic(cfg.data, seed);
    SynthSeedResult s;
    s.seed = seed;
    s.da = run_synth_variant(cfg, data, true, seed);
    s.no_da = run_synth_variant(cfg, data, false, seed);
    report.seeds.push_back(std::move(s));
  }
  report.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  return report;
}

struct SynthVerdict {
  bool trained = false;        // enough epochs for a final-third window
  bool invariance = false;     // probe means on both variants
  bool target_gain = false;    // DA not worse anywhere, better on most seeds
  bool runtime = false;
  bool loss_trend = false;     // final-third slopes on most seeds
  double mean_probe_da = 0.0;
  double mean_probe_no_da = 0.0;
  std::size_t seeds_better = 0;
  std::size_t seeds_not_worse = 0;
  std::size_t seeds_trend = 0;
  std::string note;
};

inline constexpr std::size_t kSynthMinEpochs = 6;

inline SynthVerdict judge_synthbench(const SynthBenchReport& r,
                                     double max_seconds = 300.0) {
  SynthVerdict v;
  const std::size_t n = r.seeds.size();
  v.runtime = r.seconds < max_seconds;
  if (n == 0) {
    v.note = "no seeds";
    return v;
  }
  v.trained = r.epochs >= kSynthMinEpochs;
  if (!v.trained) v.note = "insufficient training";
  for (const auto& s : r.seeds) {
    v.mean_probe_da += s.da.probe_accuracy / static_cast<double>(n);
    v.mean_probe_no_da += s.no_da.probe_accuracy / static_cast<double>(n);
    if (s.da.target_macro_f1 > s.no_da.target_macro_f1) ++v.seeds_better;
    if (s.da.target_macro_f1 >= s.no_da.target_macro_f1 - 0.02) {
      ++v.seeds_not_worse;
    }
    if (s.da.trend.label_slope <= 0.0 && s.da.trend.domain_slope >= 0.0) {
      ++v.seeds_trend;
    }
  }
  // majority means 4 of 5 for the usual five seeds
  const std::size_t most = (4 * n + 4) / 5;
  v.invariance = v.trained && v.mean_probe_da <= 0.65 &&
                 v.mean_probe_no_da >= 0.85;
  v.target_gain = v.trained && v.seeds_not_worse == n && v.seeds_better >= most;
  v.loss_trend = v.trained && v.seeds_trend >= most;
  return v;
}

// Wall-clock time is left out of both reports so equal seeds give equal files.
inline void write_synth_text(std::ostream& os, const SynthBenchReport& r,
                             const SynthVerdict& v) {
  os << "seed  da_f1  noda_f1  da_probe  noda_probe  label_slope  "
        "domain_slope\n";
  char line[160];
  for (const auto& s : r.seeds) {
    std::snprintf(line, sizeof line,
                  "%-5llu %.3f  %.3f    %.3f     %.3f       %+.5f    %+.5f\n",
                  static_cast<unsigned long long>(s.seed),
                  s.da.target_macro_f1, s.no_da.target_macro_f1,
                  s.da.probe_accuracy, s.no_da.probe_accuracy,
                  s.da.trend.label_slope, s.da.trend.domain_slope);
    os << line;
  }
  std::snprintf(line, sizeof line,
                "mean probe da=%.3f no_da=%.3f  better=%zu/%zu  "
                "not_worse=%zu/%zu  trend=%zu/%zu\n",
                v.mean_probe_da, v.mean_probe_no_da, v.seeds_better,
                r.seeds.size(), v.seeds_not_worse, r.seeds.size(),
                v.seeds_trend, r.seeds.size());
  os << line;
  if (!v.note.empty()) os << v.note << "\n";
}

inline nlohmann::json synth_json(const SynthBenchReport& r,
                                 const SynthVerdict& v) {
  nlohmann::json j;
  j["epochs"] = r.epochs;
  auto variant = [](const SynthVariantResult& x) {
    nlohmann::json h = nlohmann::json::array();
    for (const auto& e : x.history.epochs) {
      nlohmann::json row{{"epoch", e.epoch},
                         {"lambda", e.lambda},
                         {"train_label_loss", e.train_label_loss},
                         {"val_label_loss", e.val_label_loss}};
      if (e.train_domain_loss) row["train_domain_loss"] = *e.train_domain_loss;
      if (e.val_domain_loss) row["val_domain_loss"] = *e.val_domain_loss;
      h.push_back(row);
    }
    return nlohmann::json{{"target_macro_f1", x.target_macro_f1},
                          {"target_accuracy", x.target_accuracy},
                          {"probe_accuracy", x.probe_accuracy},
                          {"label_slope", x.trend.label_slope},
                          {"domain_slope", x.trend.domain_slope},
                          {"history", h}};
  };
  for (const auto& s : r.seeds) {
    j["seeds"].push_back(
        {{"seed", s.seed}, {"da", variant(s.da)}, {"no_da", variant(s.no_da)}});
  }
  j["verdict"] = {{"trained", v.trained},
                  {"invariance", v.invariance},
                  {"target_gain", v.target_gain},
                  {"loss_trend", v.loss_trend},
                  {"mean_probe_da", v.mean_probe_da},
                  {"mean_probe_no_da", v.mean_probe_no_da},
                  {"note", v.note}};
  return j;
}

}  // namespace stance
