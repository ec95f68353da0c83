#pragma once

// Finite-difference checks of the full model on tiny instances of each
// architecture variant.

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stance/gradcheck.hpp"
#include "stance/ingest.hpp"
#include "stance/model.hpp"

namespace stance {

struct ArchitectureVariant {
  std::string name;
  bool use_bow = false, use_cnn = false, da_bow = false, da_cnn = false;
};

inline std::vector<ArchitectureVariant> architecture_variants() {
  return {
      {"bow", true, false, false, false},
      {"bow+da", true, false, true, false},
      {"cnn", false, true, false, false},
      {"cnn+da", false, true, false, true},
      {"bow+cnn", true, true, false, false},
      {"bow+[cnn+da]", true, true, false, true},
      {"[bow+cnn+da]", true, true, true, true},
  };
}

// Layers the fault hook can corrupt. "reversal" flips the sign of the
// adversarial gradient reaching the feature extractor.
inline const std::vector<std::string>& corruptible_layers() {
  static const std::vector<std::string> names{
      "embedding",     "claim_conv", "doc_conv",   "label_hidden",
      "label_out",     "domain_hidden", "domain_out", "reversal"};
  return names;
}

struct ModelCheckOptions {
  double lambda = 1.0;  // used by variants with a domain head
  double epsilon = 1e-5;
  double tolerance = 1e-5;
  std::uint64_t seed = 1;
  std::string corrupt;  // empty, or one of corruptible_layers()
  std::vector<ArchitectureVariant> variants;  // empty means all of them
};

inline ArchitectureVariant variant_of(const ModelConfig& c) {
  std::string name = c.use_bow ? "bow" : "";
  if (c.use_cnn) name += name.empty() ? "cnn" : "+cnn";
  if (c.has_domain_head()) name += "+da(" + da_features_string(c) + ")";
  return {name, c.use_bow, c.use_cnn, c.da_bow, c.da_cnn};
}

struct ModelCheckPass {
  std::string variant;
  std::string pass;  // "label" or "domain"
  FiniteDiffReport report;
};

struct ModelCheckResult {
  std::vector<ModelCheckPass> passes;
  // Per domain-head variant: feature gradients from the domain loss at
  // lambda = 0 are exactly zero.
  std::vector<std::pair<std::string, bool>> zero_lambda;

  bool passed() const {
    for (const auto& p : passes) {
      if (!p.report.passed()) return false;
    }
    for (const auto& z : zero_lambda) {
      if (!z.second) return false;
    }
    return true;
  }
  double max_rel_error() const {
    double m = 0.0;
    for (const auto& p : passes) m = std::max(m, p.report.max_rel_error());
    return m;
  }
};

namespace detail {

inline std::vector<LabeledPair> tiny_corpus(std::uint64_t seed) {
  static const char* words[] = {"alpha", "beta",  "gamma", "delta", "eps",
                                "zeta",  "eta",   "theta", "iota",  "kappa"};
  Rng rng(derive_seed(seed, 0x7C0));
  std::vector<LabeledPair> out;
  for (std::size_t i = 0; i < 8; ++i) {
    auto text = [&](std::size_t n) {
      std::string s;
      for (std::size_t k = 0; k < n; ++k) {
        s += (k ? " " : "") + std::string(words[rng.below(10)]);
      }
      return s;
    };
    LabeledPair p;
    p.id = "g" + std::to_string(i);
    p.claim = text(2 + rng.below(4));
    p.document = text(4 + rng.below(6));
    p.label = kAllStances[i % 4];
    p.domain = i % 2 ? DomainTag::source : DomainTag::target;
    out.push_back(std::move(p));
  }
  return out;
}

inline ModelConfig tiny_config(const ArchitectureVariant& v) {
  ModelConfig c;
  c.use_bow = v.use_bow;
  c.use_cnn = v.use_cnn;
  c.da_bow = v.da_bow;
  c.da_cnn = v.da_cnn;
  c.embed_dim = 3;
  c.filter_widths = {2, 3};
  c.maps_per_width = 2;
  c.claim_max_len = 5;
  c.doc_max_len = 8;
  c.label_hidden = 5;
  c.domain_hidden = 4;
  c.bow_max_terms = 6;
  c.bow_vocab_include_source = true;
  c.freeze_padding = false;
  c.scheme = LabelScheme::stance4;
  return c;
}

inline bool starts_with(const std::string& s, const std::string& prefix) {
  return s.compare(0, prefix.size(), prefix) == 0;
}

inline void corrupt_grads(StanceModel& m, const std::string& layer) {
  for (Parameter* p : m.parameters()) {
    if (starts_with(p->name, layer)) {
      for (double& g : p->grad.data) g = 1.5 * g + 1e-3;
    }
  }
}

}  // namespace detail

inline ModelCheckResult check_model_gradients(const ModelCheckOptions& o = {}) {
  if (!o.corrupt.empty()) {
    bool known = false;
    for (const auto& l : corruptible_layers()) known |= l == o.corrupt;
    if (!known) throw std::invalid_argument("unknown layer '" + o.corrupt + "'");
  }
  ModelCheckResult result;
  const auto pairs = detail::tiny_corpus(o.seed);
  const auto variants =
      o.variants.empty() ? architecture_variants() : o.variants;
  for (const auto& v : variants) {
    const ModelConfig cfg = detail::tiny_config(v);
    StanceModel m = make_model(cfg, Featurizer::build(pairs, cfg),
                               derive_seed(o.seed, 0x6C));
    std::vector<Example> batch;
    for (const auto& p : pairs) batch.push_back(m.example(p));
    const bool da = m.config.has_domain_head();
    const double lambda = da ? o.lambda : 0.0;

    FiniteDiffOptions fd;
    fd.epsilon = o.epsilon;
    fd.tolerance = o.tolerance;
    fd.seed = o.seed;
    fd.activation_pattern = [&] {
      std::vector<const FeatureBundle*> ptrs;
      for (const auto& e : batch) ptrs.push_back(&e.features);
      return activation_pattern(forward_trace(m, ptrs, lambda));
    };
    auto params = m.parameters();

    m.zero_grad();
    loss(m, batch, lambda, true, {1.0, 0.0});
    if (!o.corrupt.empty() && o.corrupt != "reversal") {
      detail::corrupt_grads(m, o.corrupt);
    }
    result.passes.push_back(
        {v.name, "label",
         finite_diff_check(
             [&] { return loss(m, batch, lambda, false).label_loss; }, params,
             fd)});
    if (!da) continue;

    // Feature parameters sit behind the reversal: analytic = -lambda * numeric.
    m.zero_grad();
    loss(m, batch, lambda, true, {0.0, 1.0});
    const auto feature = m.feature_parameters();
    if (o.corrupt == "reversal") {
      for (Parameter* p : feature) {
        for (double& g : p->grad.data) g = -g;
      }
    } else if (!o.corrupt.empty()) {
      detail::corrupt_grads(m, o.corrupt);
    }
    fd.expected_scale.assign(params.size(), 1.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (const Parameter* f : feature) {
        if (params[i] == f) fd.expected_scale[i] = -lambda;
      }
    }
    result.passes.push_back(
        {v.name, "domain",
         finite_diff_check(
             [&] { return *loss(m, batch, lambda, false).domain_loss; },
             params, fd)});

    m.zero_grad();
    loss(m, batch, 0.0, true, {0.0, 1.0});
    bool zero = true;
    for (const Parameter* p : feature) {
      for (double g : p->grad.data) zero &= g == 0.0;
    }
    result.zero_lambda.emplace_back(v.name, zero);
  }
  return result;
}

inline void write_model_check(std::ostream& os, const ModelCheckResult& r) {
  char line[200];
  for (const auto& p : r.passes) {
    for (const auto& c : p.report.parameters) {
      std::snprintf(line, sizeof line, "%-4s %-13s %-6s %-22s n=%-3zu max_rel=%.2e\n",
                    c.passed ? "ok" : "FAIL", p.variant.c_str(), p.pass.c_str(),
                    c.name.c_str(), c.checked, c.max_rel_error);
      os << line;
    }
  }
  for (const auto& [name, ok] : r.zero_lambda) {
    os << (ok ? "ok   " : "FAIL ") << name
       << " lambda=0 leaves feature gradients from the domain loss at zero\n";
  }
  std::snprintf(line, sizeof line, "%s max_rel_error=%.3e\n",
                r.passed() ? "PASS" : "FAIL", r.max_rel_error());
  os << line;
}

}  // namespace stance
