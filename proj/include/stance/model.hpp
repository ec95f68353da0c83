#pragma once

// Stance model: BOW and/or CNN feature extraction, a label MLP, and a domain
// MLP fed through gradient reversal.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stance/ingest.hpp"
#include "stance/layers.hpp"
#include "stance/tensor.hpp"
#include "stance/textprep.hpp"

namespace stance {

// ---------------------------------------------------------------- labels

// Class spaces a model can be trained on. Class order is fixed per scheme.
enum class LabelScheme {
  stance4,    // agree, disagree, discuss, unrelated
  related2,   // related, unrelated
  stance3,    // agree, disagree, discuss
  polarity2,  // agree, disagree
};

inline std::vector<std::string> class_names(LabelScheme s) {
  switch (s) {
    case LabelScheme::stance4: return {"agree", "disagree", "discuss", "unrelated"};
    case LabelScheme::related2: return {"related", "unrelated"};
    case LabelScheme::stance3: return {"agree", "disagree", "discuss"};
    case LabelScheme::polarity2: return {"agree", "disagree"};
  }
  return {};
}

inline std::size_t num_classes(LabelScheme s) { return class_names(s).size(); }

inline std::string_view scheme_name(LabelScheme s) {
  switch (s) {
    case LabelScheme::stance4: return "stance4";
    case LabelScheme::related2: return "related2";
    case LabelScheme::stance3: return "stance3";
    case LabelScheme::polarity2: return "polarity2";
  }
  return "?";
}

inline std::optional<LabelScheme> parse_scheme(std::string_view s) {
  for (auto v : {LabelScheme::stance4, LabelScheme::related2,
                 LabelScheme::stance3, LabelScheme::polarity2}) {
    if (scheme_name(v) == s) return v;
  }
  return std::nullopt;
}

// Class index of a gold stance under a scheme, or -1 when the scheme cannot
// represent it.
inline int class_of(LabelScheme s, StanceLabel l) {
  switch (s) {
    case LabelScheme::stance4: return static_cast<int>(l);
    case LabelScheme::related2: return l == StanceLabel::unrelated ? 1 : 0;
    case LabelScheme::stance3:
      return l == StanceLabel::unrelated ? -1 : static_cast<int>(l);
    case LabelScheme::polarity2:
      return l == StanceLabel::agree ? 0 : l == StanceLabel::disagree ? 1 : -1;
  }
  return -1;
}

// Stance for a predicted class; related2's "related" has none.
inline std::optional<StanceLabel> stance_of(LabelScheme s, std::size_t cls) {
  if (s == LabelScheme::related2) {
    if (cls == 1) return StanceLabel::unrelated;
    return std::nullopt;
  }
  if (cls >= num_classes(s)) return std::nullopt;
  return static_cast<StanceLabel>(cls);
}

// ---------------------------------------------------------------- config

struct ModelConfig {
  bool use_bow = true;
  bool use_cnn = true;
  bool da_bow = false;  // BOW block feeds the domain head
  bool da_cnn = false;  // CNN block feeds the domain head
  std::size_t embed_dim = 300;
  std::vector<std::size_t> filter_widths{2, 3, 4};
  std::size_t maps_per_width = 128;
  std::size_t claim_max_len = 50;
  std::size_t doc_max_len = 500;
  std::size_t label_hidden = 100;
  std::size_t domain_hidden = 100;
  LabelScheme scheme = LabelScheme::stance4;
  std::size_t bow_max_terms = 5000;
  std::size_t embed_max_terms = 20000;
  bool bow_vocab_include_source = false;
  bool finetune_embeddings = true;
  bool freeze_padding = true;
  bool source_label_loss = true;
  double embed_init_range = 0.25;
  std::string pretrained_embeddings;
  // Filled in from the built vocabularies.
  std::size_t bow_vocab_size = 0;
  std::size_t embed_vocab_size = 0;  // including the padding row

  bool has_domain_head() const { return da_bow || da_cnn; }
  std::size_t num_labels() const { return num_classes(scheme); }
  std::size_t bow_width() const { return use_bow ? 2 * bow_vocab_size + 1 : 0; }
  std::size_t cnn_width() const {
    return use_cnn ? 2 * filter_widths.size() * maps_per_width : 0;
  }
  std::size_t feature_width() const { return bow_width() + cnn_width(); }
  // Column range of the label-head input consumed by the domain head.
  std::size_t domain_begin() const { return da_bow ? 0 : bow_width(); }
  std::size_t domain_end() const {
    return da_cnn ? feature_width() : bow_width();
  }
  std::size_t domain_width() const {
    return has_domain_head() ? domain_end() - domain_begin() : 0;
  }

  void validate() const {
    if (!use_bow && !use_cnn) {
      throw std::invalid_argument("model config: enable use_bow or use_cnn");
    }
    if ((da_bow && !use_bow) || (da_cnn && !use_cnn)) {
      throw std::invalid_argument(
          "model config: da_features must be a subset of enabled features");
    }
    if (use_cnn) {
      if (filter_widths.empty() || maps_per_width == 0 || embed_dim == 0) {
        throw std::invalid_argument("model config: empty CNN configuration");
      }
      for (std::size_t w : filter_widths) {
        if (w == 0) throw std::invalid_argument("model config: filter width 0");
      }
      if (claim_max_len == 0 || doc_max_len == 0) {
        throw std::invalid_argument("model config: max lengths must be > 0");
      }
    }
    if (label_hidden == 0 || (has_domain_head() && domain_hidden == 0)) {
      throw std::invalid_argument("model config: hidden sizes must be > 0");
    }
  }
};

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    s += (i ? "," : "") + std::to_string(v[i]);
  }
  return s;
}

inline std::string da_features_string(const ModelConfig& c) {
  if (c.da_bow && c.da_cnn) return "bow,cnn";
  if (c.da_bow) return "bow";
  if (c.da_cnn) return "cnn";
  return "none";
}

// Ordered key/value view of every config field.
inline std::vector<std::pair<std::string, std::string>> to_key_values(
    const ModelConfig& c) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  std::ostringstream range;
  range.precision(17);
  range << c.embed_init_range;
  return {
      {"use_bow", b(c.use_bow)},
      {"use_cnn", b(c.use_cnn)},
      {"da_features", da_features_string(c)},
      {"embed_dim", std::to_string(c.embed_dim)},
      {"filter_widths", join_sizes(c.filter_widths)},
      {"maps_per_width", std::to_string(c.maps_per_width)},
      {"claim_max_len", std::to_string(c.claim_max_len)},
      {"doc_max_len", std::to_string(c.doc_max_len)},
      {"label_hidden", std::to_string(c.label_hidden)},
      {"domain_hidden", std::to_string(c.domain_hidden)},
      {"label_scheme", std::string(scheme_name(c.scheme))},
      {"bow_max_terms", std::to_string(c.bow_max_terms)},
      {"embed_max_terms", std::to_string(c.embed_max_terms)},
      {"bow_vocab_include_source", b(c.bow_vocab_include_source)},
      {"finetune_embeddings", b(c.finetune_embeddings)},
      {"freeze_padding", b(c.freeze_padding)},
      {"source_label_loss", b(c.source_label_loss)},
      {"embed_init_range", range.str()},
      {"pretrained_embeddings", c.pretrained_embeddings},
      {"bow_vocab_size", std::to_string(c.bow_vocab_size)},
      {"embed_vocab_size", std::to_string(c.embed_vocab_size)},
  };
}

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config key '" + key + "': expected boolean");
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || v.front() == '-') {
    throw std::invalid_argument("config key '" + key +
                                "': expected non-negative integer");
  }
  return static_cast<std::size_t>(n);
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) {
    throw std::invalid_argument("config key '" + key + "': expected number");
  }
  return d;
}

inline std::vector<std::size_t> parse_sizes(const std::string& key,
                                            const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, item));
  return out;
}

}  // namespace detail

// Applies one key; false when the key is not a model key.
inline bool apply_key(ModelConfig& c, const std::string& key,
                      const std::string& v) {
  using namespace detail;
  if (key == "use_bow") c.use_bow = parse_bool(key, v);
  else if (key == "use_cnn") c.use_cnn = parse_bool(key, v);
  else if (key == "da_features") {
    c.da_bow = c.da_cnn = false;
    if (v != "none" && !v.empty()) {
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (item == "bow") c.da_bow = true;
        else if (item == "cnn") c.da_cnn = true;
        else throw std::invalid_argument("config key 'da_features': unknown "
                                         "feature '" + item + "'");
      }
    }
  }
  else if (key == "embed_dim") c.embed_dim = parse_size(key, v);
  else if (key == "filter_widths") c.filter_widths = parse_sizes(key, v);
  else if (key == "maps_per_width") c.maps_per_width = parse_size(key, v);
  else if (key == "claim_max_len") c.claim_max_len = parse_size(key, v);
  else if (key == "doc_max_len") c.doc_max_len = parse_size(key, v);
  else if (key == "label_hidden") c.label_hidden = parse_size(key, v);
  else if (key == "domain_hidden") c.domain_hidden = parse_size(key, v);
  else if (key == "label_scheme") {
    auto s = parse_scheme(v);
    if (!s) throw std::invalid_argument("config key 'label_scheme': unknown "
                                        "scheme '" + v + "'");
    c.scheme = *s;
  }
  else if (key == "bow_max_terms") c.bow_max_terms = parse_size(key, v);
  else if (key == "embed_max_terms") c.embed_max_terms = parse_size(key, v);
  else if (key == "bow_vocab_include_source") c.bow_vocab_include_source = parse_bool(key, v);
  else if (key == "finetune_embeddings") c.finetune_embeddings = parse_bool(key, v);
  else if (key == "freeze_padding") c.freeze_padding = parse_bool(key, v);
  else if (key == "source_label_loss") c.source_label_loss = parse_bool(key, v);
  else if (key == "embed_init_range") c.embed_init_range = parse_real(key, v);
  else if (key == "pretrained_embeddings") c.pretrained_embeddings = v;
  else if (key == "bow_vocab_size") c.bow_vocab_size = parse_size(key, v);
  else if (key == "embed_vocab_size") c.embed_vocab_size = parse_size(key, v);
  else return false;
  return true;
}

// ---------------------------------------------------------------- features

// Token-id table for the CNN path. Id 0 is the padding row.
class EmbedVocab {
 public:
  EmbedVocab() : terms_{"<pad>"} {}

  static EmbedVocab from_terms(std::vector<std::string> terms) {
    EmbedVocab v;
    for (auto& t : terms) v.add(std::move(t));
    return v;
  }

  // Real (non-padding) terms in id order, starting at id 1.
  std::vector<std::string> real_terms() const {
    return {terms_.begin() + 1, terms_.end()};
  }
  std::size_t size() const { return terms_.size(); }  // including padding
  const std::string& term(std::size_t id) const { return terms_.at(id); }

  // 0 when absent.
  int id_of(const std::string& term) const {
    auto it = index_.find(term);
    return it == index_.end() ? 0 : it->second;
  }

 private:
  void add(std::string t) {
    if (index_.count(t)) {
      throw std::invalid_argument("embedding vocabulary: duplicate term " + t);
    }
    index_.emplace(t, static_cast<int>(terms_.size()));
    terms_.push_back(std::move(t));
  }

  std::vector<std::string> terms_;
  std::unordered_map<std::string, int> index_;
};

struct SparseVector {
  std::size_t dim = 0;
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  std::vector<double> dense() const {
    std::vector<double> d(dim, 0.0);
    for (std::size_t i = 0; i < index.size(); ++i) d[index[i]] = value[i];
    return d;
  }

  static SparseVector from_dense(std::span<const double> d) {
    SparseVector s;
    s.dim = d.size();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d[i] != 0.0) {
        s.index.push_back(static_cast<std::uint32_t>(i));
        s.value.push_back(d[i]);
      }
    }
    return s;
  }
};

// BOW block (claim TF, document TF, tf-idf cosine) stored sparsely, plus the
// padded claim and document id sequences.
struct FeatureBundle {
  SparseVector bow;
  std::vector<int> claim_ids;
  std::vector<int> doc_ids;
};

// A bundle with its training targets. label_class < 0 excludes the example
// from the label loss.
struct Example {
  FeatureBundle features;
  int label_class = -1;
  DomainTag domain = DomainTag::target;
};

class Featurizer {
 public:
  Featurizer() = default;
  Featurizer(Vocabulary bow, EmbedVocab embed)
      : bow_(std::move(bow)), embed_(std::move(embed)) {}

  // BOW vocabulary from target texts (claims and documents as separate
  // corpus documents) unless include_source; embedding vocabulary from all
  // texts.
  static Featurizer build(std::span<const LabeledPair> train,
                          const ModelConfig& config) {
    std::vector<Tokens> bow_corpus, all_corpus;
    for (const auto& p : train) {
      Tokens c = tokenize(p.claim), d = tokenize(p.document);
      if (p.domain == DomainTag::target || config.bow_vocab_include_source) {
        bow_corpus.push_back(c);
        bow_corpus.push_back(d);
      }
      all_corpus.push_back(std::move(c));
      all_corpus.push_back(std::move(d));
    }
    Vocabulary bow;
    if (config.use_bow) {
      if (bow_corpus.empty()) bow_corpus = all_corpus;
      bow = build_vocab(bow_corpus, config.bow_max_terms);
    }
    EmbedVocab embed;
    if (config.use_cnn && !all_corpus.empty()) {
      embed = EmbedVocab::from_terms(
          build_vocab(all_corpus, config.embed_max_terms).terms());
    }
    return Featurizer(std::move(bow), std::move(embed));
  }

  const Vocabulary& bow_vocab() const { return bow_; }
  const EmbedVocab& embed_vocab() const { return embed_; }

  // Writes the vocabulary sizes into the config.
  void configure(ModelConfig& c) const {
    c.bow_vocab_size = c.use_bow ? bow_.size() : 0;
    c.embed_vocab_size = c.use_cnn ? embed_.size() : 0;
  }

  FeatureBundle extract(const LabeledPair& pair,
                        const ModelConfig& config) const {
    return extract(tokenize(pair.claim), tokenize(pair.document), config);
  }

  FeatureBundle extract(const Tokens& claim, const Tokens& doc,
                        const ModelConfig& config) const {
    FeatureBundle f;
    if (config.use_bow) {
      std::vector<double> bow = tf_vector(claim, bow_);
      const std::vector<double> dtf = tf_vector(doc, bow_);
      bow.insert(bow.end(), dtf.begin(), dtf.end());
      bow.push_back(
          cosine_similarity(tfidf_vector(claim, bow_), tfidf_vector(doc, bow_)));
      f.bow = SparseVector::from_dense(bow);
    }
    if (config.use_cnn) {
      f.claim_ids = ids(claim, config.claim_max_len);
      f.doc_ids = ids(doc, config.doc_max_len);
    }
    return f;
  }

 private:
  // Out-of-vocabulary tokens are dropped; the rest is truncated and
  // right-padded with id 0.
  std::vector<int> ids(const Tokens& tokens, std::size_t max_len) const {
    std::vector<int> out;
    out.reserve(max_len);
    for (const auto& t : tokens) {
      if (out.size() == max_len) break;
      const int id = embed_.id_of(t);
      if (id > 0) out.push_back(id);
    }
    out.resize(max_len, 0);
    return out;
  }

  Vocabulary bow_;
  EmbedVocab embed_;
};

// ---------------------------------------------------------------- model

class StanceModel {
 public:
  ModelConfig config;
  Featurizer featurizer;

  Parameter embedding;  // [V, embed_dim]
  std::vector<Parameter> claim_filters, claim_biases;
  std::vector<Parameter> doc_filters, doc_biases;
  Parameter label_w1, label_b1, label_w2, label_b2;
  Parameter domain_w1, domain_b1, domain_w2, domain_b2;

  StanceModel() = default;

  // Shapes follow the config; values are zero until initialize().
  StanceModel(ModelConfig cfg, Featurizer f)
      : config(std::move(cfg)), featurizer(std::move(f)) {
    featurizer.configure(config);
    config.validate();
    const std::size_t feat = config.feature_width();
    if (config.use_cnn) {
      embedding = Parameter("embedding",
                            Tensor({config.embed_vocab_size, config.embed_dim}));
      for (std::size_t w : config.filter_widths) {
        const std::string ws = std::to_string(w);
        for (const char* side : {"claim", "doc"}) {
          auto& filters = side[0] == 'c' ? claim_filters : doc_filters;
          auto& biases = side[0] == 'c' ? claim_biases : doc_biases;
          filters.emplace_back(
              std::string(side) + "_conv_w" + ws + ".filter",
              Tensor({w, config.embed_dim, config.maps_per_width}));
          biases.emplace_back(std::string(side) + "_conv_w" + ws + ".bias",
                              Tensor({config.maps_per_width}));
        }
      }
    }
    const std::size_t h = config.label_hidden, k = config.num_labels();
    label_w1 = Parameter("label_hidden.weight", Tensor({feat, h}));
    label_b1 = Parameter("label_hidden.bias", Tensor({h}));
    label_w2 = Parameter("label_out.weight", Tensor({h, k}));
    label_b2 = Parameter("label_out.bias", Tensor({k}));
    if (config.has_domain_head()) {
      const std::size_t dh = config.domain_hidden, din = config.domain_width();
      domain_w1 = Parameter("domain_hidden.weight", Tensor({din, dh}));
      domain_b1 = Parameter("domain_hidden.bias", Tensor({dh}));
      domain_w2 = Parameter("domain_out.weight", Tensor({dh, 2}));
      domain_b2 = Parameter("domain_out.bias", Tensor({2}));
    }
  }

  // Glorot-uniform dense and conv weights, zero biases, embeddings uniform in
  // +-embed_init_range with a zero padding row.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    auto glorot = [&](Parameter& p, double fan_in, double fan_out) {
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& v : p.value.data) v = rng.uniform(-a, a);
    };
    if (config.use_cnn) {
      const std::size_t d = config.embed_dim;
      for (double& v : embedding.value.data) {
        v = rng.uniform(-config.embed_init_range, config.embed_init_range);
      }
      std::fill_n(embedding.value.data.begin(), d, 0.0);
      for (std::size_t i = 0; i < claim_filters.size(); ++i) {
        const double w = static_cast<double>(config.filter_widths[i]);
        const double m = static_cast<double>(config.maps_per_width);
        glorot(claim_filters[i], w * static_cast<double>(d), m);
        glorot(doc_filters[i], w * static_cast<double>(d), m);
        claim_biases[i].value.zero();
        doc_biases[i].value.zero();
      }
    }
    glorot(label_w1, label_w1.value.dim(0), label_w1.value.dim(1));
    glorot(label_w2, label_w2.value.dim(0), label_w2.value.dim(1));
    label_b1.value.zero();
    label_b2.value.zero();
    if (config.has_domain_head()) {
      glorot(domain_w1, domain_w1.value.dim(0), domain_w1.value.dim(1));
      glorot(domain_w2, domain_w2.value.dim(0), domain_w2.value.dim(1));
      domain_b1.value.zero();
      domain_b2.value.zero();
    }
    zero_grad();
  }

  // word2vec text format: "V D" header, then "word v1 .. vD" per line. Rows
  // of words outside the vocabulary are ignored.
  std::size_t load_pretrained(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embeddings: " + path);
    std::size_t count = 0, dim = 0;
    if (!(in >> count >> dim)) {
      throw std::runtime_error(path + ": missing 'V D' header");
    }
    if (dim != config.embed_dim) {
      throw std::runtime_error(path + ": embedding dimension " +
                               std::to_string(dim) + " != embed_dim " +
                               std::to_string(config.embed_dim));
    }
    const EmbedVocab& vocab = featurizer.embed_vocab();
    std::size_t hits = 0;
    std::string word;
    std::vector<double> row(dim);
    for (std::size_t i = 0; i < count && (in >> word); ++i) {
      for (auto& v : row) {
        if (!(in >> v)) {
          throw std::runtime_error(path + ": truncated vector for '" + word +
                                   "'");
        }
      }
      const int id = vocab.id_of(word);
      if (id > 0) {
        std::copy(row.begin(), row.end(),
                  embedding.value.data.begin() +
                      static_cast<std::ptrdiff_t>(id) *
                          static_cast<std::ptrdiff_t>(dim));
        ++hits;
      }
    }
    return hits;
  }

  // Every parameter, in checkpoint order.
  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    if (config.use_cnn) {
      out.push_back(&embedding);
      for (std::size_t i = 0; i < claim_filters.size(); ++i) {
        out.push_back(&claim_filters[i]);
        out.push_back(&claim_biases[i]);
      }
      for (std::size_t i = 0; i < doc_filters.size(); ++i) {
        out.push_back(&doc_filters[i]);
        out.push_back(&doc_biases[i]);
      }
    }
    for (Parameter* p : {&label_w1, &label_b1, &label_w2, &label_b2}) {
      out.push_back(p);
    }
    if (config.has_domain_head()) {
      for (Parameter* p : {&domain_w1, &domain_b1, &domain_w2, &domain_b2}) {
        out.push_back(p);
      }
    }
    return out;
  }

  // Parameters the optimizer updates.
  std::vector<Parameter*> trainable_parameters() {
    auto all = parameters();
    if (config.use_cnn && !config.finetune_embeddings) {
      all.erase(all.begin());
    }
    return all;
  }

  // Parameters before the gradient reversal (the feature extractor).
  std::vector<Parameter*> feature_parameters() {
    std::vector<Parameter*> out;
    if (!config.use_cnn) return out;
    auto all = parameters();
    const std::size_t n = 1 + 2 * (claim_filters.size() + doc_filters.size());
    out.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }

  void zero_grad() {
    for (Parameter* p : parameters()) p->zero_grad();
  }

  FeatureBundle features(const LabeledPair& p) const {
    return featurizer.extract(p, config);
  }

  Example example(const LabeledPair& p) const {
    return {features(p), class_of(config.scheme, p.label), p.domain};
  }
};

inline StanceModel make_model(const ModelConfig& config, Featurizer featurizer,
                              std::uint64_t seed) {
  StanceModel m(config, std::move(featurizer));
  m.initialize(seed);
  if (m.config.use_cnn && !m.config.pretrained_embeddings.empty()) {
    m.load_pretrained(m.config.pretrained_embeddings);
    std::fill_n(m.embedding.value.data.begin(), m.config.embed_dim, 0.0);
  }
  return m;
}

// ---------------------------------------------------------------- forward

struct ExampleTrace {
  Tensor claim_x, doc_x;
  std::vector<ConvPoolTrace> claim_conv, doc_conv;
};

// Intermediate values of one batch, kept for the backward pass.
struct ForwardTrace {
  std::vector<const FeatureBundle*> batch;
  double lambda = 0.0;
  Tensor features;  // [B, feature_width]
  std::vector<ExampleTrace> examples;
  Tensor label_pre, label_act, label_logits;
  bool has_domain = false;
  Tensor domain_in, domain_pre, domain_act, domain_logits;
};

namespace detail {

inline void check_bundle(const ModelConfig& c, const FeatureBundle& f) {
  if (c.use_bow && f.bow.dim != c.bow_width()) {
    throw std::invalid_argument("feature bundle: BOW width " +
                                std::to_string(f.bow.dim) + " != " +
                                std::to_string(c.bow_width()));
  }
  if (c.use_cnn && (f.claim_ids.size() != c.claim_max_len ||
                    f.doc_ids.size() != c.doc_max_len)) {
    throw std::invalid_argument("feature bundle: id sequence length mismatch");
  }
}

// Pads to the widest filter so every width sees a valid window.
inline std::vector<int> pad_to_width(std::span<const int> ids,
                                     std::size_t width) {
  std::vector<int> out(ids.begin(), ids.end());
  if (out.size() < width) out.resize(width, 0);
  return out;
}

inline void encode_sequence(const StanceModel& m, std::span<const int> ids,
                            const std::vector<Parameter>& filters,
                            const std::vector<Parameter>& biases, double* out,
                            Tensor& x, std::vector<ConvPoolTrace>& traces) {
  const std::size_t maps = m.config.maps_per_width;
  const std::size_t widest = *std::max_element(m.config.filter_widths.begin(),
                                               m.config.filter_widths.end());
  const std::vector<int> padded = pad_to_width(ids, widest);
  x = embed_forward(padded, m.embedding);
  traces.resize(filters.size());
  for (std::size_t i = 0; i < filters.size(); ++i) {
    const Tensor pooled =
        conv1d_maxpool_forward(x, filters[i], biases[i], &traces[i]);
    std::copy(pooled.data.begin(), pooled.data.end(), out + i * maps);
  }
}

}  // namespace detail

inline ForwardTrace forward_trace(const StanceModel& m,
                                  std::vector<const FeatureBundle*> batch,
                                  double lambda) {
  const ModelConfig& c = m.config;
  ForwardTrace tr;
  tr.lambda = lambda;
  tr.batch = std::move(batch);
  const std::size_t b = tr.batch.size(), feat = c.feature_width();
  tr.features = Tensor({b, feat});
  tr.examples.resize(c.use_cnn ? b : 0);
  const std::size_t bw = c.bow_width();
  const std::size_t half = c.filter_widths.size() * c.maps_per_width;
  for (std::size_t r = 0; r < b; ++r) {
    const FeatureBundle& f = *tr.batch[r];
    detail::check_bundle(c, f);
    double* row = &tr.features.data[r * feat];
    for (std::size_t i = 0; i < f.bow.index.size(); ++i) {
      row[f.bow.index[i]] = f.bow.value[i];
    }
    if (c.use_cnn) {
      ExampleTrace& et = tr.examples[r];
      detail::encode_sequence(m, f.claim_ids, m.claim_filters, m.claim_biases,
                              row + bw, et.claim_x, et.claim_conv);
      detail::encode_sequence(m, f.doc_ids, m.doc_filters, m.doc_biases,
                              row + bw + half, et.doc_x, et.doc_conv);
    }
  }
  tr.label_pre = dense_forward(tr.features, m.label_w1, m.label_b1);
  tr.label_act = relu_forward(tr.label_pre);
  tr.label_logits = dense_forward(tr.label_act, m.label_w2, m.label_b2);
  tr.has_domain = c.has_domain_head();
  if (tr.has_domain) {
    const std::size_t lo = c.domain_begin(), width = c.domain_width();
    Tensor slice({b, width});
    for (std::size_t r = 0; r < b; ++r) {
      std::copy_n(&tr.features.data[r * feat + lo], width,
                  &slice.data[r * width]);
    }
    tr.domain_in = grad_reverse_forward(slice, lambda);
    tr.domain_pre = dense_forward(tr.domain_in, m.domain_w1, m.domain_b1);
    tr.domain_act = relu_forward(tr.domain_pre);
    tr.domain_logits = dense_forward(tr.domain_act, m.domain_w2, m.domain_b2);
  } else {
    check_reversal_lambda(lambda);
  }
  return tr;
}

// Fingerprint of every ReLU mask and pooling argmax in the trace.
inline std::uint64_t activation_pattern(const ForwardTrace& tr) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  for (double v : tr.label_pre.data) mix(v > 0.0);
  for (double v : tr.domain_pre.data) mix(v > 0.0);
  for (const auto& e : tr.examples) {
    for (const auto* convs : {&e.claim_conv, &e.doc_conv}) {
      for (const auto& t : *convs) {
        for (std::size_t m = 0; m < t.argmax.size(); ++m) {
          mix(t.argmax[m] * 2 + (t.preact[m] > 0.0));
        }
      }
    }
  }
  return h;
}

struct ModelOutput {
  Tensor label_logits;                 // [batch, num_labels]
  std::optional<Tensor> domain_logits;  // [batch, 2] when a domain head exists
};

inline ModelOutput forward(const StanceModel& m,
                           std::span<const FeatureBundle> batch,
                           double lambda = 0.0) {
  if (batch.empty()) throw std::invalid_argument("forward: empty batch");
  std::vector<const FeatureBundle*> ptrs;
  for (const auto& f : batch) ptrs.push_back(&f);
  ForwardTrace tr = forward_trace(m, std::move(ptrs), lambda);
  ModelOutput out{std::move(tr.label_logits), std::nullopt};
  if (tr.has_domain) out.domain_logits = std::move(tr.domain_logits);
  return out;
}

// ---------------------------------------------------------------- loss

struct LossValue {
  double label_loss = 0.0;
  std::optional<double> domain_loss;
  std::size_t label_count = 0;  // examples contributing to label_loss
  std::size_t domain_count = 0;
};

struct LossWeights {
  double label = 1.0;
  double domain = 1.0;
};

namespace detail {

inline void backward_cnn(StanceModel& m, const ForwardTrace& tr,
                         const Tensor& dfeat) {
  const ModelConfig& c = m.config;
  const std::size_t feat = c.feature_width(), bw = c.bow_width();
  const std::size_t maps = c.maps_per_width;
  const std::size_t half = c.filter_widths.size() * maps;
  for (std::size_t r = 0; r < tr.batch.size(); ++r) {
    const ExampleTrace& et = tr.examples[r];
    const double* g = &dfeat.data[r * feat + bw];
    for (int side = 0; side < 2; ++side) {
      const Tensor& x = side == 0 ? et.claim_x : et.doc_x;
      const auto& traces = side == 0 ? et.claim_conv : et.doc_conv;
      auto& filters = side == 0 ? m.claim_filters : m.doc_filters;
      auto& biases = side == 0 ? m.claim_biases : m.doc_biases;
      const FeatureBundle& f = *tr.batch[r];
      const std::vector<int> ids = pad_to_width(
          side == 0 ? std::span<const int>(f.claim_ids)
                    : std::span<const int>(f.doc_ids),
          *std::max_element(c.filter_widths.begin(), c.filter_widths.end()));
      Tensor dx(x.shape);
      for (std::size_t i = 0; i < filters.size(); ++i) {
        const Tensor part = conv1d_maxpool_backward(
            x, filters[i], biases[i], traces[i],
            std::span<const double>(g + side * half + i * maps, maps));
        for (std::size_t k = 0; k < dx.size(); ++k) dx.data[k] += part.data[k];
      }
      if (c.finetune_embeddings) embed_backward(ids, m.embedding, dx);
    }
  }
  if (c.freeze_padding) {
    std::fill_n(m.embedding.grad.data.begin(), c.embed_dim, 0.0);
  }
}

}  // namespace detail

// Label loss over examples with label_class >= 0 (source examples only when
// source_label_loss), domain loss over every example. With backward set, the
// weighted sum is backpropagated into the parameter gradients; the reversal
// makes feature parameters receive -lambda times the domain-loss gradient.
inline LossValue loss(StanceModel& m, std::span<const Example> batch,
                      double lambda, bool backward = true,
                      LossWeights weights = {},
                      ForwardTrace* trace_out = nullptr) {
  const ModelConfig& c = m.config;
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  if (lambda > 0.0 && !c.has_domain_head()) {
    throw std::invalid_argument("loss: lambda > 0 without a domain head");
  }
  std::vector<const FeatureBundle*> ptrs;
  std::vector<int> labels, domains;
  for (const Example& e : batch) {
    ptrs.push_back(&e.features);
    const bool use = e.label_class >= 0 &&
                     (c.source_label_loss || e.domain == DomainTag::target);
    labels.push_back(use ? e.label_class : -1);
    domains.push_back(static_cast<int>(e.domain));
  }
  ForwardTrace tr = forward_trace(m, std::move(ptrs), lambda);
  LossValue out;
  const SoftmaxLoss label_ce = softmax_cross_entropy(tr.label_logits, labels);
  out.label_loss = label_ce.loss;
  out.label_count = label_ce.counted;
  std::optional<SoftmaxLoss> domain_ce;
  if (tr.has_domain) {
    domain_ce = softmax_cross_entropy(tr.domain_logits, domains);
    out.domain_loss = domain_ce->loss;
    out.domain_count = domain_ce->counted;
  }
  if (backward) {
    Tensor dfeat({batch.size(), c.feature_width()});
    if (weights.label != 0.0) {
      Tensor d = softmax_cross_entropy_backward(label_ce, labels, weights.label);
      d = dense_backward(tr.label_act, m.label_w2, m.label_b2, d);
      d = relu_backward(tr.label_pre, d);
      dfeat = dense_backward(tr.features, m.label_w1, m.label_b1, d);
    }
    if (domain_ce && weights.domain != 0.0) {
      Tensor d =
          softmax_cross_entropy_backward(*domain_ce, domains, weights.domain);
      d = dense_backward(tr.domain_act, m.domain_w2, m.domain_b2, d);
      d = relu_backward(tr.domain_pre, d);
      d = dense_backward(tr.domain_in, m.domain_w1, m.domain_b1, d);
      d = grad_reverse_backward(d, lambda);
      const std::size_t lo = c.domain_begin(), width = c.domain_width();
      const std::size_t feat = c.feature_width();
      for (std::size_t r = 0; r < batch.size(); ++r) {
        for (std::size_t k = 0; k < width; ++k) {
          dfeat.data[r * feat + lo + k] += d.data[r * width + k];
        }
      }
    }
    if (c.use_cnn) detail::backward_cnn(m, tr, dfeat);
  }
  if (trace_out) *trace_out = std::move(tr);
  return out;
}

// ---------------------------------------------------------------- predict

// Row-wise argmax; ties go to the lowest class index.
inline std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  std::vector<std::size_t> out;
  if (logits.size() == 0) return out;
  const std::size_t k = logits.dim(1);
  for (std::size_t r = 0; r < logits.dim(0); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    }
    out.push_back(best);
  }
  return out;
}

// Predicted class indices under the model's scheme.
inline std::vector<std::size_t> predict(const StanceModel& m,
                                        std::span<const FeatureBundle> bundles,
                                        std::size_t chunk = 256) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < bundles.size(); i += chunk) {
    const auto part = bundles.subspan(i, std::min(chunk, bundles.size() - i));
    auto cls = argmax_rows(forward(m, part).label_logits);
    out.insert(out.end(), cls.begin(), cls.end());
  }
  return out;
}

// Stance labels for schemes whose classes are stances (not related2).
inline std::vector<StanceLabel> predict_stances(
    const StanceModel& m, std::span<const FeatureBundle> bundles) {
  if (m.config.scheme == LabelScheme::related2) {
    throw std::invalid_argument("predict_stances: related2 model");
  }
  std::vector<StanceLabel> out;
  for (std::size_t c : predict(m, bundles)) {
    out.push_back(*stance_of(m.config.scheme, c));
  }
  return out;
}

}  // namespace stance
