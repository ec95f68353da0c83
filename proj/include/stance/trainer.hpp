#pragma once

// Joint label / adversarial-domain training, run selection, checkpoints.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "stance/ingest.hpp"
#include "stance/model.hpp"
#include "stance/optim.hpp"

namespace stance {

enum class SelectionMetric { label, domain, sum };

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  AdamConfig adam;
  double lambda_max = 1.0;
  double ramp_gamma = 10.0;
  std::uint64_t seed = 0;
  std::size_t runs = 5;
  double validation_fraction = 0.2;
  double clip_norm = 0.0;  // 0 disables clipping
  SelectionMetric selection = SelectionMetric::label;

  void validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be > 0");
    if (runs == 0) throw std::invalid_argument("runs must be > 0");
    if (!(lambda_max >= 0.0)) {
      throw std::invalid_argument("lambda_max must be >= 0");
    }
    if (!(ramp_gamma > 0.0)) {
      throw std::invalid_argument("ramp_gamma must be > 0");
    }
    if (!(adam.learning_rate > 0.0)) {
      throw std::invalid_argument("learning_rate must be > 0");
    }
  }
};

inline std::string_view selection_name(SelectionMetric s) {
  switch (s) {
    case SelectionMetric::label: return "label";
    case SelectionMetric::domain: return "domain";
    case SelectionMetric::sum: return "sum";
  }
  return "?";
}

inline std::vector<std::pair<std::string, std::string>> to_key_values(
    const TrainConfig& c) {
  auto real = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  return {
      {"epochs", std::to_string(c.epochs)},
      {"batch_size", std::to_string(c.batch_size)},
      {"learning_rate", real(c.adam.learning_rate)},
      {"beta1", real(c.adam.beta1)},
      {"beta2", real(c.adam.beta2)},
      {"adam_epsilon", real(c.adam.epsilon)},
      {"lambda_max", real(c.lambda_max)},
      {"ramp_gamma", real(c.ramp_gamma)},
      {"seed", std::to_string(c.seed)},
      {"runs", std::to_string(c.runs)},
      {"validation_fraction", real(c.validation_fraction)},
      {"clip_norm", real(c.clip_norm)},
      {"selection", std::string(selection_name(c.selection))},
  };
}

inline bool apply_key(TrainConfig& c, const std::string& key,
                      const std::string& v) {
  using namespace detail;
  if (key == "epochs") c.epochs = parse_size(key, v);
  else if (key == "batch_size") c.batch_size = parse_size(key, v);
  else if (key == "learning_rate") c.adam.learning_rate = parse_real(key, v);
  else if (key == "beta1") c.adam.beta1 = parse_real(key, v);
  else if (key == "beta2") c.adam.beta2 = parse_real(key, v);
  else if (key == "adam_epsilon") c.adam.epsilon = parse_real(key, v);
  else if (key == "lambda_max") c.lambda_max = parse_real(key, v);
  else if (key == "ramp_gamma") c.ramp_gamma = parse_real(key, v);
  else if (key == "seed") c.seed = parse_size(key, v);
  else if (key == "runs") c.runs = parse_size(key, v);
  else if (key == "validation_fraction") c.validation_fraction = parse_real(key, v);
  else if (key == "clip_norm") c.clip_norm = parse_real(key, v);
  else if (key == "selection") {
    if (v == "label") c.selection = SelectionMetric::label;
    else if (v == "domain") c.selection = SelectionMetric::domain;
    else if (v == "sum") c.selection = SelectionMetric::sum;
    else throw std::invalid_argument("config key 'selection': unknown metric '" +
                                     v + "'");
  }
  else return false;
  return true;
}

// lambda_max * (2 / (1 + exp(-gamma * p)) - 1).
inline double lambda_schedule(double progress, double lambda_max,
                              double gamma) {
  if (!(progress >= 0.0 && progress <= 1.0)) {
    throw std::invalid_argument("lambda_schedule: progress outside [0, 1]");
  }
  return lambda_max * (2.0 / (1.0 + std::exp(-gamma * progress)) - 1.0);
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lambda = 0.0;
  double train_label_loss = 0.0;
  std::optional<double> train_domain_loss;
  double val_label_loss = 0.0;
  std::optional<double> val_domain_loss;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;

  bool operator==(const TrainingHistory&) const = default;

  // +inf when empty.
  double min_validation(SelectionMetric metric = SelectionMetric::label) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : epochs) {
      double v = e.val_label_loss;
      if (metric == SelectionMetric::domain) {
        v = e.val_domain_loss.value_or(std::numeric_limits<double>::infinity());
      } else if (metric == SelectionMetric::sum) {
        v += e.val_domain_loss.value_or(0.0);
      }
      best = std::min(best, v);
    }
    return best;
  }
};

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Tab-separated, one line per epoch; "-" marks an absent domain loss.
inline void write_history(std::ostream& os, const TrainingHistory& h) {
  os << "#epoch\tlambda\ttrain_label_loss\ttrain_domain_loss\t"
        "val_label_loss\tval_domain_loss\n";
  auto opt = [](const std::optional<double>& v) {
    return v ? format_real(*v) : std::string("-");
  };
  for (const auto& e : h.epochs) {
    os << e.epoch << '\t' << format_real(e.lambda) << '\t'
       << format_real(e.train_label_loss) << '\t' << opt(e.train_domain_loss)
       << '\t' << format_real(e.val_label_loss) << '\t'
       << opt(e.val_domain_loss) << '\n';
  }
}

inline TrainingHistory read_history(std::istream& is) {
  TrainingHistory h;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, '\t')) f.push_back(item);
    if (f.size() != 6) {
      throw std::runtime_error("history: malformed line " +
                               std::to_string(lineno));
    }
    auto opt = [](const std::string& s) -> std::optional<double> {
      if (s == "-") return std::nullopt;
      return std::stod(s);
    };
    h.epochs.push_back({std::stoull(f[0]), std::stod(f[1]), std::stod(f[2]),
                        opt(f[3]), std::stod(f[4]), opt(f[5])});
  }
  return h;
}

struct TrainRun {
  StanceModel model;
  TrainingHistory history;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Examples a scheme can represent; the rest are dropped from training pools.
inline std::vector<LabeledPair> representable(std::span<const LabeledPair> in,
                                              LabelScheme scheme) {
  std::vector<LabeledPair> out;
  for (const auto& p : in) {
    if (class_of(scheme, p.label) >= 0) out.push_back(p);
  }
  return out;
}

inline LossValue evaluate_loss(StanceModel& m, std::span<const Example> data,
                               std::size_t chunk) {
  LossValue total;
  double label_sum = 0.0, domain_sum = 0.0;
  for (std::size_t i = 0; i < data.size(); i += chunk) {
    auto part = data.subspan(i, std::min(chunk, data.size() - i));
    LossValue v = loss(m, part, 0.0, false);
    label_sum += v.label_loss * static_cast<double>(v.label_count);
    total.label_count += v.label_count;
    if (v.domain_loss) {
      domain_sum += *v.domain_loss * static_cast<double>(v.domain_count);
      total.domain_count += v.domain_count;
    }
  }
  if (total.label_count) {
    total.label_loss = label_sum / static_cast<double>(total.label_count);
  }
  if (m.config.has_domain_head() && total.domain_count) {
    total.domain_loss = domain_sum / static_cast<double>(total.domain_count);
  }
  return total;
}

}  // namespace detail

// Training data after the validation split, with features extracted.
struct PreparedData {
  std::vector<Example> source_train, target_train, validation;
};

inline PreparedData prepare(const StanceModel& m,
                            std::span<const LabeledPair> source_train,
                            std::span<const LabeledPair> target_train,
                            std::span<const LabeledPair> validation) {
  PreparedData d;
  for (const auto& p : source_train) d.source_train.push_back(m.example(p));
  for (const auto& p : target_train) d.target_train.push_back(m.example(p));
  for (const auto& p : validation) d.validation.push_back(m.example(p));
  return d;
}

// Optional per-epoch observer, called after the history record is appended.
using EpochCallback = std::function<void(const StanceModel&,
                                         const EpochRecord&)>;

// Runs the epoch loop on an initialized model and prepared data.
inline TrainingHistory fit(StanceModel& model, const TrainConfig& tc,
                           const PreparedData& data,
                           const EpochCallback& on_epoch = {}) {
  tc.validate();
  if (data.target_train.empty()) {
    throw std::invalid_argument("train: target pool is empty");
  }
  Adam adam(tc.adam);
  TrainingHistory history;
  const bool domain = model.config.has_domain_head();
  auto params = model.trainable_parameters();
  for (std::size_t e = 0; e < tc.epochs; ++e) {
    const double progress =
        static_cast<double>(e) / static_cast<double>(tc.epochs);
    const double lambda =
        domain ? lambda_schedule(progress, tc.lambda_max, tc.ramp_gamma) : 0.0;
    const auto order = epoch_sample_balanced_indices(
        data.source_train.size(), data.target_train.size(), e, tc.seed);
    double label_sum = 0.0, domain_sum = 0.0;
    std::size_t label_n = 0, domain_n = 0;
    std::vector<Example> batch;
    for (std::size_t start = 0, bi = 0; start < order.size();
         start += tc.batch_size, ++bi) {
      batch.clear();
      for (std::size_t k = start;
           k < std::min(order.size(), start + tc.batch_size); ++k) {
        const PoolRef& r = order[k];
        batch.push_back(r.domain == DomainTag::source
                            ? data.source_train[r.index]
                            : data.target_train[r.index]);
      }
      LossValue v = loss(model, batch, lambda, true);
      if (!std::isfinite(v.label_loss) ||
          (v.domain_loss && !std::isfinite(*v.domain_loss))) {
        throw TrainingError("non-finite loss at epoch " +
                            std::to_string(e + 1) + ", batch " +
                            std::to_string(bi));
      }
      clip_grad_norm(params, tc.clip_norm);
      adam.step(params);
      model.zero_grad();
      label_sum += v.label_loss * static_cast<double>(v.label_count);
      label_n += v.label_count;
      if (v.domain_loss) {
        domain_sum += *v.domain_loss * static_cast<double>(v.domain_count);
        domain_n += v.domain_count;
      }
    }
    EpochRecord rec;
    rec.epoch = e + 1;
    rec.lambda = lambda;
    rec.train_label_loss = label_n ? label_sum / static_cast<double>(label_n) : 0.0;
    if (domain) {
      rec.train_domain_loss =
          domain_n ? domain_sum / static_cast<double>(domain_n) : 0.0;
    }
    if (!data.validation.empty()) {
      const LossValue val =
          detail::evaluate_loss(model, data.validation, 256);
      rec.val_label_loss = val.label_loss;
      rec.val_domain_loss = val.domain_loss;
    }
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(model, rec);
  }
  return history;
}

// Splits off validation data, builds vocabularies from the training part,
// initializes a model and trains it. Deterministic in train_config.seed.
inline TrainRun train(const ModelConfig& model_config,
                      const TrainConfig& train_config,
                      std::span<const LabeledPair> source,
                      std::span<const LabeledPair> target,
                      const EpochCallback& on_epoch = {}) {
  train_config.validate();
  const auto src = detail::representable(source, model_config.scheme);
  const auto tgt = detail::representable(target, model_config.scheme);
  if (tgt.empty()) throw std::invalid_argument("train: target pool is empty");
  std::vector<LabeledPair> all = src;
  all.insert(all.end(), tgt.begin(), tgt.end());
  Split split = split_train_validation(all, train_config.validation_fraction,
                                       train_config.seed);
  std::vector<LabeledPair> src_train, tgt_train;
  for (auto& p : split.train) {
    (p.domain == DomainTag::source ? src_train : tgt_train).push_back(p);
  }
  if (tgt_train.empty()) {
    throw std::invalid_argument("train: no target examples left after split");
  }
  // One domain only: nothing to adapt, so no domain head.
  ModelConfig mc = model_config;
  if (src.empty()) mc.da_bow = mc.da_cnn = false;
  Featurizer feat = Featurizer::build(split.train, mc);
  TrainRun run{make_model(mc, std::move(feat),
                          derive_seed(train_config.seed, 0x1417)),
               {}};
  const PreparedData data =
      prepare(run.model, src_train, tgt_train, split.validation);
  run.history = fit(run.model, train_config, data, on_epoch);
  return run;
}

// Index of the run with the smallest minimum validation loss; ties go to the
// earlier run.
inline std::size_t select_best_index(std::span<const TrainingHistory> runs,
                                     SelectionMetric metric =
                                         SelectionMetric::label) {
  if (runs.empty()) throw std::invalid_argument("select_best: no runs");
  std::size_t best = 0;
  double best_loss = runs[0].min_validation(metric);
  for (std::size_t i = 1; i < runs.size(); ++i) {
    const double l = runs[i].min_validation(metric);
    if (l < best_loss) {
      best = i;
      best_loss = l;
    }
  }
  return best;
}

inline const StanceModel& select_best(std::span<const TrainRun> runs,
                                      SelectionMetric metric =
                                          SelectionMetric::label) {
  std::vector<TrainingHistory> h;
  for (const auto& r : runs) h.push_back(r.history);
  return runs[select_best_index(h, metric)].model;
}

// Worker cap from STANCE_DANN_THREADS (default: hardware concurrency).
inline std::size_t run_parallelism() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("STANCE_DANN_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) n = static_cast<std::size_t>(v);
  }
  return n;
}

// Independent runs with seeds derived from train_config.seed; results are
// ordered by run index regardless of scheduling.
inline std::vector<TrainRun> train_runs(const ModelConfig& model_config,
                                        const TrainConfig& train_config,
                                        std::span<const LabeledPair> source,
                                        std::span<const LabeledPair> target,
                                        std::size_t threads = 0) {
  train_config.validate();
  const std::size_t n = train_config.runs;
  std::vector<std::optional<TrainRun>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t i) {
    try {
      TrainConfig tc = train_config;
      tc.seed = derive_seed(train_config.seed, 0xA11 + i);
      slots[i] = train(model_config, tc, source, target);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers =
      std::min(n, threads ? threads : run_parallelism());
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) work(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  std::vector<TrainRun> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

// ---------------------------------------------------------------- checkpoint
//
// Little-endian binary layout:
//   8 bytes   magic "STDANNCK"
//   u32       format version (1)
//   u64 + n   model config as "key = value" lines
//   u64 + n   BOW vocabulary in its text form
//   u64 + n   embedding terms from id 1, one per line
//   u32       parameter count
//   per parameter:
//     u32 + n name, u32 rank, u64 x rank dims, f64 x product(dims) values

inline constexpr char kCheckpointMagic[8] = {'S', 'T', 'D', 'A',
                                             'N', 'N', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& os) : os_(os) {}
  void u32(std::uint32_t v) { uint(v, 4); }
  void u64(std::uint64_t v) { uint(v, 8); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u64(s.size());
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void raw(const char* p, std::size_t n) {
    os_.write(p, static_cast<std::streamsize>(n));
  }

 private:
  void uint(std::uint64_t v, int bytes) {
    char b[8];
    for (int i = 0; i < bytes; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os_.write(b, bytes);
  }
  std::ostream& os_;
};

class ByteReader {
 public:
  explicit ByteReader(std::istream& is) : is_(is) {}
  std::uint32_t u32(const char* what) {
    return static_cast<std::uint32_t>(uint(4, what));
  }
  std::uint64_t u64(const char* what) { return uint(8, what); }
  double f64(const char* what) { return std::bit_cast<double>(uint(8, what)); }
  std::string str(const char* what, std::uint64_t limit = 1ULL << 32) {
    const std::uint64_t n = u64(what);
    if (n > limit) throw CheckpointError(std::string("checkpoint: bad length for ") + what);
    std::string s(n, '\0');
    read(s.data(), n, what);
    return s;
  }
  void read(char* p, std::size_t n, const char* what) {
    is_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") +
                            what);
    }
  }

 private:
  std::uint64_t uint(int bytes, const char* what) {
    unsigned char b[8];
    read(reinterpret_cast<char*>(b), static_cast<std::size_t>(bytes), what);
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::istream& is_;
};

inline std::string config_text(const ModelConfig& c) {
  std::string out;
  for (const auto& [k, v] : to_key_values(c)) out += k + " = " + v + "\n";
  return out;
}

inline ModelConfig parse_config_text(const std::string& text) {
  ModelConfig c;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
    if (!apply_key(c, key, value)) {
      throw CheckpointError("checkpoint: unknown config field '" + key + "'");
    }
  }
  return c;
}

// Architecture fields that must agree between a checkpoint and a request.
inline const std::vector<std::string>& architecture_keys() {
  static const std::vector<std::string> keys = {
      "use_bow",         "use_cnn",       "da_features",    "embed_dim",
      "filter_widths",   "maps_per_width", "claim_max_len", "doc_max_len",
      "label_hidden",    "domain_hidden", "label_scheme"};
  return keys;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const StanceModel& model) {
  detail::ByteWriter w(os);
  w.raw(kCheckpointMagic, 8);
  w.u32(kCheckpointVersion);
  w.str(detail::config_text(model.config));
  std::ostringstream vocab;
  model.featurizer.bow_vocab().save(vocab);
  w.str(model.config.use_bow ? vocab.str() : std::string());
  std::string terms;
  for (const auto& t : model.featurizer.embed_vocab().real_terms()) {
    terms += t + "\n";
  }
  w.str(terms);
  auto params = const_cast<StanceModel&>(model).parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    w.u32(static_cast<std::uint32_t>(p->name.size()));
    w.raw(p->name.data(), p->name.size());
    w.u32(static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape) w.u64(d);
    for (double v : p->value.data) w.f64(v);
  }
}

// When `expected` is given, every architecture field must match it.
inline StanceModel read_checkpoint(std::istream& is,
                                   const ModelConfig* expected = nullptr) {
  detail::ByteReader r(is);
  char magic[8];
  r.read(magic, 8, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw CheckpointError("checkpoint: bad magic (not a model checkpoint)");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " +
                          std::to_string(version));
  }
  ModelConfig cfg = detail::parse_config_text(r.str("config"));
  if (expected) {
    const auto want = to_key_values(*expected);
    const auto have = to_key_values(cfg);
    for (const auto& key : detail::architecture_keys()) {
      auto find = [&](const auto& kv) {
        for (const auto& [k, v] : kv) {
          if (k == key) return v;
        }
        return std::string();
      };
      if (find(want) != find(have)) {
        throw CheckpointError("checkpoint: config field '" + key +
                              "' is '" + find(have) + "', expected '" +
                              find(want) + "'");
      }
    }
  }
  Vocabulary bow;
  const std::string vocab_text = r.str("bow vocabulary");
  if (cfg.use_bow) {
    std::istringstream vs(vocab_text);
    bow = Vocabulary::load(vs);
  }
  std::vector<std::string> terms;
  {
    std::istringstream ts(r.str("embedding terms"));
    std::string t;
    while (std::getline(ts, t)) terms.push_back(t);
  }
  const std::size_t bow_size = cfg.bow_vocab_size;
  const std::size_t embed_size = cfg.embed_vocab_size;
  StanceModel model(cfg, Featurizer(std::move(bow),
                                    EmbedVocab::from_terms(std::move(terms))));
  if (model.config.bow_vocab_size != bow_size ||
      model.config.embed_vocab_size != embed_size) {
    throw CheckpointError("checkpoint: vocabulary size does not match config");
  }
  auto params = model.parameters();
  const std::uint32_t count = r.u32("parameter count");
  if (count != params.size()) {
    throw CheckpointError("checkpoint: parameter count " +
                          std::to_string(count) + ", architecture needs " +
                          std::to_string(params.size()));
  }
  for (Parameter* p : params) {
    const std::uint32_t name_len = r.u32("parameter name");
    if (name_len > 4096) throw CheckpointError("checkpoint: bad parameter name");
    std::string name(name_len, '\0');
    r.read(name.data(), name_len, "parameter name");
    if (name != p->name) {
      throw CheckpointError("checkpoint: expected parameter '" + p->name +
                            "', found '" + name + "'");
    }
    const std::uint32_t rank = r.u32("parameter rank");
    if (rank > 8) throw CheckpointError("checkpoint: bad rank for " + name);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = r.u64("parameter shape");
    if (shape != p->value.shape) {
      throw CheckpointError("checkpoint: shape mismatch for '" + name + "': " +
                            shape_string(shape) + " vs " +
                            shape_string(p->value.shape));
    }
    for (double& v : p->value.data) v = r.f64(name.c_str());
  }
  return model;
}

inline void save_checkpoint(const StanceModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot write checkpoint: " + path);
  write_checkpoint(os, model);
  if (!os) throw CheckpointError("error writing checkpoint: " + path);
}

inline StanceModel load_checkpoint(const std::string& path,
                                   const ModelConfig* expected = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path);
  return read_checkpoint(is, expected);
}

}  // namespace stance
