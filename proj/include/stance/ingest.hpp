#pragma once

// Dataset ingestion: FNC CSV, pre-resolved FEVER records, the normalized
// dataset format, validation splitting and balanced epoch sampling.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stance/tensor.hpp"

namespace stance {

enum class StanceLabel { agree = 0, disagree = 1, discuss = 2, unrelated = 3 };
enum class DomainTag { source = 0, target = 1 };

inline constexpr std::array<StanceLabel, 4> kAllStances = {
    StanceLabel::agree, StanceLabel::disagree, StanceLabel::discuss,
    StanceLabel::unrelated};

inline std::string_view to_string(StanceLabel l) {
  switch (l) {
    case StanceLabel::agree: return "agree";
    case StanceLabel::disagree: return "disagree";
    case StanceLabel::discuss: return "discuss";
    case StanceLabel::unrelated: return "unrelated";
  }
  return "?";
}

inline bool is_related(StanceLabel l) { return l != StanceLabel::unrelated; }

inline std::string_view to_string(DomainTag d) {
  return d == DomainTag::source ? "source" : "target";
}

inline std::optional<StanceLabel> parse_stance(std::string_view s) {
  for (StanceLabel l : kAllStances) {
    if (to_string(l) == s) return l;
  }
  return std::nullopt;
}

inline std::optional<DomainTag> parse_domain(std::string_view s) {
  if (s == "source") return DomainTag::source;
  if (s == "target") return DomainTag::target;
  return std::nullopt;
}

struct LabeledPair {
  std::string id;
  std::string claim;
  std::string document;
  StanceLabel label = StanceLabel::unrelated;
  DomainTag domain = DomainTag::target;

  bool operator==(const LabeledPair&) const = default;
};

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- CSV

// RFC 4180 reader: quoted fields may contain commas, doubled quotes and
// newlines. Records are returned with the physical line they started on.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  // False at end of input.
  bool next(std::vector<std::string>& fields, std::size_t& start_line) {
    fields.clear();
    int c = in_.get();
    if (c == EOF) return false;
    start_line = ++line_;
    std::string field;
    bool quoted = false, was_quoted = false;
    for (;; c = in_.get()) {
      if (quoted) {
        if (c == EOF) {
          throw IngestError("csv parse error: unterminated quote starting "
                            "on line " + std::to_string(start_line));
        }
        if (c == '"') {
          if (in_.peek() == '"') {
            in_.get();
            field.push_back('"');
          } else {
            quoted = false;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(static_cast<char>(c));
        }
        continue;
      }
      if (c == EOF || c == '\n') {
        if (!field.empty() && field.back() == '\r' && !was_quoted) {
          field.pop_back();
        }
        fields.push_back(std::move(field));
        return true;
      }
      if (c == '\r' && was_quoted && (in_.peek() == '\n' || in_.peek() == EOF)) {
        continue;
      }
      if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
        was_quoted = false;
      } else if (c == '"' && field.empty() && !was_quoted) {
        quoted = was_quoted = true;
      } else if (was_quoted) {
        throw IngestError("csv parse error: text after closing quote on line " +
                          std::to_string(line_));
      } else {
        field.push_back(static_cast<char>(c));
      }
    }
  }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open file: " + path);
  return in;
}

namespace detail {

inline void expect_header(CsvReader& reader, const std::string& path,
                          const std::vector<std::string>& expected) {
  std::vector<std::string> header;
  std::size_t line = 0;
  if (!reader.next(header, line) || header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw IngestError(path + ": expected header '" + want + "'");
  }
}

}  // namespace detail

// FNC release layout: stances `Headline,Body ID,Stance`, bodies
// `Body ID,articleBody`. All pairs are target-domain.
inline std::vector<LabeledPair> load_fnc(const std::string& stances_path,
                                         const std::string& bodies_path) {
  std::unordered_map<std::string, std::string> bodies;
  {
    auto in = open_input(bodies_path);
    CsvReader reader(in);
    detail::expect_header(reader, bodies_path, {"Body ID", "articleBody"});
    std::vector<std::string> row;
    std::size_t line = 0;
    while (reader.next(row, line)) {
      if (row.size() == 1 && row[0].empty()) continue;
      if (row.size() != 2) {
        throw IngestError(bodies_path + ": csv parse error on line " +
                          std::to_string(line) + ": expected 2 fields");
      }
      bodies[row[0]] = std::move(row[1]);
    }
  }
  std::vector<LabeledPair> out;
  auto in = open_input(stances_path);
  CsvReader reader(in);
  detail::expect_header(reader, stances_path, {"Headline", "Body ID", "Stance"});
  std::vector<std::string> row;
  std::size_t line = 0;
  while (reader.next(row, line)) {
    if (row.size() == 1 && row[0].empty()) continue;
    const std::string where = stances_path + " line " + std::to_string(line);
    if (row.size() != 3) {
      throw IngestError(stances_path + ": csv parse error on line " +
                        std::to_string(line) + ": expected 3 fields");
    }
    auto body = bodies.find(row[1]);
    if (body == bodies.end()) {
      throw IngestError("unknown body id '" + row[1] + "' at " + where);
    }
    auto label = parse_stance(row[2]);
    if (!label) {
      throw IngestError("unknown stance '" + row[2] + "' at " + where);
    }
    if (row[0].empty() || body->second.empty()) {
      throw IngestError("empty claim or document at " + where);
    }
    out.push_back({"fnc-" + std::to_string(out.size()), std::move(row[0]),
                   body->second, *label, DomainTag::target});
  }
  return out;
}

struct FeverLoadStats {
  std::size_t records = 0;
  std::size_t dropped_nei = 0;
};

// Line-delimited JSON records with string fields claim, document, label
// (SUPPORTS / REFUTES / NOT ENOUGH INFO). NEI rows are discarded.
inline std::vector<LabeledPair> load_fever(const std::string& path,
                                           FeverLoadStats* stats = nullptr) {
  auto in = open_input(path);
  std::vector<LabeledPair> out;
  FeverLoadStats local;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = path + " line " + std::to_string(lineno);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IngestError("parse error at " + where + ": " + e.what());
    }
    ++local.records;
    auto field = [&](const char* name) -> std::string {
      auto it = rec.find(name);
      if (it == rec.end() || !it->is_string()) {
        throw IngestError(std::string("missing field '") + name + "' at " +
                          where);
      }
      return it->get<std::string>();
    };
    const std::string label = field("label");
    StanceLabel mapped;
    if (label == "SUPPORTS") {
      mapped = StanceLabel::agree;
    } else if (label == "REFUTES") {
      mapped = StanceLabel::disagree;
    } else if (label == "NOT ENOUGH INFO") {
      ++local.dropped_nei;
      continue;
    } else {
      throw IngestError("unknown label '" + label + "' at " + where);
    }
    LabeledPair p;
    p.claim = field("claim");
    p.document = field("document");
    if (p.claim.empty() || p.document.empty()) {
      throw IngestError("empty claim or document at " + where);
    }
    auto id = rec.find("id");
    if (id != rec.end() && id->is_string()) {
      p.id = id->get<std::string>();
    } else if (id != rec.end() && id->is_number_integer()) {
      p.id = "fever-" + std::to_string(id->get<long long>());
    } else {
      p.id = "fever-" + std::to_string(lineno);
    }
    p.label = mapped;
    p.domain = DomainTag::source;
    out.push_back(std::move(p));
  }
  if (stats) *stats = local;
  return out;
}

// ---------------------------------------------------------------- normalized

// One JSON object per line: id, domain, label, claim, document.
inline void write_dataset(std::ostream& os, std::span<const LabeledPair> data) {
  for (const auto& p : data) {
    nlohmann::json j = {{"id", p.id},
                        {"domain", to_string(p.domain)},
                        {"label", to_string(p.label)},
                        {"claim", p.claim},
                        {"document", p.document}};
    os << j.dump() << '\n';
  }
}

// Records without a label are rejected with "labels required".
inline std::vector<LabeledPair> read_dataset(const std::string& path) {
  auto in = open_input(path);
  std::vector<LabeledPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + " line " + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IngestError("parse error at " + where + ": " + e.what());
    }
    auto str = [&](const char* k) -> std::string {
      auto it = j.find(k);
      if (it == j.end() || !it->is_string()) {
        throw IngestError(std::string("missing field '") + k + "' at " + where);
      }
      return it->get<std::string>();
    };
    LabeledPair p;
    p.id = str("id");
    p.claim = str("claim");
    p.document = str("document");
    auto dom = parse_domain(str("domain"));
    if (!dom) throw IngestError("unknown domain at " + where);
    p.domain = *dom;
    auto lab = j.find("label");
    if (lab == j.end() || lab->is_null() ||
        (lab->is_string() && lab->get<std::string>().empty())) {
      throw IngestError("labels required: unlabeled record at " + where);
    }
    auto parsed = lab->is_string() ? parse_stance(lab->get<std::string>())
                                   : std::nullopt;
    if (!parsed) throw IngestError("unknown stance at " + where);
    p.label = *parsed;
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------- splitting

struct Split {
  std::vector<LabeledPair> train;
  std::vector<LabeledPair> validation;
};

inline std::size_t validation_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

// Seeded shuffle, then ceil(fraction * N) examples to validation. With both
// domains present each domain is split separately and the two validation
// pools are truncated to the smaller one, so validation is domain-balanced.
inline Split split_train_validation(std::span<const LabeledPair> examples,
                                    double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("validation fraction must be in (0, 1)");
  }
  if (examples.empty()) {
    throw std::invalid_argument("cannot split an empty example list");
  }
  std::array<std::vector<std::size_t>, 2> by_domain;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    by_domain[static_cast<int>(examples[i].domain)].push_back(i);
  }
  std::array<std::size_t, 2> take{};
  for (int d = 0; d < 2; ++d) {
    Rng rng(derive_seed(seed, 0x5EED0 + static_cast<std::uint64_t>(d)));
    rng.shuffle(by_domain[d]);
    take[d] = validation_count(by_domain[d].size(), fraction);
  }
  if (!by_domain[0].empty() && !by_domain[1].empty()) {
    take[0] = take[1] = std::min(take[0], take[1]);
  }
  Split out;
  for (int d = 0; d < 2; ++d) {
    for (std::size_t k = 0; k < by_domain[d].size(); ++k) {
      const LabeledPair& p = examples[by_domain[d][k]];
      (k < take[d] ? out.validation : out.train).push_back(p);
    }
  }
  return out;
}

// ---------------------------------------------------------------- sampling

struct PoolRef {
  DomainTag domain;
  std::size_t index;

  bool operator==(const PoolRef&) const = default;
};

// k = min(|source|, |target|) draws without replacement from each pool,
// concatenated and shuffled; a function of (seed, epoch) only. An empty
// source pool yields the shuffled target pool.
inline std::vector<PoolRef> epoch_sample_balanced_indices(
    std::size_t source_size, std::size_t target_size, std::uint64_t epoch,
    std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xE90C0000ULL + epoch));
  std::vector<PoolRef> out;
  if (source_size == 0) {
    for (std::size_t i = 0; i < target_size; ++i) {
      out.push_back({DomainTag::target, i});
    }
    rng.shuffle(out);
    return out;
  }
  const std::size_t k = std::min(source_size, target_size);
  auto draw = [&](std::size_t n, DomainTag tag) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(idx[i], idx[i + rng.below(n - i)]);
      out.push_back({tag, idx[i]});
    }
  };
  draw(source_size, DomainTag::source);
  draw(target_size, DomainTag::target);
  rng.shuffle(out);
  return out;
}

inline std::vector<LabeledPair> epoch_sample_balanced(
    std::span<const LabeledPair> source_pool,
    std::span<const LabeledPair> target_pool, std::uint64_t epoch,
    std::uint64_t seed) {
  std::vector<LabeledPair> out;
  for (const PoolRef& r : epoch_sample_balanced_indices(
           source_pool.size(), target_pool.size(), epoch, seed)) {
    out.push_back(r.domain == DomainTag::source ? source_pool[r.index]
                                                : target_pool[r.index]);
  }
  return out;
}

}  // namespace stance
