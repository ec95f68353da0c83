#pragma once

// Tokenization, vocabularies and bag-of-words vectors.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace stance {

using Tokens = std::vector<std::string>;

// Lowercases ASCII letters and splits on every maximal run of characters that
// are not ASCII letters or digits.
inline Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 128 && std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

class Vocabulary {
 public:
  Vocabulary() = default;

  std::size_t size() const { return terms_.size(); }
  std::size_t corpus_size() const { return corpus_size_; }
  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<std::size_t>& doc_freqs() const { return doc_freq_; }

  // -1 when absent.
  long index_of(std::string_view term) const {
    auto it = index_.find(std::string(term));
    return it == index_.end() ? -1 : static_cast<long>(it->second);
  }
  std::size_t doc_freq(std::size_t i) const { return doc_freq_.at(i); }

  // Smoothed inverse document frequency, ln((1+N)/(1+df)) + 1.
  double idf(std::size_t i) const {
    return std::log((1.0 + static_cast<double>(corpus_size_)) /
                    (1.0 + static_cast<double>(doc_freq_.at(i)))) +
           1.0;
  }

  static Vocabulary from_counts(std::vector<std::string> terms,
                                std::vector<std::size_t> doc_freq,
                                std::size_t corpus_size) {
    if (terms.size() != doc_freq.size()) {
      throw std::invalid_argument("vocabulary: terms/doc_freq size mismatch");
    }
    Vocabulary v;
    v.corpus_size_ = corpus_size;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (doc_freq[i] < 1 || doc_freq[i] > corpus_size) {
        throw std::invalid_argument("vocabulary: doc_freq out of range for " +
                                    terms[i]);
      }
      if (!v.index_.emplace(terms[i], i).second) {
        throw std::invalid_argument("vocabulary: duplicate term " + terms[i]);
      }
    }
    v.terms_ = std::move(terms);
    v.doc_freq_ = std::move(doc_freq);
    return v;
  }

  // `term<TAB>doc_freq` per line in index order, after a `#corpus_size=N`
  // header line.
  void save(std::ostream& os) const {
    os << "#corpus_size=" << corpus_size_ << '\n';
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      os << terms_[i] << '\t' << doc_freq_[i] << '\n';
    }
  }

  static Vocabulary load(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("#corpus_size=", 0) != 0) {
      throw std::runtime_error("vocabulary: missing #corpus_size header");
    }
    const std::size_t n = std::stoull(line.substr(13));
    std::vector<std::string> terms;
    std::vector<std::size_t> dfs;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw std::runtime_error("vocabulary: malformed line " +
                                 std::to_string(lineno));
      }
      terms.push_back(line.substr(0, tab));
      dfs.push_back(std::stoull(line.substr(tab + 1)));
    }
    return from_counts(std::move(terms), std::move(dfs), n);
  }

 private:
  std::vector<std::string> terms_;
  std::vector<std::size_t> doc_freq_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t corpus_size_ = 0;
};

// Keeps the max_terms most document-frequent terms, ties in lexicographic
// order. Index order follows that ranking.
inline Vocabulary build_vocab(std::span<const Tokens> corpus,
                              std::size_t max_terms) {
  if (corpus.empty()) throw std::invalid_argument("empty corpus");
  if (max_terms == 0) throw std::invalid_argument("max_terms must be positive");
  std::unordered_map<std::string, std::size_t> df;
  std::unordered_set<std::string_view> seen;
  for (const Tokens& doc : corpus) {
    seen.clear();
    for (const std::string& t : doc) {
      if (seen.insert(t).second) ++df[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(df.begin(), df.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > max_terms) ranked.resize(max_terms);
  std::vector<std::string> terms;
  std::vector<std::size_t> freqs;
  for (auto& [t, f] : ranked) {
    terms.push_back(std::move(t));
    freqs.push_back(f);
  }
  return Vocabulary::from_counts(std::move(terms), std::move(freqs),
                                 corpus.size());
}

inline std::vector<double> tf_vector(std::span<const std::string> tokens,
                                     const Vocabulary& vocab) {
  std::vector<double> v(vocab.size(), 0.0);
  for (const auto& t : tokens) {
    const long i = vocab.index_of(t);
    if (i >= 0) v[static_cast<std::size_t>(i)] += 1.0;
  }
  return v;
}

inline std::vector<double> tfidf_vector(std::span<const std::string> tokens,
                                        const Vocabulary& vocab) {
  std::vector<double> v = tf_vector(tokens, vocab);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0) v[i] *= vocab.idf(i);
  }
  return v;
}

// 0 when either vector has zero norm.
inline double cosine_similarity(std::span<const double> u,
                                std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("dimension mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  const double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace stance
