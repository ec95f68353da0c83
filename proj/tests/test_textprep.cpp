#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracle.hpp"
#include "stance/tensor.hpp"
#include "stance/textprep.hpp"

using namespace stance;

TEST(Tokenize, LowercasesAndSplitsOnPunctuation) {
  EXPECT_EQ(tokenize("The cat sat."), (Tokens{"the", "cat", "sat"}));
  EXPECT_EQ(tokenize(""), Tokens{});
  EXPECT_EQ(tokenize("COVID-19 spreads"), (Tokens{"covid", "19", "spreads"}));
}

TEST(Tokenize, NonAsciiBytesAreSeparators) {
  EXPECT_EQ(tokenize("caf\xc3\xa9 ok"), (Tokens{"caf", "ok"}));
  EXPECT_EQ(tokenize("  --  "), Tokens{});
}

TEST(Tokenize, IdempotentOnJoinedOutput) {
  Rng rng(11);
  const std::string alphabet = "aB3 ,.-_xYz!\t\n9Q";
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    const std::size_t n = rng.below(40);
    for (std::size_t i = 0; i < n; ++i) s += alphabet[rng.below(alphabet.size())];
    const Tokens once = tokenize(s);
    std::string joined;
    for (const auto& t : once) joined += (joined.empty() ? "" : " ") + t;
    EXPECT_EQ(tokenize(joined), once) << s;
  }
}

TEST(BuildVocab, KeepsMostFrequentWithLexicographicTies) {
  std::vector<Tokens> corpus{{"a", "b"}, {"a", "c"}};
  const Vocabulary v = build_vocab(corpus, 2);
  EXPECT_EQ(v.terms(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(v.doc_freq(0), 2u);
  EXPECT_EQ(v.doc_freq(1), 1u);
  EXPECT_EQ(v.index_of("c"), -1);
  EXPECT_EQ(v.corpus_size(), 2u);
}

TEST(BuildVocab, SingletonAndRepeatedTerms) {
  std::vector<Tokens> one{{"x"}};
  const Vocabulary v = build_vocab(one, 10);
  EXPECT_EQ(v.size(), 1u);
  EXPECT_EQ(v.corpus_size(), 1u);
  std::vector<Tokens> twice{{"a"}, {"a"}};
  const Vocabulary w = build_vocab(twice, 1);
  EXPECT_EQ(w.terms(), std::vector<std::string>{"a"});
  EXPECT_EQ(w.doc_freq(0), 2u);
}

TEST(BuildVocab, CountsDocumentsNotOccurrences) {
  std::vector<Tokens> corpus{{"a", "a", "a"}, {"b"}, {"b", "c"}};
  const Vocabulary v = build_vocab(corpus, 5);
  EXPECT_EQ(v.terms(), (std::vector<std::string>{"b", "a", "c"}));
  EXPECT_EQ(v.doc_freq(1), 1u);
}

TEST(BuildVocab, EmptyCorpusIsAnError) {
  std::vector<Tokens> none;
  try {
    build_vocab(none, 3);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "empty corpus");
  }
}

TEST(BuildVocab, InvariantsOnRandomCorpora) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tokens> corpus(1 + rng.below(8));
    for (auto& d : corpus) {
      for (std::size_t i = rng.below(10); i > 0; --i) {
        d.push_back(std::string(1, static_cast<char>('a' + rng.below(12))));
      }
    }
    const std::size_t cap = 1 + rng.below(8);
    const Vocabulary v = build_vocab(corpus, cap);
    EXPECT_LE(v.size(), cap);
    for (std::size_t i = 0; i < v.size(); ++i) {
      EXPECT_EQ(v.index_of(v.terms()[i]), static_cast<long>(i));
      EXPECT_GE(v.doc_freq(i), 1u);
      EXPECT_LE(v.doc_freq(i), v.corpus_size());
    }
  }
}

TEST(Vocabulary, TextRoundTrip) {
  std::vector<Tokens> corpus{{"a", "b"}, {"a", "c"}, {"d"}};
  const Vocabulary v = build_vocab(corpus, 10);
  std::stringstream ss;
  v.save(ss);
  EXPECT_EQ(ss.str().substr(0, 14), "#corpus_size=3");
  const Vocabulary w = Vocabulary::load(ss);
  EXPECT_EQ(w.terms(), v.terms());
  EXPECT_EQ(w.doc_freqs(), v.doc_freqs());
  EXPECT_EQ(w.corpus_size(), 3u);
}

TEST(TfVector, RawCountsAndOovIgnored) {
  const Vocabulary v =
      Vocabulary::from_counts({"a", "b", "c"}, {1, 1, 1}, 1);
  EXPECT_EQ(tf_vector(Tokens{"a", "a", "b"}, v), (std::vector<double>{2, 1, 0}));
  EXPECT_EQ(tf_vector(Tokens{}, v), (std::vector<double>{0, 0, 0}));
  const Vocabulary ab = Vocabulary::from_counts({"a", "b"}, {1, 1}, 1);
  EXPECT_EQ(tf_vector(Tokens{"z"}, ab), (std::vector<double>{0, 0}));
}

TEST(TfVector, SumEqualsInVocabularyTokenCount) {
  const Vocabulary v = Vocabulary::from_counts({"a", "b"}, {1, 1}, 1);
  const Tokens toks{"a", "x", "b", "b", "y", "a", "a"};
  double sum = 0;
  for (double x : tf_vector(toks, v)) {
    EXPECT_EQ(x, std::floor(x));
    EXPECT_GE(x, 0.0);
    sum += x;
  }
  EXPECT_EQ(sum, 5.0);
}

TEST(TfidfVector, SmoothedIdf) {
  std::vector<Tokens> corpus{{"a"}, {"a", "b"}};
  const Vocabulary v = build_vocab(corpus, 10);
  const auto x = tfidf_vector(Tokens{"b"}, v);
  EXPECT_NEAR(x[static_cast<std::size_t>(v.index_of("b"))], oracle::kIdfOneOfTwo,
              1e-12);
  EXPECT_EQ(x[static_cast<std::size_t>(v.index_of("a"))], 0.0);
  EXPECT_EQ(tfidf_vector(Tokens{}, v), (std::vector<double>{0, 0}));
  // "a" is in every document: idf = 1 so tf-idf equals tf.
  EXPECT_EQ(tfidf_vector(Tokens{"a", "a"}, v)[0], 2.0);
}

TEST(TfidfVector, EqualsTfTimesIdfElementwise) {
  std::vector<Tokens> corpus{{"a", "b"}, {"b", "c"}, {"c"}, {"a", "d"}};
  const Vocabulary v = build_vocab(corpus, 10);
  const Tokens toks{"a", "c", "c", "d", "q"};
  const auto tf = tf_vector(toks, v), ti = tfidf_vector(toks, v);
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_GE(v.idf(i), 1.0);
    EXPECT_DOUBLE_EQ(ti[i], tf[i] * v.idf(i));
  }
}

TEST(Cosine, KnownValues) {
  const std::vector<double> x{1, 0}, y{0, 1}, d{1, 1}, z{0, 0};
  EXPECT_EQ(cosine_similarity(x, x), 1.0);
  EXPECT_EQ(cosine_similarity(x, y), 0.0);
  EXPECT_NEAR(cosine_similarity(d, x), oracle::kCosDiag, 1e-9);
  EXPECT_EQ(cosine_similarity(z, x), 0.0);
  const std::vector<double> three{1, 2, 3};
  EXPECT_THROW(cosine_similarity(x, three), std::invalid_argument);
}

TEST(Cosine, SelfSimilarityAndScaleInvariance) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> u(1 + rng.below(9)), v(u.size());
    for (auto& x : u) x = rng.uniform(-3, 3);
    for (auto& x : v) x = rng.uniform(-3, 3);
    const double a = rng.uniform(0.01, 50);
    std::vector<double> au = u;
    for (auto& x : au) x *= a;
    EXPECT_NEAR(cosine_similarity(u, u), 1.0, 1e-12);
    EXPECT_NEAR(cosine_similarity(au, v), cosine_similarity(u, v), 1e-12);
    const double c = cosine_similarity(u, v);
    EXPECT_LE(c, 1.0);
    EXPECT_GE(c, -1.0);
  }
}
