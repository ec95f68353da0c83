#pragma once

// Accuracy, per-class and macro F1, and the FNC weighted accuracy.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "stance/ingest.hpp"

namespace stance {

namespace detail {

template <typename T>
void check_scored(std::span<const T> gold, std::span<const T> pred) {
  if (gold.size() != pred.size()) {
    throw std::invalid_argument("metrics: gold/pred length mismatch");
  }
  if (gold.empty()) throw std::invalid_argument("metrics: empty input");
}

}  // namespace detail

// Rows are gold classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes)
      : k_(classes), counts_(classes * classes, 0) {}

  template <typename T>
  static ConfusionMatrix from(std::span<const T> gold, std::span<const T> pred,
                              std::span<const T> classes) {
    if (gold.size() != pred.size()) {
      throw std::invalid_argument("metrics: gold/pred length mismatch");
    }
    ConfusionMatrix m(classes.size());
    auto index = [&](const T& v) -> std::size_t {
      for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] == v) return i;
      }
      throw std::invalid_argument("metrics: label outside the class list");
    };
    for (std::size_t i = 0; i < gold.size(); ++i) {
      m.add(index(gold[i]), index(pred[i]));
    }
    return m;
  }

  void add(std::size_t gold, std::size_t pred) { ++counts_[gold * k_ + pred]; }
  std::size_t classes() const { return k_; }
  std::size_t at(std::size_t gold, std::size_t pred) const {
    return counts_[gold * k_ + pred];
  }
  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }

  // F1 per class with every 0/0 taken as 0.
  double f1(std::size_t c) const {
    std::size_t tp = at(c, c), fp = 0, fn = 0;
    for (std::size_t j = 0; j < k_; ++j) {
      if (j == c) continue;
      fp += at(j, c);
      fn += at(c, j);
    }
    const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }

 private:
  std::size_t k_;
  std::vector<std::size_t> counts_;
};

template <typename T>
double accuracy(std::span<const T> gold, std::span<const T> pred) {
  detail::check_scored(gold, pred);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hit += gold[i] == pred[i];
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

struct MacroF1 {
  double macro = 0.0;
  std::vector<double> per_class;
};

// Unweighted mean over the fixed class list; absent classes contribute 0.
template <typename T>
MacroF1 macro_f1(std::span<const T> gold, std::span<const T> pred,
                 std::span<const T> classes) {
  detail::check_scored(gold, pred);
  const auto cm = ConfusionMatrix::from(gold, pred, classes);
  MacroF1 out;
  double sum = 0.0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    out.per_class.push_back(cm.f1(c));
    sum += out.per_class.back();
  }
  out.macro = classes.empty() ? 0.0 : sum / static_cast<double>(classes.size());
  return out;
}

inline MacroF1 macro_f1(std::span<const StanceLabel> gold,
                        std::span<const StanceLabel> pred) {
  return macro_f1<StanceLabel>(gold, pred, kAllStances);
}

// 0.25 for a correct related/unrelated call, 0.75 more for the exact stance
// of a related example; normalized by the best attainable score on gold.
inline double fnc_weighted_accuracy(std::span<const StanceLabel> gold,
                                    std::span<const StanceLabel> pred) {
  detail::check_scored(gold, pred);
  double score = 0.0, best = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool related = is_related(gold[i]);
    best += related ? 1.0 : 0.25;
    if (related == is_related(pred[i])) {
      score += 0.25;
      if (related && gold[i] == pred[i]) score += 0.75;
    }
  }
  return score / best;
}

struct EvaluationRow {
  double weighted_accuracy = 0.0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;  // agree, disagree, discuss, unrelated
};

inline EvaluationRow evaluate(std::span<const StanceLabel> gold,
                              std::span<const StanceLabel> pred) {
  EvaluationRow row;
  row.weighted_accuracy = fnc_weighted_accuracy(gold, pred);
  row.accuracy = accuracy(gold, pred);
  auto f = macro_f1(gold, pred);
  row.macro_f1 = f.macro;
  row.per_class_f1 = std::move(f.per_class);
  return row;
}

}  // namespace stance
