#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "labelaudit/corpus.hpp"

namespace labelaudit {

// Rows = true labels, columns = predicted labels.
using ConfusionMatrix = std::array<std::array<std::int64_t, kNumLabels>, kNumLabels>;

inline ConfusionMatrix confusion_matrix(const std::vector<Label>& truth,
                                        const std::vector<Label>& predicted) {
  if (truth.size() != predicted.size())
    throw std::runtime_error("confusion_matrix: label list lengths differ");
  if (truth.empty()) throw std::runtime_error("confusion_matrix: empty label lists");
  ConfusionMatrix m{};
  for (std::size_t i = 0; i < truth.size(); ++i)
    ++m[static_cast<std::size_t>(label_index(truth[i]))]
       [static_cast<std::size_t>(label_index(predicted[i]))];
  return m;
}

inline std::int64_t confusion_total(const ConfusionMatrix& m) {
  std::int64_t total = 0;
  for (const auto& row : m)
    for (const std::int64_t v : row) total += v;
  return total;
}

inline double accuracy(const ConfusionMatrix& m) {
  const std::int64_t total = confusion_total(m);
  if (total == 0) throw std::runtime_error("accuracy: empty confusion matrix");
  std::int64_t correct = 0;
  for (int i = 0; i < kNumLabels; ++i)
    correct += m[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
  return static_cast<double>(correct) / static_cast<double>(total);
}

struct EvalReport {
  ConfusionMatrix confusion{};
  double accuracy = 0.0;
  std::array<double, kNumLabels> per_class_f1{};
  std::array<double, kNumLabels> weights{};  // w_i = n_i / sum_j n_j over true counts
  double weighted_f1 = 0.0;
};

// Per class: precision = TP/(TP+FP), recall = TP/(TP+FN), both 0 on a zero
// denominator; F1 = 2PR/(P+R), 0 when P+R = 0. Weighted F1 = sum_i w_i F1_i.
inline EvalReport weighted_f1(const ConfusionMatrix& m) {
  const std::int64_t total = confusion_total(m);
  if (total == 0) throw std::runtime_error("weighted_f1: empty confusion matrix");

  EvalReport report;
  report.confusion = m;
  report.accuracy = accuracy(m);
  for (int i = 0; i < kNumLabels; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const std::int64_t tp = m[ui][ui];
    std::int64_t fp = 0, fn = 0;
    for (int j = 0; j < kNumLabels; ++j) {
      if (j == i) continue;
      fp += m[static_cast<std::size_t>(j)][ui];
      fn += m[ui][static_cast<std::size_t>(j)];
    }
    const double precision = (tp + fp > 0) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = (tp + fn > 0) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    report.per_class_f1[ui] =
        (precision + recall > 0.0) ? 2.0 * precision * recall / (precision + recall) : 0.0;
    report.weights[ui] = static_cast<double>(tp + fn) / static_cast<double>(total);
    report.weighted_f1 += report.weights[ui] * report.per_class_f1[ui];
  }
  return report;
}

}  // namespace labelaudit
