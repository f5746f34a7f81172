#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "canvoi/core/error.hpp"
#include "canvoi/nn/tensor.hpp"

namespace canvoi::eval {

// Mann-Whitney AUC with midranks: P(score of a positive > score of a negative),
// ties counting one half. Positive class is label 1.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("score and label counts differ");
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("binary AUC needs labels in {0, 1}");
    if (std::isnan(scores[i])) throw DataError("NaN score at index " + std::to_string(i));
    n_pos += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t n = labels.size(), n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("AUC undefined: only one class present");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // ranks are 1-based; a tie block [i, j) shares rank (i + 1 + j) / 2
  double rank_sum_pos = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (labels[idx[t]] == 1) rank_sum_pos += mid;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn_ = static_cast<double>(n_neg);
  const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * nn_);
}

inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  return auc(std::span<const double>(scores), std::span<const int>(labels));
}

// One-vs-rest AUC of class `c` from column c of an n x C score matrix.
inline double one_vs_rest_auc(const nn::Tensor2D<double>& scores, std::span<const int> labels, int c) {
  std::vector<double> col(scores.rows());
  std::vector<int> bin(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    col[i] = scores(i, static_cast<std::size_t>(c));
    bin[i] = labels[i] == c ? 1 : 0;
  }
  return auc(col, bin);
}

// Unweighted mean of one-vs-rest AUCs over the C columns.
inline double macro_auc(const nn::Tensor2D<double>& scores, std::span<const int> labels) {
  if (scores.rows() != labels.size()) throw DimensionError("score rows and label count differ");
  const int k = static_cast<int>(scores.cols());
  if (k < 2) throw DimensionError("macro AUC needs at least two score columns");
  std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
  for (int l : labels) {
    if (l < 0 || l >= k) throw DataError("label " + std::to_string(l) + " outside [0, " + std::to_string(k) + ")");
    ++count[static_cast<std::size_t>(l)];
  }
  for (int c = 0; c < k; ++c)
    if (count[static_cast<std::size_t>(c)] == 0 || count[static_cast<std::size_t>(c)] == labels.size())
      throw UndefinedMetricError("macro AUC undefined: class " + std::to_string(c) + " absent");
  double s = 0.0;
  for (int c = 0; c < k; ++c) s += one_vs_rest_auc(scores, labels, c);
  return s / k;
}

inline double macro_auc(const nn::Tensor2D<double>& scores, const std::vector<int>& labels) {
  return macro_auc(scores, std::span<const int>(labels));
}

// Binary tasks score the class-1 column; more classes use macro AUC.
inline double task_auc(const nn::Tensor2D<double>& scores, std::span<const int> labels) {
  if (scores.cols() == 2) {
    std::vector<double> col(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) col[i] = scores(i, 1);
    return auc(std::span<const double>(col), labels);
  }
  return macro_auc(scores, labels);
}

}  // namespace canvoi::eval
