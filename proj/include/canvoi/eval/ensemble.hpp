#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "canvoi/core/error.hpp"
#include "canvoi/nn/tensor.hpp"

namespace canvoi::eval {

struct ZStats {
  double mean = 0.0;
  double sd = 1.0;
};

// Mean and population standard deviation of a score pool.
inline ZStats zstats(std::span<const double> pool) {
  if (pool.empty()) throw DegenerateScoreError("empty score pool");
  bool distinct = false;
  for (double v : pool) {
    if (!std::isfinite(v)) throw DegenerateScoreError("non-finite score in pool");
    distinct = distinct || v != pool[0];
  }
  if (!distinct) throw DegenerateScoreError("constant score vector cannot be standardised");
  double m = 0.0;
  for (double v : pool) m += v;
  m /= static_cast<double>(pool.size());
  double ss = 0.0;
  for (double v : pool) ss += (v - m) * (v - m);
  return {m, std::sqrt(ss / static_cast<double>(pool.size()))};
}

// Standardises `scores` with statistics of `pool` (the scores themselves by default).
inline std::vector<double> zscore(std::span<const double> scores, std::span<const double> pool) {
  const ZStats z = zstats(pool);
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - z.mean) / z.sd;
  return out;
}

inline std::vector<double> zscore(std::span<const double> scores) { return zscore(scores, scores); }

// Elementwise mean of the per-model standardised vectors. If `pools` is given,
// model m is standardised with statistics of pools[m] instead of its own scores.
inline std::vector<double> zscore_ensemble(const std::vector<std::vector<double>>& models,
                                           const std::vector<std::vector<double>>* pools = nullptr) {
  if (models.empty()) throw ConfigError("ensemble needs at least one model");
  if (pools && pools->size() != models.size()) throw DimensionError("one reference pool per model");
  const std::size_t n = models.front().size();
  std::vector<double> out(n, 0.0);
  for (std::size_t m = 0; m < models.size(); ++m) {
    if (models[m].size() != n) throw DimensionError("ensemble members score different slide counts");
    const auto z = pools ? zscore(models[m], (*pools)[m]) : zscore(models[m]);
    for (std::size_t i = 0; i < n; ++i) out[i] += z[i];
  }
  for (double& v : out) v /= static_cast<double>(models.size());
  return out;
}

// Column-wise version for n x C probability matrices.
inline nn::Tensor2D<double> zscore_ensemble(const std::vector<nn::Tensor2D<double>>& models) {
  if (models.empty()) throw ConfigError("ensemble needs at least one model");
  const std::size_t n = models.front().rows(), k = models.front().cols();
  nn::Tensor2D<double> out(n, k);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::vector<double>> cols;
    for (const auto& m : models) {
      if (m.rows() != n || m.cols() != k) throw DimensionError("ensemble members differ in shape");
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = m(i, c);
      cols.push_back(std::move(col));
    }
    const auto z = zscore_ensemble(cols);
    for (std::size_t i = 0; i < n; ++i) out(i, c) = z[i];
  }
  return out;
}

}  // namespace canvoi::eval
