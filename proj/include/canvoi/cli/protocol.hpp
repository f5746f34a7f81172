#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "canvoi/cli/configs.hpp"
#include "canvoi/eval/ensemble.hpp"
#include "canvoi/eval/reduce.hpp"
#include "canvoi/eval/report.hpp"
#include "canvoi/mil/train.hpp"
#include "canvoi/wsi/embedding_store.hpp"

namespace canvoi::cli {

// Labelled bags of a store, in store order.
struct Cohort {
  std::map<std::string, wsi::EmbeddingBag> bags;
  std::vector<eval::SlideRef> refs;
  int n_classes = 2;
  std::size_t unlabelled = 0;

  const wsi::EmbeddingBag& bag(const std::string& id) const {
    const auto it = bags.find(id);
    if (it == bags.end()) throw BookkeepingError("slide " + id + " is not a labelled bag of the store");
    return it->second;
  }
};

inline Cohort load_cohort(const std::filesystem::path& store, int n_classes) {
  wsi::EmbeddingStoreReader reader(store);
  Cohort c;
  int max_label = -1;
  for (auto& bag : reader.read_all()) {
    if (!bag.label) {
      ++c.unlabelled;
      continue;
    }
    if (*bag.label < 0) throw DataError("slide " + bag.slide_id + " has a negative label");
    if (bag.size() == 0) throw DataError("slide " + bag.slide_id + " has an empty bag");
    max_label = std::max(max_label, *bag.label);
    c.refs.push_back({bag.slide_id, bag.group_id, *bag.label});
    c.bags.emplace(bag.slide_id, std::move(bag));
  }
  if (c.refs.empty()) throw DataError("store " + store.string() + " holds no labelled bags");
  c.n_classes = n_classes > 0 ? n_classes : std::max(2, max_label + 1);
  if (max_label >= c.n_classes)
    throw DataError("label " + std::to_string(max_label) + " outside " + std::to_string(c.n_classes) + " classes");
  return c;
}

inline std::uint64_t fold_seed(std::uint64_t seed, const std::string& group, std::size_t fold) {
  return derive_seed(seed, "mil:" + group + ":" + std::to_string(fold));
}

inline std::string model_file_name(const std::string& group, std::size_t fold) {
  return fmt::format("{}_fold{}.ckpt", group, fold);
}

template <class T>
mil::TrainResult<T> train_on(const Cohort& c, const std::vector<std::string>& ids, mil::TrainSpec spec,
                             std::uint64_t seed) {
  std::vector<nn::Tensor2D<T>> bags;
  std::vector<int> labels;
  for (const auto& id : ids) {
    const auto& b = c.bag(id);
    bags.push_back(mil::bag_matrix<T>(b));
    labels.push_back(*b.label);
  }
  spec.seed = seed;
  return mil::mil_train(bags, labels, c.n_classes, spec);
}

// n x C class probabilities, in double whatever the model precision.
template <class T>
nn::Tensor2D<double> predict_rows(const mil::AbmilModel<T>& m, const Cohort& c, const std::vector<std::string>& ids) {
  nn::Tensor2D<double> out(ids.size(), static_cast<std::size_t>(c.n_classes));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto p = m.predict(mil::bag_matrix<T>(c.bag(ids[i])));
    if (p.size() != out.cols()) throw DimensionError("model class count differs from cohort");
    for (std::size_t k = 0; k < p.size(); ++k) out(i, k) = static_cast<double>(p[k]);
  }
  return out;
}

// Per-class z-score ensemble of the fold models of one iteration. With the
// validation pool each model is standardised on its own validation scores.
template <class T>
std::vector<eval::SlideScore> ensemble_iteration(const Cohort& c, const eval::SplitIteration& it,
                                                 const std::vector<mil::AbmilModel<T>>& models, ZPool pool,
                                                 const std::string& task, std::vector<eval::ScoreRow>* rows) {
  if (models.size() != it.folds.size()) throw BookkeepingError("one model per fold expected");
  if (it.test.empty()) return {};
  std::vector<nn::Tensor2D<double>> test;
  for (const auto& m : models) test.push_back(predict_rows(m, c, it.test));
  const std::size_t n = it.test.size(), k = static_cast<std::size_t>(c.n_classes);
  nn::Tensor2D<double> ens(n, k);
  if (pool == ZPool::test) {
    ens = eval::zscore_ensemble(test);
  } else {
    std::vector<nn::Tensor2D<double>> val;
    for (std::size_t f = 0; f < models.size(); ++f) val.push_back(predict_rows(models[f], c, it.folds[f].validation));
    for (std::size_t col = 0; col < k; ++col) {
      std::vector<std::vector<double>> scores, pools;
      for (std::size_t f = 0; f < models.size(); ++f) {
        std::vector<double> s(n), p(val[f].rows());
        for (std::size_t i = 0; i < n; ++i) s[i] = test[f](i, col);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = val[f](i, col);
        scores.push_back(std::move(s));
        pools.push_back(std::move(p));
      }
      const auto z = eval::zscore_ensemble(scores, &pools);
      for (std::size_t i = 0; i < n; ++i) ens(i, col) = z[i];
    }
  }

  // binary tasks report the class-1 column, others one task row per class
  auto emit = [&](const std::string& model_id, const nn::Tensor2D<double>& m) {
    if (!rows) return;
    for (std::size_t i = 0; i < n; ++i) {
      const int label = *c.bag(it.test[i]).label;
      if (k == 2) {
        rows->push_back({task, it.held_out_group, model_id, it.test[i], m(i, 1), label});
      } else {
        for (std::size_t col = 0; col < k; ++col)
          rows->push_back({fmt::format("{}/class{}", task, col), it.held_out_group, model_id, it.test[i], m(i, col),
                           label});
      }
    }
  };
  for (std::size_t f = 0; f < models.size(); ++f) emit(fmt::format("fold{}", f), test[f]);
  emit("ensemble", ens);

  std::vector<eval::SlideScore> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = c.bag(it.test[i]);
    eval::SlideScore s{b.slide_id, b.group_id, *b.label, std::vector<double>(k)};
    for (std::size_t col = 0; col < k; ++col) s.scores[col] = ens(i, col);
    out.push_back(std::move(s));
  }
  return out;
}

struct ProtocolResult {
  eval::TaskMetric metric;
  double mean_train_size = 0.0;
};

// Trains every fold model of the plan on the (optionally reduced) training
// ids and evaluates the merged cohort.
template <class T>
ProtocolResult run_protocol(const Cohort& c, const eval::SplitPlan& plan, const mil::TrainSpec& spec,
                            std::uint64_t seed, double fraction, ZPool pool, const std::string& task) {
  std::vector<eval::SlideScore> scored;
  std::size_t train_total = 0, n_models = 0;
  for (const auto& it : plan.iterations) {
    std::vector<mil::AbmilModel<T>> models;
    for (std::size_t f = 0; f < it.folds.size(); ++f) {
      std::vector<eval::SlideRef> train_refs;
      for (const auto& id : it.folds[f].train) {
        const auto& b = c.bag(id);
        train_refs.push_back({id, b.group_id, *b.label});
      }
      const auto ids = eval::reduce_labels(train_refs, fraction, derive_seed(seed, fmt::format("sweep:{}:{}", it.held_out_group, f)));
      train_total += ids.size();
      ++n_models;
      models.push_back(train_on<T>(c, ids, spec, fold_seed(seed, it.held_out_group, f)).model);
    }
    auto s = ensemble_iteration(c, it, models, pool, task, nullptr);
    scored.insert(scored.end(), s.begin(), s.end());
  }
  ProtocolResult r;
  r.metric = eval::merged_cohort_eval(task, scored, c.refs);
  r.mean_train_size = n_models ? static_cast<double>(train_total) / static_cast<double>(n_models) : 0.0;
  return r;
}

}  // namespace canvoi::cli
