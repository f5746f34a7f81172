#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "canvoi/eval/auc.hpp"
#include "canvoi/eval/splits.hpp"

namespace canvoi::eval {

// One slide's final (ensemble) score row.
struct SlideScore {
  std::string slide_id;
  std::string group;
  int label = 0;
  std::vector<double> scores;  // one per class
};

struct TaskMetric {
  std::string task;
  std::string metric;  // "auc" or "macro_auc"
  double value = 0.0;
  std::size_t n_slides = 0;
  std::map<std::string, double> per_group;  // AUC inside each held-out group, where defined
};

struct ReductionRow {
  double fraction = 1.0;
  double train_size = 0.0;  // mean training set per fold model
  double averaged_auc = 0.0;
};

struct MetricReport {
  std::vector<TaskMetric> tasks;
  double averaged_auc = 0.0;
  std::vector<ReductionRow> reductions;

  void finalize() {
    double s = 0.0;
    for (const auto& t : tasks) s += t.value;
    averaged_auc = tasks.empty() ? 0.0 : s / static_cast<double>(tasks.size());
    validate();
  }

  void validate() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    for (const auto& t : tasks) {
      if (!in01(t.value)) throw DataError("task " + t.task + " AUC outside [0, 1]");
      for (const auto& [g, v] : t.per_group)
        if (!in01(v)) throw DataError("group AUC outside [0, 1]");
    }
    if (!in01(averaged_auc)) throw DataError("averaged AUC outside [0, 1]");
    for (const auto& r : reductions)
      if (!in01(r.averaged_auc)) throw DataError("reduction AUC outside [0, 1]");
  }
};

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : r.tasks) {
    nlohmann::json pg = nlohmann::json::object();
    for (const auto& [g, v] : t.per_group) pg[g] = v;
    tasks.push_back({{"task", t.task}, {"metric", t.metric}, {"value", t.value}, {"n_slides", t.n_slides},
                     {"per_group", pg}});
  }
  nlohmann::json red = nlohmann::json::array();
  for (const auto& row : r.reductions)
    red.push_back({{"fraction", row.fraction}, {"train_size", row.train_size}, {"averaged_auc", row.averaged_auc}});
  return {{"tasks", tasks}, {"averaged_auc", r.averaged_auc}, {"reductions", red}};
}

// Single AUC over the concatenated test scores of every iteration. Each cohort
// slide must be scored exactly once.
inline TaskMetric merged_cohort_eval(const std::string& task, const std::vector<SlideScore>& scored,
                                     const std::vector<SlideRef>& cohort) {
  std::map<std::string, const SlideScore*> by_id;
  for (const auto& s : scored)
    if (!by_id.emplace(s.slide_id, &s).second) throw BookkeepingError("duplicate score for slide " + s.slide_id);
  std::set<std::string> cohort_ids;
  for (const auto& c : cohort) {
    cohort_ids.insert(c.id);
    if (!by_id.count(c.id)) throw BookkeepingError("missing scores for slide " + c.id);
  }
  for (const auto& s : scored)
    if (!cohort_ids.count(s.slide_id)) throw BookkeepingError("score for unknown slide " + s.slide_id);
  if (scored.empty()) throw BookkeepingError("missing scores: nothing was scored");

  const std::size_t k = scored.front().scores.size();
  if (k < 2) throw DimensionError("scores need one column per class");
  auto build = [&](const std::vector<const SlideScore*>& rows, nn::Tensor2D<double>& m, std::vector<int>& labels) {
    m = nn::Tensor2D<double>(rows.size(), k);
    labels.clear();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i]->scores.size() != k) throw DimensionError("score rows differ in class count");
      for (std::size_t c = 0; c < k; ++c) m(i, c) = rows[i]->scores[c];
      labels.push_back(rows[i]->label);
    }
  };
  std::vector<const SlideScore*> rows;
  for (const auto& c : cohort) rows.push_back(by_id.at(c.id));
  nn::Tensor2D<double> m;
  std::vector<int> labels;
  build(rows, m, labels);

  TaskMetric t;
  t.task = task;
  t.metric = k == 2 ? "auc" : "macro_auc";
  t.value = task_auc(m, labels);
  t.n_slides = rows.size();
  std::map<std::string, std::vector<const SlideScore*>> groups;
  for (const auto* r : rows) groups[r->group].push_back(r);
  for (const auto& [g, gr] : groups) {
    build(gr, m, labels);
    try {
      t.per_group[g] = task_auc(m, labels);
    } catch (const UndefinedMetricError&) {
      // a group holding one class has no AUC of its own
    }
  }
  return t;
}

// Results rows: task, iteration, model_id, slide_id, score, label.
struct ScoreRow {
  std::string task;
  std::string iteration;
  std::string model_id;
  std::string slide_id;
  double score = 0.0;
  int label = 0;
};

inline std::string score_rows_csv(const std::vector<ScoreRow>& rows) {
  std::string s = "task,iteration,model_id,slide_id,score,label\n";
  for (const auto& r : rows)
    s += fmt::format("{},{},{},{},{:.9e},{}\n", r.task, r.iteration, r.model_id, r.slide_id, r.score, r.label);
  return s;
}

}  // namespace canvoi::eval
