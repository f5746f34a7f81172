#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "canvoi/core/error.hpp"
#include "canvoi/core/rng.hpp"

namespace canvoi::eval {

// Folds of indices into `labels`. Each class is shuffled and dealt round-robin,
// continuing from the fold where the previous class stopped, so per-class and
// total fold sizes both differ by at most one.
inline std::vector<std::vector<std::size_t>> stratified_kfold(const std::vector<int>& labels, int k,
                                                              std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [c, idx] : by_class)
    if (idx.size() < static_cast<std::size_t>(k))
      throw ConfigError("class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                        " samples, fewer than k = " + std::to_string(k));
  Rng rng(seed, "stratified_kfold");
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  std::size_t next = 0;
  for (auto& [c, idx] : by_class) {
    rng.shuffle(idx);
    for (std::size_t i : idx) {
      folds[next].push_back(i);
      next = (next + 1) % folds.size();
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

struct SlideRef {
  std::string id;
  std::string group;
  int label = 0;
};

struct TrainValSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
};

struct SplitIteration {
  std::string held_out_group;
  std::vector<std::string> test;
  std::vector<TrainValSplit> folds;
};

struct SplitPlan {
  std::vector<SplitIteration> iterations;
};

// One iteration per group: that group is the test set, the remaining slides
// are split by stratified k-fold into k train/validation pairs.
inline SplitPlan logo_plan(const std::vector<SlideRef>& slides, int k = 5, std::uint64_t seed = 0) {
  std::set<std::string> seen;
  std::vector<std::string> groups;
  for (const auto& s : slides) {
    if (!seen.insert(s.id).second) throw BookkeepingError("duplicate slide id " + s.id);
    if (std::find(groups.begin(), groups.end(), s.group) == groups.end()) groups.push_back(s.group);
  }
  std::sort(groups.begin(), groups.end());
  if (groups.size() < 2) throw ConfigError("leave-one-group-out needs at least two groups");

  SplitPlan plan;
  for (const auto& g : groups) {
    SplitIteration it;
    it.held_out_group = g;
    std::vector<const SlideRef*> rest;
    for (const auto& s : slides) {
      if (s.group == g)
        it.test.push_back(s.id);
      else
        rest.push_back(&s);
    }
    std::vector<int> labels;
    for (const auto* s : rest) labels.push_back(s->label);
    const auto folds = stratified_kfold(labels, k, derive_seed(seed, "logo:" + g));
    for (std::size_t f = 0; f < folds.size(); ++f) {
      TrainValSplit tv;
      std::vector<bool> in_val(rest.size(), false);
      for (std::size_t i : folds[f]) in_val[i] = true;
      for (std::size_t i = 0; i < rest.size(); ++i) (in_val[i] ? tv.validation : tv.train).push_back(rest[i]->id);
      it.folds.push_back(std::move(tv));
    }
    plan.iterations.push_back(std::move(it));
  }
  return plan;
}

// Throws BookkeepingError unless every slide is tested exactly once, test sets
// equal their held-out group, and train/validation/test never overlap.
inline void check_plan(const SplitPlan& plan, const std::vector<SlideRef>& slides) {
  std::map<std::string, const SlideRef*> by_id;
  for (const auto& s : slides) by_id[s.id] = &s;
  std::map<std::string, int> tested;
  for (const auto& it : plan.iterations) {
    std::set<std::string> test(it.test.begin(), it.test.end());
    if (test.size() != it.test.size()) throw BookkeepingError("duplicate id in test set of " + it.held_out_group);
    for (const auto& id : it.test) {
      auto f = by_id.find(id);
      if (f == by_id.end()) throw BookkeepingError("unknown slide " + id + " in plan");
      if (f->second->group != it.held_out_group)
        throw BookkeepingError("slide " + id + " tested outside its group");
      ++tested[id];
    }
    for (const auto& s : slides)
      if (s.group == it.held_out_group && !test.count(s.id))
        throw BookkeepingError("slide " + s.id + " missing from its group's test set");
    for (const auto& tv : it.folds) {
      std::set<std::string> tr(tv.train.begin(), tv.train.end()), va(tv.validation.begin(), tv.validation.end());
      for (const auto& id : tv.train)
        if (va.count(id) || test.count(id)) throw BookkeepingError("slide " + id + " leaks out of train");
      for (const auto& id : tv.validation)
        if (test.count(id)) throw BookkeepingError("slide " + id + " in validation and test");
      if (tr.size() + va.size() + test.size() != slides.size())
        throw BookkeepingError("iteration " + it.held_out_group + " does not cover the cohort");
    }
  }
  for (const auto& s : slides)
    if (tested[s.id] != 1)
      throw BookkeepingError("slide " + s.id + " tested " + std::to_string(tested[s.id]) + " times");
}

inline nlohmann::json to_json(const SplitPlan& p) {
  nlohmann::json its = nlohmann::json::array();
  for (const auto& it : p.iterations) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : it.folds) folds.push_back({{"train", f.train}, {"validation", f.validation}});
    its.push_back({{"held_out_group", it.held_out_group}, {"test", it.test}, {"folds", folds}});
  }
  return {{"iterations", its}};
}

inline SplitPlan split_plan_from_json(const nlohmann::json& j) {
  SplitPlan p;
  try {
    for (const auto& it : j.at("iterations")) {
      SplitIteration s;
      s.held_out_group = it.at("held_out_group").get<std::string>();
      s.test = it.at("test").get<std::vector<std::string>>();
      for (const auto& f : it.at("folds"))
        s.folds.push_back({f.at("train").get<std::vector<std::string>>(),
                           f.at("validation").get<std::vector<std::string>>()});
      p.iterations.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad split plan: ") + e.what());
  }
  return p;
}

}  // namespace canvoi::eval
