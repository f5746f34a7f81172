#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "canvoi/mil/abmil.hpp"
#include "canvoi/nn/adam.hpp"
#include "canvoi/wsi/embedding_store.hpp"

namespace canvoi::mil {

struct TrainSpec {
  double lr = 1e-4;
  double weight_decay = 1e-5;
  int epochs = 15;
  int batch_size = 1;  // bags per optimizer step
  int hidden = 128;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr > 0.0) || weight_decay < 0.0) throw ConfigError("MIL lr must be positive and weight decay >= 0");
    if (epochs < 0 || batch_size < 1 || hidden < 1) throw ConfigError("MIL epochs >= 0, batch and hidden >= 1");
  }
};

inline nlohmann::json to_json(const TrainSpec& s) {
  return {{"lr", s.lr},         {"weight_decay", s.weight_decay}, {"epochs", s.epochs},
          {"batch_size", s.batch_size}, {"hidden", s.hidden},     {"seed", s.seed}};
}

template <class T>
struct TrainResult {
  AbmilModel<T> model;
  std::vector<double> epoch_loss;  // mean bag loss per epoch

  std::string log_csv() const {
    std::string s = "epoch,loss\n";
    for (std::size_t e = 0; e < epoch_loss.size(); ++e) s += fmt::format("{},{:.9e}\n", e, epoch_loss[e]);
    return s;
  }
};

template <class T>
nn::Tensor2D<T> bag_matrix(const wsi::EmbeddingBag& bag) {
  nn::Tensor2D<T> m(bag.embeddings.rows(), bag.embeddings.cols());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = T(bag.embeddings[i]);
  return m;
}

// Adam on per-bag cross-entropy for exactly spec.epochs passes. Bag order is
// reshuffled every epoch from the spec seed.
template <class T>
TrainResult<T> mil_train(const std::vector<nn::Tensor2D<T>>& bags, const std::vector<int>& labels, int n_classes,
                         const TrainSpec& spec) {
  spec.validate();
  if (bags.size() != labels.size()) throw DimensionError("bag and label counts differ");
  if (bags.empty()) throw DataError("no training bags");
  std::set<int> present(labels.begin(), labels.end());
  if (present.size() < 2) throw ConfigError("MIL training needs at least two classes present");
  for (int l : labels)
    if (l < 0 || l >= n_classes) throw DataError("label " + std::to_string(l) + " outside class range");
  const int width = static_cast<int>(bags.front().cols());
  for (const auto& b : bags) {
    if (b.rows() == 0) throw DataError("empty bag in training set");
    if (b.cols() != static_cast<std::size_t>(width)) throw DimensionError("bags differ in embedding width");
  }

  TrainResult<T> out{AbmilModel<T>({width, spec.hidden, n_classes}, spec.seed), {}};
  auto& model = out.model;
  nn::AdamState<T> adam({spec.lr, 0.9, 0.999, 1e-8, spec.weight_decay});
  Rng rng(spec.seed, "mil_order");
  std::vector<std::size_t> order(bags.size());
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(spec.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(spec.batch_size));
      const T scale = T(1.0 / static_cast<double>(end - start));
      model.params().zero_grad();
      for (std::size_t j = start; j < end; ++j) {
        const T l = model.loss_and_backward(bags[order[j]], labels[order[j]], scale);
        const double lv = static_cast<double>(l);
        if (!std::isfinite(lv))
          throw NumericAbort("non-finite MIL loss in epoch " + std::to_string(epoch), epoch);
        total += lv;
      }
      try {
        nn::adam_step(model.params(), adam);
      } catch (const NumericAbort& e) {
        throw NumericAbort(std::string(e.what()) + " in epoch " + std::to_string(epoch), epoch);
      }
    }
    out.epoch_loss.push_back(total / static_cast<double>(bags.size()));
  }
  return out;
}

}  // namespace canvoi::mil
