#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "canvoi/core/error.hpp"
#include "canvoi/core/rng.hpp"
#include "canvoi/nn/tensor.hpp"

namespace canvoi::nn {

template <class T>
struct Param {
  std::string name;
  Tensor2D<T> value;
  Tensor2D<T> grad;
};

// Named parameters with same-shaped gradient slots, iterated in insertion
// order.
template <class T>
class ParamSet {
 public:
  Param<T>& add(const std::string& name, std::size_t rows, std::size_t cols) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
    index_.emplace(name, params_.size());
    params_.push_back({name, Tensor2D<T>(rows, cols), Tensor2D<T>(rows, cols)});
    return params_.back();
  }

  Param<T>& add(const std::string& name, Tensor2D<T> value) {
    auto& p = add(name, value.rows(), value.cols());
    p.value = std::move(value);
    return p;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw NotFoundError("unknown parameter " + name);
    return it->second;
  }

  Param<T>& operator[](const std::string& name) { return params_[index_of(name)]; }
  const Param<T>& operator[](const std::string& name) const { return params_[index_of(name)]; }
  Param<T>& at(std::size_t i) { return params_[i]; }
  const Param<T>& at(std::size_t i) const { return params_[i]; }

  // Swaps in a value of a different shape (used when a position table is
  // resampled); the gradient slot is resized to match.
  void replace(const std::string& name, Tensor2D<T> value) {
    auto& p = (*this)[name];
    p.grad = Tensor2D<T>(value.rows(), value.cols());
    p.value = std::move(value);
  }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T(0));
  }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  // Same names, order and shapes.
  bool same_structure(const ParamSet& o) const {
    if (params_.size() != o.params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name != o.params_[i].name || !params_[i].value.same_shape(o.params_[i].value))
        return false;
    return true;
  }

  bool values_equal(const ParamSet& o) const {
    if (!same_structure(o)) return false;
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (!(params_[i].value == o.params_[i].value)) return false;
    return true;
  }

 private:
  std::vector<Param<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <class T>
void init_truncated_normal(Tensor2D<T>& t, Rng& rng, double stddev = 0.02) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = T(rng.truncated_normal(stddev));
}

template <class To, class From>
ParamSet<To> cast_params(const ParamSet<From>& src) {
  ParamSet<To> out;
  for (const auto& p : src) out.add(p.name, cast<To>(p.value));
  return out;
}

}  // namespace canvoi::nn
