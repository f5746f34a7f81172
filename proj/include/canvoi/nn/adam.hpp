#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>

#include "canvoi/core/error.hpp"
#include "canvoi/nn/param_set.hpp"

namespace canvoi::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

template <class T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::unordered_map<std::string, Tensor2D<T>> m;
  std::unordered_map<std::string, Tensor2D<T>> v;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}

  // Drops the moments of one parameter (after its shape changed).
  void reset(const std::string& name) {
    m.erase(name);
    v.erase(name);
  }
};

// One Adam step with bias correction. Weight decay is decoupled: lr * wd * p
// is added to the update rather than folded into the gradient.
template <class T>
void adam_step(ParamSet<T>& params, AdamState<T>& state) {
  using std::isfinite;
  for (const auto& p : params)
    for (std::size_t i = 0; i < p.grad.size(); ++i)
      if (!isfinite(p.grad[i]))
        throw NumericAbort("non-finite gradient in parameter " + p.name);

  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const T bc1 = T(1.0 - std::pow(c.beta1, t));
  const T bc2 = T(1.0 - std::pow(c.beta2, t));
  const T b1 = T(c.beta1), b2 = T(c.beta2), lr = T(c.lr), eps = T(c.eps), wd = T(c.weight_decay);

  for (auto& p : params) {
    auto& m = state.m[p.name];
    auto& v = state.v[p.name];
    if (!m.same_shape(p.value)) {
      m = Tensor2D<T>(p.value.rows(), p.value.cols());
      v = Tensor2D<T>(p.value.rows(), p.value.cols());
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = p.grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const T mhat = m[i] / bc1;
      const T vhat = v[i] / bc2;
      T update = mhat / (std::sqrt(vhat) + eps);
      if (c.weight_decay != 0.0) update += wd * p.value[i];
      p.value[i] -= lr * update;
    }
  }
}

}  // namespace canvoi::nn
