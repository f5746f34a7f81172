#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "canvoi/core/error.hpp"
#include "canvoi/core/rng.hpp"
#include "canvoi/nn/ops.hpp"
#include "canvoi/nn/param_set.hpp"
#include "canvoi/vit/checkpoint.hpp"

namespace canvoi::mil {

struct AbmilConfig {
  int width = 64;
  int hidden = 128;
  int n_classes = 2;

  void validate() const {
    if (width < 1 || hidden < 1) throw ConfigError("AB-MIL width and hidden size must be >= 1");
    if (n_classes < 2) throw ConfigError("AB-MIL needs at least two classes");
  }
  friend bool operator==(const AbmilConfig&, const AbmilConfig&) = default;
};

namespace detail {
// Total order on rows: bit patterns for IEEE types so that -0/+0 and NaN
// payloads are ordered too.
template <class T>
bool row_less(std::span<const T> a, std::span<const T> b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if constexpr (std::is_same_v<T, float>) {
      const auto x = std::bit_cast<std::uint32_t>(a[i]), y = std::bit_cast<std::uint32_t>(b[i]);
      if (x != y) return x < y;
    } else if constexpr (std::is_same_v<T, double>) {
      const auto x = std::bit_cast<std::uint64_t>(a[i]), y = std::bit_cast<std::uint64_t>(b[i]);
      if (x != y) return x < y;
    } else {
      if (a[i] < b[i]) return true;
      if (b[i] < a[i]) return false;
    }
  }
  return false;
}
}  // namespace detail

// Rows of `h` visited in a canonical order, so every reduction over the bag
// runs in the same sequence whatever order the rows arrive in.
template <class T>
std::vector<std::size_t> canonical_order(const nn::Tensor2D<T>& h) {
  std::vector<std::size_t> idx(h.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return detail::row_less<T>(h.row(a), h.row(b)); });
  return idx;
}

// Non-gated attention pooling (tanh) followed by a linear classifier.
template <class T>
class AbmilModel {
 public:
  struct Cache {
    nn::Tensor2D<T> h;       // rows in canonical order
    std::vector<std::size_t> order;
    nn::Tensor2D<T> act;     // tanh(H V + b)
    std::vector<T> attn;     // canonical order
    nn::Tensor2D<T> pooled;  // 1 x width
    std::vector<T> probs;
  };

  AbmilModel() = default;
  explicit AbmilModel(const AbmilConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const auto d = static_cast<std::size_t>(cfg.width), hd = static_cast<std::size_t>(cfg.hidden),
               c = static_cast<std::size_t>(cfg.n_classes);
    params_.add("mil.attention.V.weight", d, hd);
    params_.add("mil.attention.V.bias", 1, hd);
    params_.add("mil.attention.w.weight", hd, 1);
    params_.add("mil.classifier.weight", d, c);
    params_.add("mil.classifier.bias", 1, c);
  }
  AbmilModel(const AbmilConfig& cfg, std::uint64_t seed) : AbmilModel(cfg) { initialize(seed); }

  // Weights uniform in +-1/sqrt(fan_in), biases zero.
  void initialize(std::uint64_t seed) {
    Rng rng(seed, "mil_init");
    for (auto& p : params_) {
      if (p.name.ends_with(".bias")) {
        p.value.fill(T(0));
        continue;
      }
      const double bound = 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
      for (auto& v : p.value.storage()) v = T(rng.uniform(-bound, bound));
    }
  }

  const AbmilConfig& config() const { return cfg_; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }

  // Attention weights in the caller's row order.
  std::vector<T> attention_weights(const nn::Tensor2D<T>& h) const {
    Cache c;
    run(h, c);
    std::vector<T> out(h.rows());
    for (std::size_t i = 0; i < c.order.size(); ++i) out[c.order[i]] = c.attn[i];
    return out;
  }

  // Pooled bag embedding z = sum_k a_k h_k.
  std::vector<T> pool(const nn::Tensor2D<T>& h) const {
    Cache c;
    run(h, c);
    return std::vector<T>(c.pooled.storage());
  }

  std::vector<T> predict(const nn::Tensor2D<T>& h) const {
    Cache c;
    run(h, c);
    return c.probs;
  }

  std::vector<T> forward(const nn::Tensor2D<T>& h, Cache& c) const {
    run(h, c);
    return c.probs;
  }

  // Cross-entropy of one bag; accumulates parameter gradients scaled by `scale`.
  T loss_and_backward(const nn::Tensor2D<T>& h, int label, T scale = T(1)) {
    using std::log;
    check_label(label);
    Cache c;
    run(h, c);
    const T loss = -log(c.probs[static_cast<std::size_t>(label)]);
    backward(c, label, scale);
    return loss;
  }

  T loss(const nn::Tensor2D<T>& h, int label) const {
    using std::log;
    check_label(label);
    return -log(predict(h)[static_cast<std::size_t>(label)]);
  }

  void backward(const Cache& c, int label, T scale) {
    auto& P = params_;
    const std::size_t n = c.h.rows(), d = c.h.cols(), hd = static_cast<std::size_t>(cfg_.hidden),
                      k = static_cast<std::size_t>(cfg_.n_classes);
    nn::Tensor2D<T> dlogits(1, k);
    for (std::size_t j = 0; j < k; ++j)
      dlogits[j] = scale * (c.probs[j] - (static_cast<int>(j) == label ? T(1) : T(0)));
    const nn::Tensor2D<T> dz = nn::dense_affine_backward(c.pooled, P.at(3).value, dlogits, P.at(3).grad, P.at(4).grad);
    // d a_k = h_k . dz, then through the softmax
    std::vector<T> ds(n);
    for (std::size_t i = 0; i < n; ++i) {
      T s = T(0);
      for (std::size_t j = 0; j < d; ++j) s += c.h(i, j) * dz[j];
      ds[i] = s;
    }
    nn::softmax_backward_inplace(std::span<const T>(c.attn), std::span<T>(ds));
    // scores = act w
    auto& gw = P.at(2).grad;
    const auto& w = P.at(2).value;
    nn::Tensor2D<T> dpre(n, hd);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < hd; ++j) {
        const T a = c.act(i, j);
        gw[j] += a * ds[i];
        dpre(i, j) = ds[i] * w[j] * (T(1) - a * a);
      }
    nn::dense_affine_backward(c.h, P.at(0).value, dpre, P.at(0).grad, P.at(1).grad, /*need_dx=*/false);
  }

 private:
  void check_label(int label) const {
    if (label < 0 || label >= cfg_.n_classes)
      throw DataError("label " + std::to_string(label) + " outside [0, " + std::to_string(cfg_.n_classes) + ")");
  }

  void run(const nn::Tensor2D<T>& h, Cache& c) const {
    using std::tanh;
    if (h.rows() == 0) throw DataError("empty bag");
    if (h.cols() != static_cast<std::size_t>(cfg_.width))
      throw DimensionError("bag width " + std::to_string(h.cols()) + " != model width " +
                           std::to_string(cfg_.width));
    const auto& P = params_;
    const std::size_t n = h.rows(), d = h.cols();
    c.order = canonical_order(h);
    c.h = nn::Tensor2D<T>(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto src = h.row(c.order[i]);
      std::copy(src.begin(), src.end(), c.h.row(i).begin());
    }
    c.act = nn::dense_affine(c.h, P.at(0).value, P.at(1).value);
    for (auto& v : c.act.storage()) v = tanh(v);
    c.attn.assign(n, T(0));
    const auto& w = P.at(2).value;
    for (std::size_t i = 0; i < n; ++i) {
      T s = T(0);
      for (std::size_t j = 0; j < w.size(); ++j) s += c.act(i, j) * w[j];
      c.attn[i] = s;
    }
    nn::softmax_inplace(std::span<T>(c.attn));
    c.pooled = nn::Tensor2D<T>(1, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) c.pooled[j] += c.attn[i] * c.h(i, j);
    nn::Tensor2D<T> logits = nn::dense_affine(c.pooled, P.at(3).value, P.at(4).value);
    c.probs.assign(logits.storage().begin(), logits.storage().end());
    nn::softmax_inplace(std::span<T>(c.probs));
  }

  AbmilConfig cfg_;
  nn::ParamSet<T> params_;
};

inline nlohmann::json to_json(const AbmilConfig& c) {
  return {{"width", c.width}, {"hidden", c.hidden}, {"n_classes", c.n_classes}};
}

inline AbmilConfig abmil_config_from_json(const nlohmann::json& j) {
  AbmilConfig c;
  try {
    c.width = j.at("width").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.n_classes = j.at("n_classes").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad AB-MIL config: ") + e.what());
  }
  c.validate();
  return c;
}

template <class T>
ckpt::Checkpoint abmil_checkpoint(const AbmilModel<T>& m) {
  ckpt::Checkpoint ck;
  ck.config = {{"kind", "abmil"}, {"abmil", to_json(m.config())}};
  ckpt::append_params(ck, m.params());
  return ck;
}

template <class T>
AbmilModel<T> abmil_from_checkpoint(const ckpt::Checkpoint& ck) {
  if (ck.config.value("kind", "") != "abmil") throw DataError("checkpoint is not an AB-MIL checkpoint");
  AbmilModel<T> m(abmil_config_from_json(ck.config.at("abmil")));
  ckpt::load_params(ck, m.params());
  return m;
}

}  // namespace canvoi::mil
