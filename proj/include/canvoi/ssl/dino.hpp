#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "canvoi/core/rng.hpp"
#include "canvoi/nn/gemm.hpp"
#include "canvoi/nn/ops.hpp"
#include "canvoi/nn/param_set.hpp"

namespace canvoi::ssl {

struct HeadConfig {
  int bottleneck = 256;
  int prototypes = 1024;

  void validate() const {
    if (bottleneck < 1) throw ConfigError("head bottleneck must be >= 1");
    if (prototypes < 2) throw ConfigError("prototype count must be >= 2");
  }
};

// Projection head: width -> bottleneck (GELU) -> bottleneck, L2-normalised,
// then cosine logits against K unit-length prototype columns.
template <class T>
class DistillHead {
 public:
  struct Cache {
    nn::Tensor2D<T> input;
    nn::Tensor2D<T> pre;
    nn::Tensor2D<T> act;
    nn::Tensor2D<T> unit;          // normalised bottleneck rows
    std::vector<T> row_norm;
    nn::Tensor2D<T> protos;        // normalised prototype columns
    std::vector<T> col_norm;
  };

  DistillHead() = default;
  DistillHead(int width, const HeadConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    if (width < 1) throw ConfigError("head input width must be >= 1");
    const auto d = static_cast<std::size_t>(width), b = static_cast<std::size_t>(cfg.bottleneck),
               k = static_cast<std::size_t>(cfg.prototypes);
    params_.add("head.fc1.weight", d, b);
    params_.add("head.fc1.bias", 1, b);
    params_.add("head.fc2.weight", b, b);
    params_.add("head.fc2.bias", 1, b);
    params_.add("head.prototypes", b, k);
  }

  void initialize(std::uint64_t seed) {
    Rng rng(seed, "head_init");
    for (auto& p : params_)
      if (!p.name.ends_with(".bias")) nn::init_truncated_normal(p.value, rng, 0.02);
  }

  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }
  int prototypes() const { return cfg_.prototypes; }

  // rows of `x` are embeddings; returns one logit row per embedding
  nn::Tensor2D<T> forward(const nn::Tensor2D<T>& x, Cache* cache = nullptr) const {
    using std::sqrt;
    const auto& P = params_;
    auto pre = nn::dense_affine(x, P.at(0).value, P.at(1).value);
    auto act = nn::gelu(pre);
    auto unit = nn::dense_affine(act, P.at(2).value, P.at(3).value);
    const std::size_t n = unit.rows(), b = unit.cols();
    std::vector<T> row_norm(n);
    for (std::size_t i = 0; i < n; ++i) {
      T ss = T(0);
      for (const T& v : unit.row(i)) ss += v * v;
      row_norm[i] = sqrt(ss) + T(kNormEps);
      for (T& v : unit.row(i)) v /= row_norm[i];
    }
    nn::Tensor2D<T> protos = P.at(4).value;
    const std::size_t k = protos.cols();
    std::vector<T> col_norm(k, T(0));
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t c = 0; c < k; ++c) col_norm[c] += protos(r, c) * protos(r, c);
    for (auto& v : col_norm) v = sqrt(v) + T(kNormEps);
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t c = 0; c < k; ++c) protos(r, c) /= col_norm[c];
    nn::Tensor2D<T> out(n, k);
    nn::gemm(false, false, n, k, b, unit.data(), b, protos.data(), k, out.data(), k, false);
    if (cache) {
      cache->input = x;
      cache->pre = std::move(pre);
      cache->act = std::move(act);
      cache->unit = std::move(unit);
      cache->row_norm = std::move(row_norm);
      cache->protos = std::move(protos);
      cache->col_norm = std::move(col_norm);
    }
    return out;
  }

  nn::Tensor2D<T> backward(const Cache& cache, const nn::Tensor2D<T>& dlogits) {
    auto& P = params_;
    const std::size_t n = cache.unit.rows(), b = cache.unit.cols(), k = cache.protos.cols();
    nn::Tensor2D<T> dunit(n, b), dprotos(b, k);
    nn::gemm(false, true, n, b, k, dlogits.data(), k, cache.protos.data(), k, dunit.data(), b, false);
    nn::gemm(true, false, b, k, n, cache.unit.data(), b, dlogits.data(), k, dprotos.data(), k, false);
    // through v / |v| for each prototype column
    std::vector<T> dots(k, T(0));
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t c = 0; c < k; ++c) dots[c] += cache.protos(r, c) * dprotos(r, c);
    auto& gp = P.at(4).grad;
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t c = 0; c < k; ++c)
        gp(r, c) += (dprotos(r, c) - cache.protos(r, c) * dots[c]) / cache.col_norm[c];
    // through z / |z| for each row
    for (std::size_t i = 0; i < n; ++i) {
      const auto u = cache.unit.row(i);
      auto du = dunit.row(i);
      T dot = T(0);
      for (std::size_t j = 0; j < b; ++j) dot += u[j] * du[j];
      for (std::size_t j = 0; j < b; ++j) du[j] = (du[j] - u[j] * dot) / cache.row_norm[i];
    }
    auto dact = nn::dense_affine_backward(cache.act, P.at(2).value, dunit, P.at(2).grad, P.at(3).grad);
    auto dpre = nn::gelu_backward(cache.pre, dact);
    return nn::dense_affine_backward(cache.input, P.at(0).value, dpre, P.at(0).grad, P.at(1).grad);
  }

 private:
  static constexpr double kNormEps = 1e-12;
  HeadConfig cfg_;
  nn::ParamSet<T> params_;
};

// Cross-entropy of one (teacher, student) pair:
// -sum_k softmax((t - c) / tau_t)[k] * log softmax(s / tau_s)[k].
// `d_student` (if given) receives d(loss)/d(s) = (p_s - p_t) / tau_s.
template <class T>
T dino_pair_loss(std::span<const T> t, std::span<const T> s, std::span<const T> center, T tau_t, T tau_s,
                 std::span<T> d_student = {}) {
  using std::log;
  const std::size_t k = t.size();
  if (s.size() != k || center.size() != k)
    throw DimensionError("teacher, student and center lengths differ");
  if (!(tau_t > T(0)) || !(tau_s > T(0))) throw ConfigError("temperatures must be positive");
  std::vector<T> pt(k), ls(k);
  for (std::size_t i = 0; i < k; ++i) pt[i] = (t[i] - center[i]) / tau_t;
  for (std::size_t i = 0; i < k; ++i) ls[i] = s[i] / tau_s;
  nn::softmax_inplace(std::span<T>(pt));
  // log-softmax of the student, max-shifted
  T m = ls[0];
  for (const T& v : ls) m = v > m ? v : m;
  T z = T(0);
  for (const T& v : ls) {
    using std::exp;
    z += exp(v - m);
  }
  const T log_z = m + log(z);
  T loss = T(0);
  for (std::size_t i = 0; i < k; ++i) loss -= pt[i] * (ls[i] - log_z);
  if (!d_student.empty()) {
    using std::exp;
    for (std::size_t i = 0; i < k; ++i) d_student[i] += (exp(ls[i] - log_z) - pt[i]) / tau_s;
  }
  return loss;
}

template <class T>
T entropy(std::span<const T> p) {
  using std::log;
  T h = T(0);
  for (const T& v : p)
    if (v > T(0)) h -= v * log(v);
  return h;
}

struct DinoLoss {
  double value = 0.0;
  std::size_t pairs = 0;
};

// Summed over every (teacher global g, student view v) with v != g. Student
// rows 0..G-1 are the same global views the teacher saw, in the same order.
template <class T>
DinoLoss dino_loss(const nn::Tensor2D<T>& teacher, const nn::Tensor2D<T>& student, std::span<const T> center,
                   T tau_t, T tau_s, nn::Tensor2D<T>* d_student = nullptr) {
  if (teacher.cols() != student.cols()) throw DimensionError("teacher and student prototype counts differ");
  if (student.rows() < teacher.rows()) throw DimensionError("student must see every teacher view");
  if (d_student) *d_student = nn::Tensor2D<T>(student.rows(), student.cols());
  DinoLoss out;
  T total = T(0);
  for (std::size_t g = 0; g < teacher.rows(); ++g)
    for (std::size_t v = 0; v < student.rows(); ++v) {
      if (v == g) continue;
      std::span<T> ds = d_student ? d_student->row(v) : std::span<T>();
      total += dino_pair_loss(teacher.row(g), student.row(v), center, tau_t, tau_s, ds);
      ++out.pairs;
    }
  out.value = static_cast<double>(total);
  return out;
}

// teacher <- m * teacher + (1 - m) * student, written as
// teacher + (1 - m)(student - teacher) so each result stays between the two.
template <class T>
void ema_update(nn::ParamSet<T>& teacher, const nn::ParamSet<T>& student, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("EMA momentum must lie in [0, 1]");
  if (!teacher.same_structure(student))
    throw DimensionError("teacher and student parameter sets differ in names or shapes");
  if (m == 1.0) return;
  const T w = T(1.0 - m);
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    auto& t = teacher.at(i).value;
    const auto& s = student.at(i).value;
    if (m == 0.0) {
      t = s;
      continue;
    }
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = t[j] + w * (s[j] - t[j]);
  }
}

template <class T>
void update_center(std::vector<T>& center, std::span<const T> batch_mean, double m_c) {
  if (center.size() != batch_mean.size()) throw DimensionError("center and batch mean lengths differ");
  const T a = T(m_c), b = T(1.0 - m_c);
  for (std::size_t i = 0; i < center.size(); ++i) center[i] = a * center[i] + b * batch_mean[i];
}

// Cosine ramp from `start` at step 0 to `end` at step `total`.
inline double cosine_ramp(double start, double end, std::size_t step, std::size_t total) {
  if (total == 0) return end;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return end - (end - start) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

// Linear warm-up from `start` to `end` over `warmup` steps, then constant.
inline double linear_warmup(double start, double end, std::size_t step, std::size_t warmup) {
  if (warmup == 0 || step >= warmup) return end;
  return start + (end - start) * static_cast<double>(step) / static_cast<double>(warmup);
}

}  // namespace canvoi::ssl
