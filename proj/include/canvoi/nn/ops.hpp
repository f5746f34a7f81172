#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <type_traits>
#include <span>
#include <string>
#include <vector>

#include "canvoi/nn/gemm.hpp"
#include "canvoi/nn/tensor.hpp"

namespace canvoi::nn {

// Precision-dependent tolerances: f64 is the verification mode, f32 the run
// mode.
template <class T>
struct Tolerance;

template <>
struct Tolerance<double> {
  static constexpr double prob_sum = 1e-12;
  static constexpr double grad_rel = 1e-4;
  static constexpr double norm_moment = 1e-9;
};

template <>
struct Tolerance<float> {
  static constexpr double prob_sum = 1e-5;
  static constexpr double grad_rel = 1e-2;
  static constexpr double norm_moment = 1e-4;
};

// ---------------------------------------------------------------------------
// dense affine: y = x W + b

template <class T>
void check_dense_shapes(const Tensor2D<T>& x, const Tensor2D<T>& w, const Tensor2D<T>& b) {
  if (x.cols() != w.rows())
    throw DimensionError("dense_affine: input " + x.shape_string() + " incompatible with weight " +
                         w.shape_string());
  if (b.size() != w.cols())
    throw DimensionError("dense_affine: bias " + b.shape_string() + " incompatible with weight " +
                         w.shape_string());
}

template <class T>
Tensor2D<T> dense_affine(const Tensor2D<T>& x, const Tensor2D<T>& w, const Tensor2D<T>& b) {
  check_dense_shapes(x, w, b);
  const std::size_t n = x.rows(), din = w.rows(), dout = w.cols();
  Tensor2D<T> y(n, dout);
  for (std::size_t i = 0; i < n; ++i) std::copy(b.data(), b.data() + dout, y.data() + i * dout);
  gemm(false, false, n, dout, din, x.data(), din, w.data(), dout, y.data(), dout, true);
  return y;
}

// Accumulates dW += x^T dy and db += colsum(dy); returns dx = dy W^T.
template <class T>
Tensor2D<T> dense_affine_backward(const Tensor2D<T>& x, const Tensor2D<T>& w, const Tensor2D<T>& dy,
                                  Tensor2D<T>& dw, Tensor2D<T>& db, bool need_dx = true) {
  const std::size_t n = x.rows(), din = w.rows(), dout = w.cols();
  if (dy.rows() != n || dy.cols() != dout)
    throw DimensionError("dense_affine_backward: upstream " + dy.shape_string() +
                         " vs expected [" + std::to_string(n) + "x" + std::to_string(dout) + "]");
  gemm(true, false, din, dout, n, x.data(), din, dy.data(), dout, dw.data(), dout, true);
  for (std::size_t i = 0; i < n; ++i) {
    const T* dyr = dy.data() + i * dout;
    for (std::size_t j = 0; j < dout; ++j) db[j] += dyr[j];
  }
  Tensor2D<T> dx;
  if (!need_dx) return dx;
  dx = Tensor2D<T>(n, din);
  gemm(false, true, n, din, dout, dy.data(), dout, w.data(), dout, dx.data(), din, false);
  return dx;
}

// ---------------------------------------------------------------------------
// layer norm (per row)

template <class T>
struct LayerNormCache {
  Tensor2D<T> xhat;
  std::vector<T> inv_std;
};

template <class T>
Tensor2D<T> layer_norm(const Tensor2D<T>& x, const Tensor2D<T>& gamma, const Tensor2D<T>& beta,
                       T eps, LayerNormCache<T>* cache = nullptr) {
  using std::sqrt;
  const std::size_t n = x.rows(), d = x.cols();
  if (gamma.size() != d || beta.size() != d)
    throw DimensionError("layer_norm: input " + x.shape_string() + " vs gain " +
                         gamma.shape_string() + " / shift " + beta.shape_string());
  Tensor2D<T> y(n, d);
  Tensor2D<T> xhat(n, d);
  std::vector<T> inv(n);
  const T dd = T(static_cast<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    auto xr = x.row(i);
    T sum = T(0);
    for (std::size_t j = 0; j < d; ++j) sum += xr[j];
    const T mean = sum / dd;
    auto hr = xhat.row(i);
    T ss = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      hr[j] = xr[j] - mean;
      ss += hr[j] * hr[j];
    }
    const T var = ss / dd;
    inv[i] = T(1) / sqrt(var + eps);
    auto yr = y.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      hr[j] = hr[j] * inv[i];
      yr[j] = gamma[j] * hr[j] + beta[j];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

template <class T>
Tensor2D<T> layer_norm_backward(const LayerNormCache<T>& cache, const Tensor2D<T>& gamma,
                                const Tensor2D<T>& dy, Tensor2D<T>& dgamma, Tensor2D<T>& dbeta) {
  const std::size_t n = dy.rows(), d = dy.cols();
  Tensor2D<T> dx(n, d);
  std::vector<T> g(d);
  for (std::size_t i = 0; i < n; ++i) {
    auto dyr = dy.row(i);
    auto hr = cache.xhat.row(i);
    T sum_g = T(0), sum_gh = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      dgamma[j] += dyr[j] * hr[j];
      dbeta[j] += dyr[j];
      g[j] = dyr[j] * gamma[j];
      sum_g += g[j];
      sum_gh += g[j] * hr[j];
    }
    const T scale = cache.inv_std[i] / T(static_cast<double>(d));
    auto dxr = dx.row(i);
    for (std::size_t j = 0; j < d; ++j)
      dxr[j] = scale * (T(static_cast<double>(d)) * g[j] - sum_g - hr[j] * sum_gh);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// softmax

// Max-subtracted softmax in place.
// Branch-free single-precision exp (range reduction by ln 2, degree-6
// polynomial, exponent bits assembled directly) so the loop vectorises.
// Accurate to a couple of ulp over the range softmax feeds it (x <= 0).
inline float exp_f32(float x) {
  x = x < -87.0f ? -87.0f : x;
  x = x > 88.0f ? 88.0f : x;
  constexpr float kRound = 12582912.0f;  // 1.5 * 2^23: adding it rounds to nearest integer
  const float t = x * 1.44269504088896341f + kRound;
  const float n = t - kRound;
  const std::int32_t ni = std::bit_cast<std::int32_t>(t) - std::bit_cast<std::int32_t>(kRound);
  float r = x - n * 0.693359375f;
  r = r - n * -2.12194440e-4f;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  p = p * r * r + r + 1.0f;
  const auto bits = static_cast<std::uint32_t>(ni + 127) << 23;
  return p * std::bit_cast<float>(bits);
}

inline void softmax_inplace_f32(std::span<float> x) {
  const std::size_t n = x.size();
  float* p = x.data();
  float m = p[0];
  for (std::size_t i = 1; i < n; ++i) m = p[i] > m ? p[i] : m;
  for (std::size_t i = 0; i < n; ++i) p[i] = exp_f32(p[i] - m);
  // fixed 8-lane partial sums, then a fixed-order combine
  float lane[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t k = 0; k < 8; ++k) lane[k] += x[i + k];
  float sum = 0.0f;
  for (float v : lane) sum += v;
  for (; i < n; ++i) sum += x[i];
  const float inv = 1.0f / sum;
  for (float& v : x) v *= inv;
}

template <class T>
void softmax_inplace(std::span<T> x) {
  using std::exp;
  if (x.empty()) return;
  if constexpr (std::is_same_v<T, float>) {
    softmax_inplace_f32(x);
    return;
  }
  T m = x[0];
  for (const T& v : x)
    if (v > m) m = v;
  T sum = T(0);
  for (T& v : x) {
    v = exp(v - m);
    sum += v;
  }
  for (T& v : x) v = v / sum;
}

template <class T>
std::vector<T> softmax(std::span<const T> x, T temperature = T(1)) {
  if (!(temperature > T(0))) throw ConfigError("softmax temperature must be positive");
  std::vector<T> out(x.begin(), x.end());
  if (temperature != T(1))
    for (T& v : out) v = v / temperature;
  softmax_inplace(std::span<T>(out));
  return out;
}

template <class T>
std::vector<T> softmax(const std::vector<T>& x, T temperature = T(1)) {
  return softmax(std::span<const T>(x), temperature);
}

// In place: dy <- p * (dy - <p, dy>).
template <class T>
void softmax_backward_inplace(std::span<const T> p, std::span<T> dy) {
  T dot = T(0);
  for (std::size_t i = 0; i < p.size(); ++i) dot += p[i] * dy[i];
  for (std::size_t i = 0; i < p.size(); ++i) dy[i] = p[i] * (dy[i] - dot);
}

template <class T>
void softmax_rows_inplace(Tensor2D<T>& x) {
  for (std::size_t i = 0; i < x.rows(); ++i) softmax_inplace(x.row(i));
}

// ---------------------------------------------------------------------------
// GELU, tanh approximation

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
inline constexpr double kGeluA = 0.044715;

template <class T>
T gelu(T x) {
  using std::tanh;
  const T inner = T(kGeluC) * (x + T(kGeluA) * x * x * x);
  return T(0.5) * x * (T(1) + tanh(inner));
}

template <class T>
T gelu_grad(T x) {
  using std::tanh;
  const T inner = T(kGeluC) * (x + T(kGeluA) * x * x * x);
  const T t = tanh(inner);
  const T dinner = T(kGeluC) * (T(1) + T(3 * kGeluA) * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * dinner;
}

template <class T>
Tensor2D<T> gelu(const Tensor2D<T>& x) {
  Tensor2D<T> y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu(x[i]);
  return y;
}

template <class T>
Tensor2D<T> gelu_backward(const Tensor2D<T>& x, const Tensor2D<T>& dy) {
  Tensor2D<T> dx(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = dy[i] * gelu_grad(x[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// small helpers

template <class T>
void add_inplace(Tensor2D<T>& a, const Tensor2D<T>& b) {
  if (!a.same_shape(b))
    throw DimensionError("add: " + a.shape_string() + " vs " + b.shape_string());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <class T>
bool all_finite(const Tensor2D<T>& a) {
  using std::isfinite;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!isfinite(a[i])) return false;
  return true;
}

}  // namespace canvoi::nn
