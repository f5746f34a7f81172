#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "canvoi/nn/counting.hpp"
#include "canvoi/nn/ops.hpp"

namespace canvoi::nn {

// Weights of one multi-head self-attention layer. qkv_w packs the Q, K and V
// projections as [width x 3*width] (Q columns first); proj is the output
// projection.
template <class T>
struct AttentionWeights {
  const Tensor2D<T>& qkv_w;
  const Tensor2D<T>& qkv_b;
  const Tensor2D<T>& proj_w;
  const Tensor2D<T>& proj_b;
};

template <class T>
struct AttentionGrads {
  Tensor2D<T>& qkv_w;
  Tensor2D<T>& qkv_b;
  Tensor2D<T>& proj_w;
  Tensor2D<T>& proj_b;
};

template <class T>
struct AttentionCache {
  Tensor2D<T> input;               // N x D
  Tensor2D<T> qkv;                 // N x 3D
  std::vector<Tensor2D<T>> probs;  // per head, N x N
  Tensor2D<T> mixed;               // N x D, concatenated head outputs
};

inline void check_heads(std::size_t width, std::size_t heads) {
  if (heads == 0 || width % heads != 0)
    throw ConfigError("attention width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
}

template <class T>
Tensor2D<T> multi_head_attention(const Tensor2D<T>& x, const AttentionWeights<T>& w,
                                 std::size_t heads, AttentionCache<T>* cache = nullptr) {
  using std::sqrt;
  const std::size_t n = x.rows(), d = x.cols();
  check_heads(d, heads);
  if (w.qkv_w.rows() != d || w.qkv_w.cols() != 3 * d)
    throw DimensionError("attention qkv weight " + w.qkv_w.shape_string() + " vs input " +
                         x.shape_string());
  const std::size_t dh = d / heads;

  Tensor2D<T> qkv;
  {
    FlopRegion r(FlopTag::qkv);
    qkv = dense_affine(x, w.qkv_w, w.qkv_b);
  }
  const T scale = T(1.0 / std::sqrt(static_cast<double>(dh)));

  Tensor2D<T> mixed(n, d);
  std::vector<Tensor2D<T>> probs;
  if (cache) probs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
    Tensor2D<T> s(n, n);
    {
      FlopRegion r(FlopTag::attention_scores);
      gemm(false, true, n, n, dh, qkv.data() + qo, 3 * d, qkv.data() + ko, 3 * d, s.data(), n, false);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] = s[i] * scale;
    }
    {
      FlopRegion r(FlopTag::softmax);
      softmax_rows_inplace(s);
    }
    {
      FlopRegion r(FlopTag::attention_apply);
      gemm(false, false, n, dh, n, s.data(), n, qkv.data() + vo, 3 * d, mixed.data() + qo, d, false);
    }
    if (cache) probs.push_back(std::move(s));
  }

  Tensor2D<T> out;
  {
    FlopRegion r(FlopTag::output_projection);
    out = dense_affine(mixed, w.proj_w, w.proj_b);
  }
  if (cache) {
    cache->input = x;
    cache->qkv = std::move(qkv);
    cache->probs = std::move(probs);
    cache->mixed = std::move(mixed);
  }
  return out;
}

// Accumulates parameter gradients; returns d(input).
template <class T>
Tensor2D<T> multi_head_attention_backward(const AttentionCache<T>& cache, const AttentionWeights<T>& w,
                                          const AttentionGrads<T>& g, std::size_t heads,
                                          const Tensor2D<T>& dout) {
  const std::size_t n = cache.input.rows(), d = cache.input.cols();
  const std::size_t dh = d / heads;
  const T scale = T(1.0 / std::sqrt(static_cast<double>(dh)));

  const Tensor2D<T> dmixed = dense_affine_backward(cache.mixed, w.proj_w, dout, g.proj_w, g.proj_b);
  Tensor2D<T> dqkv(n, 3 * d);

  Tensor2D<T> dp(n, n);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
    const Tensor2D<T>& p = cache.probs[h];
    const T* qkv = cache.qkv.data();
    // dP = dO V^T ; dV = P^T dO
    gemm(false, true, n, n, dh, dmixed.data() + qo, d, qkv + vo, 3 * d, dp.data(), n, false);
    gemm(true, false, n, dh, n, p.data(), n, dmixed.data() + qo, d, dqkv.data() + vo, 3 * d, false);
    // softmax backward, folded with the 1/sqrt(dh) scale
    for (std::size_t i = 0; i < n; ++i) {
      T* dpr = dp.data() + i * n;
      softmax_backward_inplace(std::span<const T>(p.data() + i * n, n), std::span<T>(dpr, n));
      for (std::size_t j = 0; j < n; ++j) dpr[j] *= scale;
    }
    // dQ = dS K ; dK = dS^T Q
    gemm(false, false, n, dh, n, dp.data(), n, qkv + ko, 3 * d, dqkv.data() + qo, 3 * d, false);
    gemm(true, false, n, dh, n, dp.data(), n, qkv + qo, 3 * d, dqkv.data() + ko, 3 * d, false);
  }
  return dense_affine_backward(cache.input, w.qkv_w, dqkv, g.qkv_w, g.qkv_b);
}

// Batched form over a tokens tensor; every sample is processed independently.
template <class T>
Tensor3D<T> multi_head_attention(const Tensor3D<T>& x, const AttentionWeights<T>& w,
                                 std::size_t heads) {
  Tensor3D<T> out(x.batch(), x.tokens(), x.dim());
  for (std::size_t b = 0; b < x.batch(); ++b)
    out.set_sample(b, multi_head_attention(x.sample(b), w, heads));
  return out;
}

}  // namespace canvoi::nn
