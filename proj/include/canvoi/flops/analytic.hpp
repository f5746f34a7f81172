#pragma once

#include <cstdint>

#include "canvoi/vit/config.hpp"

namespace canvoi::flops {

// How operations are tallied. Defaults match the instrumented counter: a
// multiply-add is 2 FLOPs and each softmax element costs 4 (subtract max,
// exp, accumulate, divide).
struct FlopsConvention {
  int fma_flops = 2;            // 1 counts multiply-accumulates instead
  int softmax_per_element = 4;
  bool include_minor = true;    // norms, softmax, GELU, residuals, position add, score scaling

  friend bool operator==(const FlopsConvention&, const FlopsConvention&) = default;
};

struct FlopsBreakdown {
  std::uint64_t tokens = 0;  // N, class token included
  std::uint64_t patch_projection = 0;
  std::uint64_t position = 0;
  std::uint64_t norms = 0;
  std::uint64_t qkv = 0;
  std::uint64_t attention_scores = 0;
  std::uint64_t softmax = 0;
  std::uint64_t attention_apply = 0;
  std::uint64_t output_projection = 0;
  std::uint64_t mlp = 0;
  std::uint64_t activation = 0;
  std::uint64_t residual = 0;
  std::uint64_t head = 0;  // the encoder reads out through the final norm only, so 0 here

  std::uint64_t total() const {
    return patch_projection + position + norms + qkv + attention_scores + softmax + attention_apply +
           output_projection + mlp + activation + residual + head;
  }
  double gflops() const { return static_cast<double>(total()) * 1e-9; }

  friend bool operator==(const FlopsBreakdown&, const FlopsBreakdown&) = default;
};

// Per-element costs of the minor kernels as written in nn/ops.hpp.
inline constexpr std::uint64_t kLayerNormPerElement = 7;  // sum, centre, square+acc, scale, gain+shift
inline constexpr std::uint64_t kLayerNormPerRow = 5;      // mean, var, eps add, sqrt, reciprocal
inline constexpr std::uint64_t kGeluPerElement = 9;

inline FlopsBreakdown analytic_flops(const vit::EncoderConfig& c, const FlopsConvention& conv = {}) {
  c.validate();
  if (conv.fma_flops != 1 && conv.fma_flops != 2) throw ConfigError("fma_flops must be 1 or 2");
  if (conv.softmax_per_element < 0) throw ConfigError("softmax cost must be non-negative");
  using u64 = std::uint64_t;
  const u64 g = static_cast<u64>(c.grid()), p = g * g, n = p + 1;
  const u64 d = static_cast<u64>(c.width), heads = static_cast<u64>(c.heads), dh = d / heads;
  const u64 hid = static_cast<u64>(c.mlp_hidden()), pd = static_cast<u64>(c.patch_dim());
  const u64 depth = static_cast<u64>(c.depth);
  const u64 f = static_cast<u64>(conv.fma_flops);
  const u64 minor = conv.include_minor ? 1 : 0;
  const u64 ln_row = kLayerNormPerElement * d + kLayerNormPerRow;

  FlopsBreakdown b;
  b.tokens = n;
  b.patch_projection = f * p * pd * d;
  b.position = minor * n * d;
  b.qkv = depth * f * n * d * 3 * d;
  b.attention_scores = depth * heads * (f * n * n * dh + minor * n * n);
  b.softmax = depth * heads * minor * static_cast<u64>(conv.softmax_per_element) * n * n;
  b.attention_apply = depth * heads * f * n * n * dh;
  b.output_projection = depth * f * n * d * d;
  b.mlp = depth * 2 * f * n * d * hid;
  b.activation = depth * minor * kGeluPerElement * n * hid;
  b.residual = depth * minor * 2 * n * d;
  b.norms = minor * (depth * 2 * n * ln_row + ln_row);
  return b;
}

// Matmul-only closed form, 2 FLOPs per multiply-add:
// depth (8 N D^2 + 4 N D H + 4 N^2 D) + 2 (N - 1) C P^2 D.
inline std::uint64_t matmul_flops(const vit::EncoderConfig& c) {
  c.validate();
  using u64 = std::uint64_t;
  const u64 g = static_cast<u64>(c.grid()), n = g * g + 1, d = static_cast<u64>(c.width);
  const u64 hid = static_cast<u64>(c.mlp_hidden());
  return static_cast<u64>(c.depth) * (8 * n * d * d + 4 * n * d * hid + 4 * n * n * d) +
         2 * (n - 1) * static_cast<u64>(c.patch_dim()) * d;
}

}  // namespace canvoi::flops
