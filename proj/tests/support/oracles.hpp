#pragma once

// Reference implementations used only by tests: slow, direct, and written
// without reusing library code.

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

// All-pairs count: concordant = 1, tie = 1/2.
inline double auc_all_pairs(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      den += 1.0;
      if (s[i] > s[j]) num += 1.0;
      else if (s[i] == s[j]) num += 0.5;
    }
  }
  return num / den;
}

// Dense layer FLOPs counted term by term: bias init then one mul + one add per product.
inline std::uint64_t dense_flops(std::uint64_t n, std::uint64_t din, std::uint64_t dout) {
  return 2 * n * din * dout;
}

// Forward cost of a pre-norm ViT with class-token readout, by explicit sum
// over the pieces (same accounting as the instrumented scalar).
struct VitShape {
  std::uint64_t tile, patch, depth, width, heads, hidden, channels;
};

inline std::uint64_t vit_forward_flops(const VitShape& v) {
  const std::uint64_t g = v.tile / v.patch, n = g * g + 1, d = v.width, dh = d / v.heads;
  const std::uint64_t pd = v.channels * v.patch * v.patch;
  std::uint64_t f = 0;
  f += dense_flops(g * g, pd, d);  // patch projection
  f += n * d;                       // position add
  const std::uint64_t ln_row = 7 * d + 5;
  for (std::uint64_t b = 0; b < v.depth; ++b) {
    f += n * ln_row;                   // norm1
    f += dense_flops(n, d, 3 * d);     // qkv
    for (std::uint64_t h = 0; h < v.heads; ++h) {
      f += 2 * n * n * dh + n * n;     // scores + scale
      f += 4 * n * n;                  // softmax
      f += 2 * n * n * dh;             // weighted values
    }
    f += dense_flops(n, d, d);         // output projection
    f += n * d;                        // residual
    f += n * ln_row;                   // norm2
    f += dense_flops(n, d, v.hidden);  // fc1
    f += 9 * n * v.hidden;             // gelu
    f += dense_flops(n, v.hidden, d);  // fc2
    f += n * d;                        // residual
  }
  f += ln_row;  // final norm, class row only
  return f;
}

}  // namespace oracle
