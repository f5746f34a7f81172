#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "canvoi/nn/tensor.hpp"

namespace canvoi::vit {

// Source coordinate of target cell i when resampling a g_src grid to g_tgt,
// corner-aligned (the outer cells of both grids coincide).
inline double grid_source_coord(int i, int g_src, int g_tgt) {
  if (g_tgt == 1) return (g_src - 1) / 2.0;
  return static_cast<double>(i) * (g_src - 1) / (g_tgt - 1);
}

struct LerpTap {
  int lo = 0;
  int hi = 0;
  double t = 0.0;
};

inline LerpTap lerp_tap(int i, int g_src, int g_tgt) {
  const double c = grid_source_coord(i, g_src, g_tgt);
  LerpTap tap;
  tap.lo = std::clamp(static_cast<int>(std::floor(c)), 0, g_src - 1);
  tap.hi = std::min(tap.lo + 1, g_src - 1);
  tap.t = c - tap.lo;
  return tap;
}

inline int grid_side_of(std::size_t rows_with_cls) {
  const std::size_t n = rows_with_cls - 1;
  std::size_t g = 0;
  while ((g + 1) * (g + 1) <= n) ++g;
  if (g * g != n)
    throw DimensionError("position table with " + std::to_string(rows_with_cls) +
                         " rows is not a square grid plus class token");
  return static_cast<int>(g);
}

// Bilinear resampling of a position table laid out as [class row; g_src^2 grid
// rows] to a g_tgt grid. The class row passes through untouched. Written in
// lerp form a + (b - a) t so that equal grids and constant fields map exactly.
template <class T>
nn::Tensor2D<T> interpolate_pos_embed(const nn::Tensor2D<T>& table, int g_tgt) {
  const int g_src = grid_side_of(table.rows());
  if (g_tgt < 1) throw ConfigError("target grid must be >= 1");
  if (g_tgt == g_src) return table;
  const std::size_t d = table.cols();
  nn::Tensor2D<T> out(static_cast<std::size_t>(g_tgt) * g_tgt + 1, d);
  for (std::size_t c = 0; c < d; ++c) out(0, c) = table(0, c);
  auto src = [&](int x, int y, std::size_t c) -> const T& {
    return table(1 + static_cast<std::size_t>(y) * g_src + x, c);
  };
  for (int oy = 0; oy < g_tgt; ++oy) {
    const LerpTap ty = lerp_tap(oy, g_src, g_tgt);
    const T wy = T(ty.t);
    for (int ox = 0; ox < g_tgt; ++ox) {
      const LerpTap tx = lerp_tap(ox, g_src, g_tgt);
      const T wx = T(tx.t);
      T* o = out.data() + (1 + static_cast<std::size_t>(oy) * g_tgt + ox) * d;
      for (std::size_t c = 0; c < d; ++c) {
        const T top = src(tx.lo, ty.lo, c) + (src(tx.hi, ty.lo, c) - src(tx.lo, ty.lo, c)) * wx;
        const T bot = src(tx.lo, ty.hi, c) + (src(tx.hi, ty.hi, c) - src(tx.lo, ty.hi, c)) * wx;
        o[c] = top + (bot - top) * wy;
      }
    }
  }
  return out;
}

// Adjoint of interpolate_pos_embed: accumulates d_table += M^T d_out.
template <class T>
void interpolate_pos_embed_backward(const nn::Tensor2D<T>& d_out, int g_src, nn::Tensor2D<T>& d_table) {
  const int g_tgt = grid_side_of(d_out.rows());
  const std::size_t d = d_out.cols();
  if (g_tgt == g_src) {
    for (std::size_t i = 0; i < d_out.size(); ++i) d_table[i] += d_out[i];
    return;
  }
  for (std::size_t c = 0; c < d; ++c) d_table(0, c) += d_out(0, c);
  auto dsrc = [&](int x, int y) { return d_table.data() + (1 + static_cast<std::size_t>(y) * g_src + x) * d; };
  for (int oy = 0; oy < g_tgt; ++oy) {
    const LerpTap ty = lerp_tap(oy, g_src, g_tgt);
    for (int ox = 0; ox < g_tgt; ++ox) {
      const LerpTap tx = lerp_tap(ox, g_src, g_tgt);
      const T w00 = T((1 - tx.t) * (1 - ty.t)), w10 = T(tx.t * (1 - ty.t));
      const T w01 = T((1 - tx.t) * ty.t), w11 = T(tx.t * ty.t);
      const T* g = d_out.data() + (1 + static_cast<std::size_t>(oy) * g_tgt + ox) * d;
      T* a = dsrc(tx.lo, ty.lo);
      T* b = dsrc(tx.hi, ty.lo);
      T* e = dsrc(tx.lo, ty.hi);
      T* f = dsrc(tx.hi, ty.hi);
      for (std::size_t c = 0; c < d; ++c) {
        a[c] += w00 * g[c];
        b[c] += w10 * g[c];
        e[c] += w01 * g[c];
        f[c] += w11 * g[c];
      }
    }
  }
}

}  // namespace canvoi::vit
