#pragma once

#include <string>
#include <vector>

#include "canvoi/core/raster.hpp"
#include "canvoi/nn/tensor.hpp"

namespace canvoi::vit {

// Square image, row-major, channel-last.
template <class T>
struct Image {
  int side = 0;
  int channels = 3;
  std::vector<T> data;

  Image() = default;
  Image(int s, int c = 3) : side(s), channels(c), data(static_cast<std::size_t>(s) * s * c, T(0)) {}

  T& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * side + x) * channels + c]; }
  const T& at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * side + x) * channels + c];
  }
  friend bool operator==(const Image&, const Image&) = default;
};

// Fixed pixel standardisation: (v / 255 - 0.5) / 0.25.
template <class T>
Image<T> to_image(const Raster& r) {
  if (r.width() != r.height())
    throw DimensionError("encoder input must be square, got " + std::to_string(r.width()) + "x" +
                         std::to_string(r.height()));
  Image<T> img(r.width());
  const auto& src = r.data();
  for (std::size_t i = 0; i < src.size(); ++i)
    img.data[i] = T((static_cast<double>(src[i]) / 255.0 - 0.5) / 0.25);
  return img;
}

// Row k holds the k-th patch in raster-scan order, flattened row-major and
// channel-last.
template <class T>
nn::Tensor2D<T> patchify(const Image<T>& img, int patch_px) {
  if (patch_px <= 0 || img.side % patch_px != 0)
    throw DimensionError("image side " + std::to_string(img.side) + " not divisible by patch " +
                         std::to_string(patch_px));
  const int g = img.side / patch_px;
  const int c = img.channels;
  const std::size_t row_len = static_cast<std::size_t>(c) * patch_px * patch_px;
  nn::Tensor2D<T> out(static_cast<std::size_t>(g) * g, row_len);
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx) {
      T* dst = out.data() + (static_cast<std::size_t>(gy) * g + gx) * row_len;
      for (int py = 0; py < patch_px; ++py) {
        const T* src = &img.at(gx * patch_px, gy * patch_px + py, 0);
        for (int k = 0; k < patch_px * c; ++k) *dst++ = src[k];
      }
    }
  return out;
}

// Checks the image against the configured tile size first.
template <class T>
nn::Tensor2D<T> patchify(const Image<T>& img, int tile_px, int patch_px) {
  if (img.side != tile_px)
    throw DimensionError("image side " + std::to_string(img.side) + " != tile " +
                         std::to_string(tile_px));
  return patchify(img, patch_px);
}

template <class T>
Image<T> unpatchify(const nn::Tensor2D<T>& patches, int patch_px, int channels = 3) {
  std::size_t g = 0;
  while ((g + 1) * (g + 1) <= patches.rows()) ++g;
  if (g * g != patches.rows() ||
      patches.cols() != static_cast<std::size_t>(channels) * patch_px * patch_px)
    throw DimensionError("patch matrix " + patches.shape_string() + " is not a square grid of " +
                         std::to_string(patch_px) + " px patches");
  Image<T> img(static_cast<int>(g) * patch_px, channels);
  const std::size_t row_len = patches.cols();
  for (std::size_t gy = 0; gy < g; ++gy)
    for (std::size_t gx = 0; gx < g; ++gx) {
      const T* src = patches.data() + (gy * g + gx) * row_len;
      for (int py = 0; py < patch_px; ++py) {
        T* dst = &img.at(static_cast<int>(gx) * patch_px, static_cast<int>(gy) * patch_px + py, 0);
        for (int k = 0; k < patch_px * channels; ++k) dst[k] = *src++;
      }
    }
  return img;
}

}  // namespace canvoi::vit
