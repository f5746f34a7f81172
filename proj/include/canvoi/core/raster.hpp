#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "canvoi/core/binary_io.hpp"
#include "canvoi/core/error.hpp"

namespace canvoi {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// 8-bit RGB raster, row-major, channel-last.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, Rgb fill = {255, 255, 255})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height * 3) {
    if (width <= 0 || height <= 0)
      throw DimensionError("raster must be non-empty, got " + std::to_string(width) + "x" +
                           std::to_string(height));
    for (std::size_t i = 0; i < data_.size(); i += 3) {
      data_[i] = fill.r;
      data_[i + 1] = fill.g;
      data_[i + 2] = fill.b;
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  std::uint8_t* px(int x, int y) { return &data_[(static_cast<std::size_t>(y) * width_ + x) * 3]; }
  const std::uint8_t* px(int x, int y) const {
    return &data_[(static_cast<std::size_t>(y) * width_ + x) * 3];
  }
  Rgb at(int x, int y) const {
    const auto* p = px(x, y);
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) {
    auto* p = px(x, y);
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  std::vector<std::uint8_t>& data() { return data_; }
  const std::vector<std::uint8_t>& data() const { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

inline Raster crop(const Raster& src, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || x0 + w > src.width() || y0 + h > src.height())
    throw DimensionError("crop " + std::to_string(w) + "x" + std::to_string(h) + "@(" +
                         std::to_string(x0) + "," + std::to_string(y0) + ") exceeds raster " +
                         std::to_string(src.width()) + "x" + std::to_string(src.height()));
  Raster out(w, h);
  for (int y = 0; y < h; ++y)
    std::copy_n(src.px(x0, y0 + y), static_cast<std::size_t>(w) * 3, out.px(0, y));
  return out;
}

inline Raster flip_horizontal(const Raster& src) {
  Raster out(src.width(), src.height());
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) out.set(src.width() - 1 - x, y, src.at(x, y));
  return out;
}

inline Raster flip_vertical(const Raster& src) {
  Raster out(src.width(), src.height());
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) out.set(x, src.height() - 1 - y, src.at(x, y));
  return out;
}

// 90 degrees clockwise.
inline Raster rotate90(const Raster& src) {
  Raster out(src.height(), src.width());
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) out.set(src.height() - 1 - y, x, src.at(x, y));
  return out;
}

inline std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Bilinear resampling of the region [x0, x0+w) x [y0, y0+h) to out_w x out_h,
// pixel-centre aligned.
inline Raster resize_bilinear(const Raster& src, int x0, int y0, int w, int h, int out_w,
                              int out_h) {
  Raster out(out_w, out_h);
  const double sx = static_cast<double>(w) / out_w;
  const double sy = static_cast<double>(h) / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, h - 1.0);
    const int y_lo = static_cast<int>(fy);
    const int y_hi = std::min(y_lo + 1, h - 1);
    const double ty = fy - y_lo;
    for (int ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, w - 1.0);
      const int x_lo = static_cast<int>(fx);
      const int x_hi = std::min(x_lo + 1, w - 1);
      const double tx = fx - x_lo;
      const auto* p00 = src.px(x0 + x_lo, y0 + y_lo);
      const auto* p10 = src.px(x0 + x_hi, y0 + y_lo);
      const auto* p01 = src.px(x0 + x_lo, y0 + y_hi);
      const auto* p11 = src.px(x0 + x_hi, y0 + y_hi);
      auto* q = out.px(ox, oy);
      for (int c = 0; c < 3; ++c) {
        const double top = p00[c] + (p10[c] - p00[c]) * tx;
        const double bot = p01[c] + (p11[c] - p01[c]) * tx;
        q[c] = to_u8(top + (bot - top) * ty);
      }
    }
  }
  return out;
}

inline Raster resize_bilinear(const Raster& src, int out_w, int out_h) {
  return resize_bilinear(src, 0, 0, src.width(), src.height(), out_w, out_h);
}

// Binary PPM (P6, maxval 255).
inline void write_ppm(const std::filesystem::path& path, const Raster& r) {
  std::string header = "P6\n" + std::to_string(r.width()) + " " + std::to_string(r.height()) + "\n255\n";
  std::vector<char> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), r.data().begin(), r.data().end());
  io::write_file_atomic(path, bytes);
}

inline Raster read_ppm(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string(bytes.data() + start, pos - start);
  };
  if (token() != "P6") throw FormatError("not a binary PPM: " + path.string(), 0);
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw FormatError("bad PPM header in " + path.string(), pos);
  }
  if (maxval != 255 || w <= 0 || h <= 0) throw FormatError("unsupported PPM in " + path.string(), pos);
  ++pos;  // single whitespace before pixel data
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - pos < n) throw FormatError("truncated PPM " + path.string(), pos);
  Raster r(w, h);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), n, r.data().begin());
  return r;
}

}  // namespace canvoi
