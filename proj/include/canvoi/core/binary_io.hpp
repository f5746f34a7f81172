#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "canvoi/core/error.hpp"

namespace canvoi::io {

static_assert(std::endian::native == std::endian::little,
              "binary containers assume a little-endian host");

// Append-only little-endian byte buffer.
class ByteWriter {
 public:
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void i32(std::int32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }
  void bytes(std::string_view s) { raw(s.data(), s.size()); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  void f32s(std::span<const float> v) { raw(v.data(), v.size_bytes()); }

  const std::vector<char>& buffer() const { return buf_; }
  std::size_t size() const { return buf_.size(); }

 private:
  void raw(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::vector<char> buf_;
};

// Bounds-checked reader over an in-memory buffer; every failure names the
// offset where it happened.
class ByteReader {
 public:
  ByteReader(std::span<const char> data, std::size_t base_offset = 0)
      : data_(data), base_(base_offset) {}

  std::uint32_t u32() { return scalar<std::uint32_t>(); }
  std::int32_t i32() { return scalar<std::int32_t>(); }
  std::uint64_t u64() { return scalar<std::uint64_t>(); }
  float f32() { return scalar<float>(); }

  std::string bytes(std::size_t n) {
    need(n, "string");
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::string str(std::size_t max_len = 1u << 20) {
    const auto at = offset();
    const auto n = u32();
    if (n > max_len) throw FormatError("implausible string length " + std::to_string(n), at);
    return bytes(n);
  }
  void f32s(std::span<float> out) {
    need(out.size_bytes(), "float payload");
    std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  }

  std::size_t offset() const { return base_ + pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  void seek(std::size_t absolute) {
    if (absolute < base_ || absolute - base_ > data_.size())
      throw FormatError("seek out of range", absolute);
    pos_ = absolute - base_;
  }

 private:
  template <class V>
  V scalar() {
    need(sizeof(V), "scalar");
    V v;
    std::memcpy(&v, data_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  void need(std::size_t n, const char* what) {
    if (n > remaining())
      throw FormatError(std::string("truncated ") + what, offset());
  }

  std::span<const char> data_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<char> buf(size);
  in.read(buf.data(), static_cast<std::streamsize>(size));
  if (!in) throw DataError("short read from " + path.string());
  return buf;
}

// Temp file + rename so readers never observe a partial artifact.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const char> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const char>(text.data(), text.size()));
}

inline std::string read_text(const std::filesystem::path& path) {
  auto buf = read_file(path);
  return std::string(buf.begin(), buf.end());
}

}  // namespace canvoi::io
