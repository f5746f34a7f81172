#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "canvoi/core/binary_io.hpp"
#include "canvoi/nn/tensor.hpp"
#include "canvoi/wsi/tiling.hpp"

namespace canvoi::wsi {

struct EmbeddingBag {
  std::string slide_id;
  std::string group_id;
  std::optional<int> label;
  nn::Tensor2D<float> embeddings;  // n_tiles x width
  std::vector<TileOrigin> origins;

  std::size_t size() const { return embeddings.rows(); }
  std::size_t width() const { return embeddings.cols(); }

  void validate() const {
    if (embeddings.rows() == 0) throw DataError("bag " + slide_id + " has no instances");
    if (origins.size() != embeddings.rows())
      throw DimensionError("bag " + slide_id + ": " + std::to_string(origins.size()) + " origins for " +
                           std::to_string(embeddings.rows()) + " embeddings");
  }
  friend bool operator==(const EmbeddingBag&, const EmbeddingBag&) = default;
};

// Single-file bag container, little-endian:
//   "CVOI" u32 version
//   records, each: str slide_id, str group_id, i32 label (-1 = none),
//                  u32 n_tiles, u32 width, i32 origins[2 n], f32 data[n width]
//   index:  u32 count, then per record: str slide_id, u64 record offset
//   footer: u64 index offset, "CVIX"
// Strings are a u32 byte length followed by UTF-8 bytes.
namespace store {
inline constexpr char kMagic[4] = {'C', 'V', 'O', 'I'};
inline constexpr char kFooterMagic[4] = {'C', 'V', 'I', 'X'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 8;
inline constexpr std::size_t kFooterSize = 12;

struct IndexEntry {
  std::string slide_id;
  std::uint64_t offset = 0;
};

inline void write_record(io::ByteWriter& w, const EmbeddingBag& bag) {
  bag.validate();
  w.str(bag.slide_id);
  w.str(bag.group_id);
  w.i32(bag.label ? *bag.label : -1);
  w.u32(static_cast<std::uint32_t>(bag.size()));
  w.u32(static_cast<std::uint32_t>(bag.width()));
  for (const auto& o : bag.origins) {
    w.i32(o.x);
    w.i32(o.y);
  }
  w.f32s(bag.embeddings.flat());
}

inline EmbeddingBag read_record(io::ByteReader& r) {
  EmbeddingBag bag;
  bag.slide_id = r.str();
  bag.group_id = r.str();
  const auto label = r.i32();
  if (label >= 0) bag.label = label;
  const auto count_at = r.offset();
  const auto n = r.u32();
  const auto width = r.u32();
  const std::uint64_t payload = static_cast<std::uint64_t>(n) * 8 + static_cast<std::uint64_t>(n) * width * 4;
  if (n == 0 || payload > r.remaining())
    throw FormatError("bag " + bag.slide_id + " has an impossible size", count_at);
  bag.origins.resize(n);
  for (auto& o : bag.origins) {
    o.x = r.i32();
    o.y = r.i32();
  }
  bag.embeddings = nn::Tensor2D<float>(n, width);
  r.f32s(bag.embeddings.flat());
  return bag;
}
}  // namespace store

// Appends bags to a store. The file is assembled under a temporary name and
// renamed into place, index included, on close().
class EmbeddingStoreWriter {
 public:
  enum class Mode { create, append };

  explicit EmbeddingStoreWriter(std::filesystem::path path, Mode mode = Mode::create) : path_(std::move(path)) {
    tmp_ = path_;
    tmp_ += ".tmp";
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::vector<char> prefix;
    if (mode == Mode::append && std::filesystem::exists(path_)) {
      auto bytes = io::read_file(path_);
      std::uint64_t index_at = 0;
      index_ = read_index(bytes, &index_at);
      prefix.assign(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(index_at));
    } else {
      io::ByteWriter w;
      w.bytes(std::string_view(store::kMagic, 4));
      w.u32(store::kVersion);
      prefix = w.buffer();
    }
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw DataError("cannot write " + tmp_.string());
    out_.write(prefix.data(), static_cast<std::streamsize>(prefix.size()));
    pos_ = prefix.size();
  }

  EmbeddingStoreWriter(const EmbeddingStoreWriter&) = delete;
  EmbeddingStoreWriter& operator=(const EmbeddingStoreWriter&) = delete;

  ~EmbeddingStoreWriter() {
    if (!closed_) {
      try {
        close();
      } catch (...) {
      }
    }
  }

  void write(const EmbeddingBag& bag) {
    if (closed_) throw DataError("store writer already closed");
    for (const auto& e : index_)
      if (e.slide_id == bag.slide_id) throw DataError("bag " + bag.slide_id + " already in store");
    io::ByteWriter w;
    store::write_record(w, bag);
    index_.push_back({bag.slide_id, pos_});
    out_.write(w.buffer().data(), static_cast<std::streamsize>(w.size()));
    pos_ += w.size();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    io::ByteWriter w;
    w.u32(static_cast<std::uint32_t>(index_.size()));
    for (const auto& e : index_) {
      w.str(e.slide_id);
      w.u64(e.offset);
    }
    w.u64(pos_);
    w.bytes(std::string_view(store::kFooterMagic, 4));
    out_.write(w.buffer().data(), static_cast<std::streamsize>(w.size()));
    out_.close();
    if (!out_) throw DataError("short write to " + tmp_.string());
    std::filesystem::rename(tmp_, path_);
  }

  static std::vector<store::IndexEntry> read_index(std::span<const char> bytes, std::uint64_t* index_offset) {
    io::ByteReader head(bytes);
    if (bytes.size() < store::kHeaderSize + store::kFooterSize)
      throw FormatError("store too short for header and footer", bytes.size());
    if (head.bytes(4) != std::string_view(store::kMagic, 4)) throw FormatError("bad store magic", 0);
    const auto version = head.u32();
    if (version != store::kVersion)
      throw FormatError("unsupported store version " + std::to_string(version), 4);
    const std::size_t footer_at = bytes.size() - store::kFooterSize;
    io::ByteReader foot(bytes.subspan(footer_at), footer_at);
    const std::uint64_t index_at = foot.u64();
    if (foot.bytes(4) != std::string_view(store::kFooterMagic, 4))
      throw FormatError("bad store footer magic", footer_at + 8);
    if (index_at < store::kHeaderSize || index_at > footer_at)
      throw FormatError("index offset out of range", footer_at);
    io::ByteReader idx(bytes.subspan(index_at, footer_at - index_at), index_at);
    const auto count = idx.u32();
    std::vector<store::IndexEntry> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
      store::IndexEntry e;
      e.slide_id = idx.str();
      const auto at = idx.offset();
      e.offset = idx.u64();
      if (e.offset < store::kHeaderSize || e.offset >= index_at)
        throw FormatError("index entry " + e.slide_id + " points outside the record area", at);
      entries.push_back(std::move(e));
    }
    if (idx.remaining() != 0) throw FormatError("trailing bytes in index", idx.offset());
    if (index_offset) *index_offset = index_at;
    return entries;
  }

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_;
  std::ofstream out_;
  std::vector<store::IndexEntry> index_;
  std::uint64_t pos_ = 0;
  bool closed_ = false;
};

// Random-access reader. Holds the index in memory and seeks per bag.
class EmbeddingStoreReader {
 public:
  explicit EmbeddingStoreReader(std::filesystem::path path) : path_(std::move(path)) {
    in_.open(path_, std::ios::binary);
    if (!in_) throw NotFoundError("cannot open store " + path_.string());
    in_.seekg(0, std::ios::end);
    const auto size = static_cast<std::uint64_t>(in_.tellg());
    // header, footer and index only; records are read on demand
    if (size < store::kHeaderSize + store::kFooterSize)
      throw FormatError("store too short for header and footer", size);
    const auto head = read_at(0, store::kHeaderSize);
    const auto foot = read_at(size - store::kFooterSize, store::kFooterSize);
    io::ByteReader fr(foot, size - store::kFooterSize);
    index_offset_ = fr.u64();
    if (index_offset_ < store::kHeaderSize || index_offset_ > size - store::kFooterSize)
      throw FormatError("index offset out of range", size - store::kFooterSize);
    auto index_bytes = read_at(index_offset_, size - index_offset_);
    io::ByteReader hr(head);
    if (hr.bytes(4) != std::string_view(store::kMagic, 4)) throw FormatError("bad store magic", 0);
    const auto version = hr.u32();
    if (version != store::kVersion)
      throw FormatError("unsupported store version " + std::to_string(version), 4);
    io::ByteReader ir(index_bytes, index_offset_);
    const auto count = ir.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      store::IndexEntry e;
      e.slide_id = ir.str();
      const auto at = ir.offset();
      e.offset = ir.u64();
      if (e.offset < store::kHeaderSize || e.offset >= index_offset_)
        throw FormatError("index entry " + e.slide_id + " points outside the record area", at);
      if (!by_id_.emplace(e.slide_id, entries_.size()).second)
        throw FormatError("duplicate index entry " + e.slide_id, at);
      entries_.push_back(std::move(e));
    }
    ir.u64();
    if (ir.bytes(4) != std::string_view(store::kFooterMagic, 4))
      throw FormatError("bad store footer magic", size - 4);
    // record extents: each record runs to the next record start or the index
    std::vector<std::uint64_t> starts;
    for (const auto& e : entries_) starts.push_back(e.offset);
    std::sort(starts.begin(), starts.end());
    for (const auto& e : entries_) {
      auto it = std::upper_bound(starts.begin(), starts.end(), e.offset);
      ends_.push_back(it == starts.end() ? index_offset_ : *it);
    }
  }

  // Slide ids in insertion order.
  std::vector<std::string> list() const {
    std::vector<std::string> ids;
    ids.reserve(entries_.size());
    for (const auto& e : entries_) ids.push_back(e.slide_id);
    return ids;
  }
  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& id) const { return by_id_.count(id) != 0; }

  EmbeddingBag read(const std::string& slide_id) {
    const auto it = by_id_.find(slide_id);
    if (it == by_id_.end()) throw NotFoundError("slide " + slide_id + " not in store " + path_.string());
    const auto& e = entries_[it->second];
    const auto end = ends_[it->second];
    const auto bytes = read_at(e.offset, end - e.offset);
    io::ByteReader r(bytes, e.offset);
    auto bag = store::read_record(r);
    if (bag.slide_id != slide_id) throw FormatError("record id does not match index entry " + slide_id, e.offset);
    if (r.remaining() != 0) throw FormatError("record " + slide_id + " has trailing bytes", r.offset());
    return bag;
  }

  std::vector<EmbeddingBag> read_all() {
    std::vector<EmbeddingBag> out;
    for (const auto& e : entries_) out.push_back(read(e.slide_id));
    return out;
  }

 private:
  std::vector<char> read_at(std::uint64_t offset, std::uint64_t n) {
    std::vector<char> buf(n);
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(offset));
    in_.read(buf.data(), static_cast<std::streamsize>(n));
    if (!in_) throw FormatError("truncated store", offset);
    return buf;
  }

  std::filesystem::path path_;
  std::ifstream in_;
  std::uint64_t index_offset_ = 0;
  std::vector<store::IndexEntry> entries_;
  std::vector<std::uint64_t> ends_;
  std::map<std::string, std::size_t> by_id_;
};

// One-shot helpers; write_bag appends to an existing store or creates it.
inline void write_bag(const std::filesystem::path& store_path, const EmbeddingBag& bag) {
  EmbeddingStoreWriter w(store_path, EmbeddingStoreWriter::Mode::append);
  w.write(bag);
  w.close();
}

inline EmbeddingBag read_bag(const std::filesystem::path& store_path, const std::string& slide_id) {
  EmbeddingStoreReader r(store_path);
  return r.read(slide_id);
}

}  // namespace canvoi::wsi
