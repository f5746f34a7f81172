#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "canvoi/core/binary_io.hpp"
#include "canvoi/nn/param_set.hpp"
#include "canvoi/vit/config.hpp"

namespace canvoi::ckpt {

// Model container, little-endian:
//   "CVCK"  u32 version
//   u32 config_len, config_len bytes of UTF-8 JSON (the config record)
//   u32 tensor_count
//   per tensor: u32 name_len, name, u32 ndim, u64 dims[ndim], f32 data[prod(dims)]
inline constexpr char kMagic[4] = {'C', 'V', 'C', 'K'};
inline constexpr std::uint32_t kVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  nlohmann::json config;
  std::vector<NamedTensor> tensors;

  const NamedTensor& tensor(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw NotFoundError("checkpoint has no tensor " + name);
  }
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline std::vector<char> serialize(const Checkpoint& ck) {
  io::ByteWriter w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.str(ck.config.dump());
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    std::uint64_t n = 1;
    for (auto s : t.shape) {
      w.u64(s);
      n *= s;
    }
    if (n != t.data.size())
      throw DimensionError("tensor " + t.name + " shape does not match its data length");
    w.f32s(t.data);
  }
  return w.buffer();
}

inline Checkpoint deserialize(std::span<const char> bytes) {
  io::ByteReader r(bytes);
  const std::string magic = r.bytes(4);
  if (magic != std::string_view(kMagic, 4)) throw FormatError("bad checkpoint magic", 0);
  const auto version_at = r.offset();
  const auto version = r.u32();
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  Checkpoint ck;
  const auto cfg_at = r.offset();
  const std::string cfg = r.str(1u << 24);
  try {
    ck.config = nlohmann::json::parse(cfg);
  } catch (const nlohmann::json::exception&) {
    throw FormatError("config record is not valid JSON", cfg_at);
  }
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str();
    const auto ndim_at = r.offset();
    const auto ndim = r.u32();
    if (ndim > 8) throw FormatError("implausible tensor rank", ndim_at);
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < ndim; ++k) {
      t.shape.push_back(r.u64());
      n *= t.shape.back();
    }
    if (n * sizeof(float) > r.remaining()) throw FormatError("tensor " + t.name + " truncated", r.offset());
    t.data.resize(n);
    r.f32s(t.data);
    ck.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.offset());
  return ck;
}

inline void save(const std::filesystem::path& path, const Checkpoint& ck) {
  io::write_file_atomic(path, serialize(ck));
}

inline Checkpoint load(const std::filesystem::path& path) { return deserialize(io::read_file(path)); }

template <class T>
void append_params(Checkpoint& ck, const nn::ParamSet<T>& params, const std::string& prefix = "") {
  for (const auto& p : params) {
    NamedTensor t;
    t.name = prefix + p.name;
    t.shape = {p.value.rows(), p.value.cols()};
    t.data.resize(p.value.size());
    for (std::size_t i = 0; i < p.value.size(); ++i) t.data[i] = static_cast<float>(p.value[i]);
    ck.tensors.push_back(std::move(t));
  }
}

// Fills every parameter from the checkpoint; shapes must agree exactly.
template <class T>
void load_params(const Checkpoint& ck, nn::ParamSet<T>& params, const std::string& prefix = "") {
  for (auto& p : params) {
    const auto& t = ck.tensor(prefix + p.name);
    if (t.shape.size() != 2 || t.shape[0] != p.value.rows() || t.shape[1] != p.value.cols())
      throw DataError("checkpoint tensor " + t.name + " has wrong shape for " + p.value.shape_string());
    for (std::size_t i = 0; i < t.data.size(); ++i) p.value[i] = T(t.data[i]);
  }
}

inline nlohmann::json to_json(const vit::EncoderConfig& c) {
  return {{"tile_px", c.tile_px}, {"patch_px", c.patch_px}, {"depth", c.depth}, {"width", c.width},
          {"heads", c.heads},     {"mlp_ratio", c.mlp_ratio}, {"channels", c.channels}};
}

inline vit::EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  vit::EncoderConfig c;
  c.tile_px = j.at("tile_px").get<int>();
  c.patch_px = j.at("patch_px").get<int>();
  c.depth = j.at("depth").get<int>();
  c.width = j.at("width").get<int>();
  c.heads = j.at("heads").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<double>();
  c.channels = j.value("channels", 3);
  c.validate();
  return c;
}

}  // namespace canvoi::ckpt
