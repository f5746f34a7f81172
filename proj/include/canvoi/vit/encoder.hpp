#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "canvoi/core/rng.hpp"
#include "canvoi/nn/attention.hpp"
#include "canvoi/nn/counting.hpp"
#include "canvoi/nn/ops.hpp"
#include "canvoi/nn/param_set.hpp"
#include "canvoi/vit/config.hpp"
#include "canvoi/vit/patchify.hpp"
#include "canvoi/vit/pos_embed.hpp"

namespace canvoi::vit {

inline constexpr double kLayerNormEps = 1e-6;

// Pre-norm ViT: patch projection, class token, learned position table (resampled
// for other input grids), `depth` blocks of norm->attention->residual and
// norm->MLP->residual, final norm read out at the class token.
template <class T>
class EncoderModel {
 public:
  struct BlockIndex {
    std::size_t norm1_w, norm1_b, qkv_w, qkv_b, proj_w, proj_b, norm2_w, norm2_b, fc1_w, fc1_b,
        fc2_w, fc2_b;
  };

  struct BlockCache {
    nn::LayerNormCache<T> norm1;
    nn::AttentionCache<T> attn;
    nn::LayerNormCache<T> norm2;
    nn::Tensor2D<T> mlp_in;
    nn::Tensor2D<T> mlp_pre;
    nn::Tensor2D<T> mlp_act;
  };

  struct Cache {
    nn::Tensor2D<T> patches;
    int grid = 0;
    std::vector<BlockCache> blocks;
    nn::LayerNormCache<T> final_norm;
  };

  EncoderModel() = default;

  // Parameters laid out but zero-valued.
  explicit EncoderModel(const EncoderConfig& config) : config_(config) {
    config_.validate();
    build();
  }

  EncoderModel(const EncoderConfig& config, std::uint64_t seed) : EncoderModel(config) {
    initialize(seed);
  }

  // Truncated normal (0.02) for projections, class token and position table;
  // zero biases; unit norm gains.
  void initialize(std::uint64_t seed) {
    Rng rng(seed, "encoder_init");
    for (auto& p : params_) {
      const auto& n = p.name;
      const bool is_norm = n.find("norm") != std::string::npos;
      const bool is_bias = n.size() >= 4 && n.compare(n.size() - 4, 4, "bias") == 0;
      if (is_norm && !is_bias) {
        p.value.fill(T(1));
      } else if (is_bias) {
        p.value.fill(T(0));
      } else {
        nn::init_truncated_normal(p.value, rng, 0.02);
      }
    }
  }

  const EncoderConfig& config() const { return config_; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }
  int pos_grid() const { return grid_side_of(params_.at(pos_).value.rows()); }

  std::vector<T> encode(const Image<T>& img) const { return run(img, nullptr); }

  std::vector<T> encode(const Raster& r) const {
    return encode(to_image<T>(r));
  }

  std::vector<T> forward(const Image<T>& img, Cache& cache) const { return run(img, &cache); }

  // Embeddings of a batch, one row per image; samples never interact.
  nn::Tensor2D<T> encode_batch(const std::vector<Image<T>>& images) const {
    nn::Tensor2D<T> out(images.size(), static_cast<std::size_t>(config_.width));
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto e = encode(images[i]);
      std::copy(e.begin(), e.end(), out.row(i).begin());
    }
    return out;
  }

  // Accumulates d(loss)/d(params) for one forward given d(loss)/d(embedding).
  void backward(const Cache& cache, std::span<const T> d_embed) {
    const std::size_t d = static_cast<std::size_t>(config_.width);
    const std::size_t n = cache.patches.rows() + 1;
    auto& P = params_;

    nn::Tensor2D<T> dcls(1, d);
    for (std::size_t c = 0; c < d; ++c) dcls[c] = d_embed[c];
    dcls = nn::layer_norm_backward(cache.final_norm, P.at(norm_w_).value, dcls, P.at(norm_w_).grad,
                                   P.at(norm_b_).grad);
    nn::Tensor2D<T> dx(n, d);
    for (std::size_t c = 0; c < d; ++c) dx(0, c) = dcls[c];

    for (std::size_t b = blocks_.size(); b-- > 0;) {
      const auto& bi = blocks_[b];
      const auto& bc = cache.blocks[b];
      // MLP branch
      nn::Tensor2D<T> dact = nn::dense_affine_backward(bc.mlp_act, P.at(bi.fc2_w).value, dx,
                                                       P.at(bi.fc2_w).grad, P.at(bi.fc2_b).grad);
      nn::Tensor2D<T> dpre = nn::gelu_backward(bc.mlp_pre, dact);
      nn::Tensor2D<T> dln2 = nn::dense_affine_backward(bc.mlp_in, P.at(bi.fc1_w).value, dpre,
                                                       P.at(bi.fc1_w).grad, P.at(bi.fc1_b).grad);
      nn::Tensor2D<T> dh = nn::layer_norm_backward(bc.norm2, P.at(bi.norm2_w).value, dln2,
                                                   P.at(bi.norm2_w).grad, P.at(bi.norm2_b).grad);
      nn::add_inplace(dh, dx);
      // attention branch
      const nn::AttentionWeights<T> w{P.at(bi.qkv_w).value, P.at(bi.qkv_b).value,
                                      P.at(bi.proj_w).value, P.at(bi.proj_b).value};
      const nn::AttentionGrads<T> g{P.at(bi.qkv_w).grad, P.at(bi.qkv_b).grad, P.at(bi.proj_w).grad,
                                    P.at(bi.proj_b).grad};
      nn::Tensor2D<T> dln1 =
          nn::multi_head_attention_backward(bc.attn, w, g, static_cast<std::size_t>(config_.heads), dh);
      dx = nn::layer_norm_backward(bc.norm1, P.at(bi.norm1_w).value, dln1, P.at(bi.norm1_w).grad,
                                   P.at(bi.norm1_b).grad);
      nn::add_inplace(dx, dh);
    }

    // token assembly: row 0 = cls + pos[0], rows 1.. = patch_proj + pos[1..]
    auto& dclsp = P.at(cls_).grad;
    for (std::size_t c = 0; c < d; ++c) dclsp[c] += dx(0, c);
    interpolate_pos_embed_backward(dx, pos_grid(), P.at(pos_).grad);
    nn::Tensor2D<T> dpatch(n - 1, d);
    std::copy(dx.flat().begin() + static_cast<std::ptrdiff_t>(d), dx.flat().end(), dpatch.flat().begin());
    nn::dense_affine_backward(cache.patches, P.at(patch_w_).value, dpatch, P.at(patch_w_).grad,
                              P.at(patch_b_).grad, /*need_dx=*/false);
  }

  // Re-targets the stored position grid to a new tile size (progressive
  // resolution). Every other parameter is left untouched.
  void resample_position_grid(int tile_px) {
    EncoderConfig next = config_;
    next.tile_px = tile_px;
    next.validate();
    auto table = interpolate_pos_embed(params_.at(pos_).value, next.grid());
    params_.replace("pos_embed", std::move(table));
    config_ = next;
  }

 private:
  void build() {
    const std::size_t d = static_cast<std::size_t>(config_.width);
    const std::size_t h = static_cast<std::size_t>(config_.mlp_hidden());
    const std::size_t g = static_cast<std::size_t>(config_.grid());
    auto add = [&](const std::string& name, std::size_t r, std::size_t c) {
      params_.add(name, r, c);
      return params_.size() - 1;
    };
    patch_w_ = add("patch_embed.weight", static_cast<std::size_t>(config_.patch_dim()), d);
    patch_b_ = add("patch_embed.bias", 1, d);
    cls_ = add("cls_token", 1, d);
    pos_ = add("pos_embed", g * g + 1, d);
    blocks_.clear();
    for (int b = 0; b < config_.depth; ++b) {
      const std::string p = "blocks." + std::to_string(b) + ".";
      BlockIndex bi{};
      bi.norm1_w = add(p + "norm1.weight", 1, d);
      bi.norm1_b = add(p + "norm1.bias", 1, d);
      bi.qkv_w = add(p + "attn.qkv.weight", d, 3 * d);
      bi.qkv_b = add(p + "attn.qkv.bias", 1, 3 * d);
      bi.proj_w = add(p + "attn.proj.weight", d, d);
      bi.proj_b = add(p + "attn.proj.bias", 1, d);
      bi.norm2_w = add(p + "norm2.weight", 1, d);
      bi.norm2_b = add(p + "norm2.bias", 1, d);
      bi.fc1_w = add(p + "mlp.fc1.weight", d, h);
      bi.fc1_b = add(p + "mlp.fc1.bias", 1, h);
      bi.fc2_w = add(p + "mlp.fc2.weight", h, d);
      bi.fc2_b = add(p + "mlp.fc2.bias", 1, d);
      blocks_.push_back(bi);
    }
    norm_w_ = add("norm.weight", 1, d);
    norm_b_ = add("norm.bias", 1, d);
  }

  std::vector<T> run(const Image<T>& img, Cache* cache) const {
    using nn::FlopRegion;
    using nn::FlopTag;
    if (img.side <= 0 || img.side % config_.patch_px != 0)
      throw DimensionError("geometry error: image side " + std::to_string(img.side) +
                           " is not divisible by patch " + std::to_string(config_.patch_px));
    if (img.channels != config_.channels)
      throw DimensionError("image has " + std::to_string(img.channels) + " channels, encoder expects " +
                           std::to_string(config_.channels));
    const auto& P = params_;
    const std::size_t d = static_cast<std::size_t>(config_.width);
    const int grid = img.side / config_.patch_px;
    const std::size_t n = static_cast<std::size_t>(grid) * grid + 1;

    nn::Tensor2D<T> patches = patchify(img, config_.patch_px);
    nn::Tensor2D<T> proj;
    {
      FlopRegion r(FlopTag::patch_projection);
      proj = nn::dense_affine(patches, P.at(patch_w_).value, P.at(patch_b_).value);
    }
    const nn::Tensor2D<T> pos = interpolate_pos_embed(P.at(pos_).value, grid);
    nn::Tensor2D<T> x(n, d);
    {
      FlopRegion r(FlopTag::position);
      const auto& cls = P.at(cls_).value;
      for (std::size_t c = 0; c < d; ++c) x(0, c) = cls[c] + pos(0, c);
      for (std::size_t i = 1; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) x(i, c) = proj(i - 1, c) + pos(i, c);
    }

    if (cache) {
      cache->patches = std::move(patches);
      cache->grid = grid;
      cache->blocks.assign(blocks_.size(), BlockCache{});
    }
    const T eps = T(kLayerNormEps);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const auto& bi = blocks_[b];
      BlockCache* bc = cache ? &cache->blocks[b] : nullptr;
      nn::Tensor2D<T> ln1;
      {
        FlopRegion r(FlopTag::norms);
        ln1 = nn::layer_norm(x, P.at(bi.norm1_w).value, P.at(bi.norm1_b).value, eps,
                             bc ? &bc->norm1 : nullptr);
      }
      const nn::AttentionWeights<T> w{P.at(bi.qkv_w).value, P.at(bi.qkv_b).value,
                                      P.at(bi.proj_w).value, P.at(bi.proj_b).value};
      nn::Tensor2D<T> a = nn::multi_head_attention(ln1, w, static_cast<std::size_t>(config_.heads),
                                                   bc ? &bc->attn : nullptr);
      {
        FlopRegion r(FlopTag::residual);
        nn::add_inplace(a, x);
      }
      x = std::move(a);  // h = x + attn(ln1(x))

      nn::Tensor2D<T> ln2;
      {
        FlopRegion r(FlopTag::norms);
        ln2 = nn::layer_norm(x, P.at(bi.norm2_w).value, P.at(bi.norm2_b).value, eps,
                             bc ? &bc->norm2 : nullptr);
      }
      nn::Tensor2D<T> pre, act, out;
      {
        FlopRegion r(FlopTag::mlp);
        pre = nn::dense_affine(ln2, P.at(bi.fc1_w).value, P.at(bi.fc1_b).value);
      }
      {
        FlopRegion r(FlopTag::activation);
        act = nn::gelu(pre);
      }
      {
        FlopRegion r(FlopTag::mlp);
        out = nn::dense_affine(act, P.at(bi.fc2_w).value, P.at(bi.fc2_b).value);
      }
      {
        FlopRegion r(FlopTag::residual);
        nn::add_inplace(out, x);
      }
      if (bc) {
        bc->mlp_in = std::move(ln2);
        bc->mlp_pre = std::move(pre);
        bc->mlp_act = std::move(act);
      }
      x = std::move(out);
    }

    nn::Tensor2D<T> cls_row(1, d);
    std::copy(x.row(0).begin(), x.row(0).end(), cls_row.flat().begin());
    nn::Tensor2D<T> y;
    {
      FlopRegion r(FlopTag::norms);
      y = nn::layer_norm(cls_row, P.at(norm_w_).value, P.at(norm_b_).value, eps,
                         cache ? &cache->final_norm : nullptr);
    }
    return y.storage();
  }

  EncoderConfig config_;
  nn::ParamSet<T> params_;
  std::size_t patch_w_ = 0, patch_b_ = 0, cls_ = 0, pos_ = 0, norm_w_ = 0, norm_b_ = 0;
  std::vector<BlockIndex> blocks_;
};

// Builds a model of another scalar type with identical parameter values.
template <class To, class From>
EncoderModel<To> convert_model(const EncoderModel<From>& src) {
  EncoderModel<To> out(src.config());
  for (std::size_t i = 0; i < src.params().size(); ++i)
    out.params().at(i).value = nn::cast<To>(src.params().at(i).value);
  return out;
}

}  // namespace canvoi::vit
