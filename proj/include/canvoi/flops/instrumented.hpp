#pragma once

#include <cstdint>

#include "canvoi/flops/analytic.hpp"
#include "canvoi/nn/counting.hpp"
#include "canvoi/vit/encoder.hpp"

namespace canvoi::flops {

struct InstrumentedCount {
  FlopsBreakdown breakdown;
  std::uint64_t unattributed = 0;  // anything counted outside a tagged region
};

// Runs one real forward pass over the counting scalar and reads the ledger.
// Only the default convention is observable this way.
inline InstrumentedCount instrumented_count(const vit::EncoderConfig& c, std::uint64_t seed = 0) {
  using nn::FlopTag;
  using S = nn::Counted<double>;
  const vit::EncoderModel<S> model(c, seed);
  vit::Image<S> img(c.tile_px, c.channels);
  Rng rng(seed, "flops_input");
  for (auto& v : img.data) v = S(rng.uniform());

  nn::FlopCountingScope scope;
  (void)model.encode(img);
  const auto& l = nn::FlopLedger::instance();
  auto at = [&](FlopTag t) { return l.by_tag[static_cast<std::size_t>(t)]; };
  InstrumentedCount out;
  auto& b = out.breakdown;
  b.tokens = static_cast<std::uint64_t>(c.tokens());
  b.patch_projection = at(FlopTag::patch_projection);
  b.position = at(FlopTag::position);
  b.norms = at(FlopTag::norms);
  b.qkv = at(FlopTag::qkv);
  b.attention_scores = at(FlopTag::attention_scores);
  b.softmax = at(FlopTag::softmax);
  b.attention_apply = at(FlopTag::attention_apply);
  b.output_projection = at(FlopTag::output_projection);
  b.mlp = at(FlopTag::mlp);
  b.activation = at(FlopTag::activation);
  b.residual = at(FlopTag::residual);
  b.head = at(FlopTag::head);
  out.unattributed = at(FlopTag::other);
  return out;
}

inline FlopsBreakdown instrumented_flops(const vit::EncoderConfig& c, std::uint64_t seed = 0) {
  return instrumented_count(c, seed).breakdown;
}

}  // namespace canvoi::flops
