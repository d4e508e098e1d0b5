#pragma once

#include <vector>

#include "hitok/msrq.hpp"

namespace hitok::detail {

// Tokenizes one working latent with levels 0..last_level. Levels already
// present in `levels` are reused; the rest are quantized from the
// area-downsampled residual and appended. Shared by the baseline and the
// hierarchical encoder so a single-scale schedule runs identical arithmetic.
inline void tokenize_scale(const LatentGrid& latent, const ScaleSchedule& schedule, int last_level,
                           int scale, const Codebook& cb, const PhiBank& phi,
                           std::vector<IndexGrid>& levels, EncodeTrace* trace) {
  require(latent.channels() == cb.dim(), "tokenize: latent channels do not match codebook dim");
  require(latent.height() == latent.width(), "tokenize: square latents only");
  const int side = latent.height();
  LatentGrid residual = latent;
  if (trace) trace->latent_norm.push_back(frobenius_norm(residual));
  bool entered = false;
  for (int l = 0; l <= last_level; ++l) {
    const int r = schedule.side(l);
    if (l >= static_cast<int>(levels.size())) {
      if (trace && !entered) trace->group_entry.push_back(frobenius_norm(residual));
      entered = true;
      LatentGrid down = area_downsample(residual, {r, r});
      levels.push_back(assign_grid(down, cb));
      if (trace) {
        trace->quantizer_inputs.push_back(std::move(down));
        trace->quantized_levels.push_back(l);
      }
    }
    residual -= level_contribution(levels[l], cb, phi.for_level(l), side);
    if (trace) {
      trace->residual_after.push_back(frobenius_norm(residual));
      trace->residual_level.push_back(l);
      trace->residual_scale.push_back(scale);
    }
  }
}

}  // namespace hitok::detail
