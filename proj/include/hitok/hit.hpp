#pragma once

#include <vector>

#include "hitok/msrq.hpp"

namespace hitok {

// Latents of the image encoded at every target scale, smallest first.
struct MultiScaleFeatures {
  std::vector<LatentGrid> per_scale;

  // Sizes must match the schedule's scale sides exactly.
  void check(const ScaleSchedule& schedule) const;
  // Scales 1..count only.
  MultiScaleFeatures truncated(int count) const;
};

// Hierarchical tokenization: each scale's latent is tokenized with the levels
// whose side fits it; levels already tokenized at a smaller scale are reused
// (only their contribution, recomputed at the current side, is subtracted).
TokenSequence encode_hierarchical(const MultiScaleFeatures& feats, const ScaleSchedule& schedule,
                                  const Codebook& cb, const PhiBank& phi, EncodeTrace* trace = nullptr);

enum class ScaleDecode {
  Native,          // upsample each level straight to the scale's side
  FullThenDown,    // accumulate at the native side, then area-downsample
};

// Latent for scale n (1-based) from the levels of groups 1..n.
LatentGrid decode_at_scale(const TokenSequence& t, int scale, const Codebook& cb, const PhiBank& phi,
                           ScaleDecode mode = ScaleDecode::Native);

// True iff every level in groups 1..n (1-based) is index-identical.
// `small` may come from a truncated schedule; its sides must agree with
// `full` over the compared prefix.
bool prefix_overlap_check(const TokenSequence& full, const TokenSequence& small, int scale);

}  // namespace hitok
