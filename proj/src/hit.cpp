#include "hitok/hit.hpp"

#include <string>

#include "quantize_steps.hpp"

namespace hitok {

void MultiScaleFeatures::check(const ScaleSchedule& schedule) const {
  require(static_cast<int>(per_scale.size()) == schedule.scales(),
          "MultiScaleFeatures: " + std::to_string(per_scale.size()) + " scales given, schedule has " +
              std::to_string(schedule.scales()));
  for (int n = 0; n < schedule.scales(); ++n) {
    const auto& g = per_scale[n];
    require(g.height() == schedule.scale_side(n) && g.width() == schedule.scale_side(n),
            "MultiScaleFeatures: scale " + std::to_string(n + 1) + " latent is " +
                std::to_string(g.height()) + "x" + std::to_string(g.width()) + ", expected side " +
                std::to_string(schedule.scale_side(n)));
  }
}

MultiScaleFeatures MultiScaleFeatures::truncated(int count) const {
  require(count >= 1 && count <= static_cast<int>(per_scale.size()), "truncated: scale count out of range");
  return {std::vector<LatentGrid>(per_scale.begin(), per_scale.begin() + count)};
}

TokenSequence encode_hierarchical(const MultiScaleFeatures& feats, const ScaleSchedule& schedule,
                                  const Codebook& cb, const PhiBank& phi, EncodeTrace* trace) {
  feats.check(schedule);
  TokenSequence t{schedule, static_cast<std::uint32_t>(cb.size()), TokenMode::Hierarchical, {}};
  for (int n = 0; n < schedule.scales(); ++n) {
    detail::tokenize_scale(feats.per_scale[n], schedule, schedule.group_last(n), n, cb, phi, t.levels,
                           trace);
  }
  return t;
}

LatentGrid decode_at_scale(const TokenSequence& t, int scale, const Codebook& cb, const PhiBank& phi,
                           ScaleDecode mode) {
  const auto& s = t.schedule;
  require(scale >= 1 && scale <= s.scales(),
          "decode_at_scale: scale " + std::to_string(scale) + " outside [1, " + std::to_string(s.scales()) + "]");
  const int last = s.group_last(scale - 1);
  const int side = s.scale_side(scale - 1);
  if (mode == ScaleDecode::FullThenDown) {
    return area_downsample(decode_accumulate(t, cb, phi, last + 1), {side, side});
  }
  LatentGrid acc(cb.dim(), side, side);
  for (int l = 0; l <= last; ++l) acc += level_contribution(t.levels[l], cb, phi.for_level(l), side);
  return acc;
}

bool prefix_overlap_check(const TokenSequence& full, const TokenSequence& small, int scale) {
  require(scale >= 1 && scale <= full.schedule.scales(), "prefix_overlap_check: scale out of range");
  const int last = full.schedule.group_last(scale - 1);
  require(last < small.schedule.levels() && last < static_cast<int>(small.levels.size()),
          "prefix_overlap_check: shorter sequence lacks the compared levels");
  for (int l = 0; l <= last; ++l)
    require(full.schedule.side(l) == small.schedule.side(l), "prefix_overlap_check: schedule mismatch");
  for (int l = 0; l <= last; ++l)
    if (!(full.levels[l] == small.levels[l])) return false;
  return true;
}

}  // namespace hitok
