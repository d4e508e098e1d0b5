#include "hitok/msrq.hpp"

#include <string>

#include "quantize_steps.hpp"

namespace hitok {

PhiBank PhiBank::shared(PhiParams phi) {
  PhiBank b;
  b.phis_.push_back(std::move(phi));
  return b;
}

PhiBank PhiBank::per_level(std::vector<PhiParams> phis) {
  require(!phis.empty(), "PhiBank: no kernels");
  for (const auto& p : phis) require(p.channels == phis.front().channels, "PhiBank: channel mismatch");
  PhiBank b;
  b.phis_ = std::move(phis);
  return b;
}

const PhiParams& PhiBank::for_level(int level) const {
  require(!phis_.empty(), "PhiBank: empty");
  if (phis_.size() == 1) return phis_.front();
  require(level >= 0 && level < static_cast<int>(phis_.size()), "PhiBank: level out of range");
  return phis_[level];
}

LatentGrid level_contribution(const IndexGrid& indices, const Codebook& cb, const PhiParams& phi,
                              int side) {
  return phi_refine(bicubic_upsample(embed(indices, cb), {side, side}), phi);
}

TokenSequence encode_nextscale(const LatentGrid& z, const ScaleSchedule& schedule, const Codebook& cb,
                               const PhiBank& phi, EncodeTrace* trace) {
  require(z.height() == schedule.native() && z.width() == schedule.native(),
          "encode_nextscale: latent is " + std::to_string(z.height()) + "x" + std::to_string(z.width()) +
              ", schedule native side is " + std::to_string(schedule.native()));
  TokenSequence t{schedule, static_cast<std::uint32_t>(cb.size()), TokenMode::Baseline, {}};
  detail::tokenize_scale(z, schedule, schedule.levels() - 1, schedule.scales() - 1, cb, phi, t.levels,
                         trace);
  return t;
}

LatentGrid decode_accumulate(const TokenSequence& t, const Codebook& cb, const PhiBank& phi,
                             int level_count) {
  require(level_count >= 1 && level_count <= t.schedule.levels(),
          "decode_accumulate: level count " + std::to_string(level_count) + " outside [1, " +
              std::to_string(t.schedule.levels()) + "]");
  const int side = t.schedule.native();
  LatentGrid acc(cb.dim(), side, side);
  for (int l = 0; l < level_count; ++l) acc += level_contribution(t.levels[l], cb, phi.for_level(l), side);
  return acc;
}

std::vector<double> residual_norms(const LatentGrid& z, const TokenSequence& t, const Codebook& cb,
                                   const PhiBank& phi) {
  const int side = t.schedule.native();
  require(z.height() == side && z.width() == side, "residual_norms: latent size mismatch");
  std::vector<double> out;
  LatentGrid residual = z;
  for (int l = 0; l < t.schedule.levels(); ++l) {
    residual -= level_contribution(t.levels[l], cb, phi.for_level(l), side);
    out.push_back(frobenius_norm(residual));
  }
  return out;
}

}  // namespace hitok
