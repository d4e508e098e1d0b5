#pragma once

#include <vector>

#include "hitok/codebook.hpp"
#include "hitok/grid.hpp"
#include "hitok/schedule.hpp"

namespace hitok {

// The refinement convolution(s) applied after upsampling each level:
// either one shared kernel or one per level.
class PhiBank {
 public:
  PhiBank() = default;
  static PhiBank shared(PhiParams phi);
  static PhiBank per_level(std::vector<PhiParams> phis);
  static PhiBank identity(int channels) { return shared(PhiParams::identity(channels)); }

  const PhiParams& for_level(int level) const;
  int channels() const { return phis_.empty() ? 0 : phis_.front().channels; }
  bool is_shared() const { return phis_.size() == 1; }

 private:
  std::vector<PhiParams> phis_;
};

// A level's contribution: phi(bicubic(embed(indices), side x side)).
LatentGrid level_contribution(const IndexGrid& indices, const Codebook& cb, const PhiParams& phi,
                              int side);

// Optional per-level diagnostics filled by the encoders.
struct EncodeTrace {
  // The downsampled residual fed to the quantizer, per quantized level.
  std::vector<LatentGrid> quantizer_inputs;
  std::vector<int> quantized_levels;
  // Residual norm against the working latent after every processed level,
  // tagged with the scale that level was processed under.
  std::vector<double> residual_after;
  std::vector<int> residual_level;
  std::vector<int> residual_scale;
  // Residual norm on entry to each scale's first new level (after reused
  // levels have been subtracted).
  std::vector<double> group_entry;
  // Norm of each scale's working latent before any subtraction.
  std::vector<double> latent_norm;
};

// Next-scale residual quantization of one native-resolution latent.
TokenSequence encode_nextscale(const LatentGrid& z, const ScaleSchedule& schedule, const Codebook& cb,
                               const PhiBank& phi, EncodeTrace* trace = nullptr);

// Sum of the first `level_count` contributions at the native side (1-based count).
LatentGrid decode_accumulate(const TokenSequence& t, const Codebook& cb, const PhiBank& phi,
                             int level_count);

// ||z - decode_accumulate(t, l)|| for l = 1..L.
std::vector<double> residual_norms(const LatentGrid& z, const TokenSequence& t, const Codebook& cb,
                                   const PhiBank& phi);

}  // namespace hitok
