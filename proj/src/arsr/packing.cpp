#include "hitok/arsr.hpp"
#include "hitok/error.hpp"

namespace hitok {

LatentGrid conditioning_latent(const Image& lr, const PatchCodec& codec, int hr_side) {
  require(hr_side % PatchCodec::kPatch == 0, "conditioning_latent: HR side must be a multiple of 16");
  return codec.encode(resize_bilinear(lr, hr_side, hr_side));
}

Matrix grid_tokens(const LatentGrid& g) {
  Matrix m(static_cast<Eigen::Index>(g.plane_size()), g.channels());
  for (int i = 0; i < g.height(); ++i)
    for (int j = 0; j < g.width(); ++j)
      for (int c = 0; c < g.channels(); ++c) m(i * g.width() + j, c) = g.at(c, i, j);
  return m;
}

PackedBatch pack_sequence(const TokenSequence& t, const LatentGrid& cond, const Codebook& cb, const PhiBank& phi,
                          int level_count) {
  const ScaleSchedule& s = t.schedule;
  if (level_count < 0) level_count = s.levels();
  require(level_count >= 1 && level_count <= s.levels(), "pack_sequence: level count out of range");
  require(static_cast<int>(t.levels.size()) >= level_count - 1,
          "pack_sequence: token sequence is missing levels needed as inputs");
  for (std::size_t l = 0; l < t.levels.size() && static_cast<int>(l) < level_count; ++l)
    require(t.levels[l].rows == s.side(static_cast<int>(l)) && t.levels[l].cols == s.side(static_cast<int>(l)),
            "pack_sequence: level grid does not match the schedule");
  require(cb.dim() > 0, "pack_sequence: empty codebook");
  require(cond.empty() || cond.channels() == cb.dim(), "pack_sequence: conditioning width differs from code width");

  PackedBatch b;
  b.cond = cond.empty() ? Matrix(0, cb.dim()) : grid_tokens(cond);
  std::size_t total = 0;
  b.offsets.push_back(0);
  for (int l = 0; l < level_count; ++l) {
    b.sides.push_back(s.side(l));
    total += static_cast<std::size_t>(s.side(l)) * s.side(l);
    b.offsets.push_back(total);
  }
  b.inputs = Matrix::Zero(static_cast<Eigen::Index>(total), cb.dim());
  b.targets.assign(total, 0);

  const int native = s.native();
  LatentGrid acc(cb.dim(), native, native);
  for (int l = 0; l < level_count; ++l) {
    const Eigen::Index off = static_cast<Eigen::Index>(b.offsets[l]);
    const int r = s.side(l);
    if (l == 0) {
      if (b.cond.rows() > 0) b.inputs.middleRows(off, r * r).rowwise() = b.cond.colwise().mean();
    } else {
      acc += level_contribution(t.levels[l - 1], cb, phi.for_level(l - 1), native);
      b.inputs.middleRows(off, r * r) = grid_tokens(area_downsample(acc, {r, r}));
    }
    if (l < static_cast<int>(t.levels.size()))
      std::copy(t.levels[l].values.begin(), t.levels[l].values.end(), b.targets.begin() + off);
  }
  return b;
}

}  // namespace hitok
