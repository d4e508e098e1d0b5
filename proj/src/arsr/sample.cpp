#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hitok/arsr.hpp"
#include "hitok/error.hpp"

namespace hitok {

namespace {

std::uint32_t argmax(const Matrix& logits, Eigen::Index row) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < logits.cols(); ++k)
    if (logits(row, k) > logits(row, best)) best = k;
  return static_cast<std::uint32_t>(best);
}

std::uint32_t draw_top_k(const Matrix& logits, Eigen::Index row, int k, std::mt19937_64& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(logits.cols()));
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      return logits(row, a) > logits(row, b) || (logits(row, a) == logits(row, b) && a < b);
                    });
  const double mx = logits(row, idx[0]);
  std::vector<double> w(keep);
  for (std::size_t i = 0; i < keep; ++i) w[i] = std::exp(logits(row, idx[i]) - mx);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  return static_cast<std::uint32_t>(idx[pick(rng)]);
}

}  // namespace

TokenSequence sample_nextscale(const ArModel& m, const LatentGrid& cond, const Codebook& cb, const PhiBank& phi,
                               const SamplingOptions& o) {
  require(cb.size() == m.config().vocab, "sample_nextscale: codebook size differs from model vocab");
  require(o.strategy == SampleStrategy::Greedy || o.top_k >= 1, "sample_nextscale: top_k must be positive");
  const ScaleSchedule& s = m.schedule();
  TokenSequence t;
  t.schedule = s;
  t.vocab = static_cast<std::uint32_t>(cb.size());
  t.mode = TokenMode::Hierarchical;
  std::mt19937_64 rng(o.seed);
  for (int l = 0; l < s.levels(); ++l) {
    const PackedBatch b = pack_sequence(t, cond, cb, phi, l + 1);
    const Matrix logits = m.forward(b);
    const int r = s.side(l);
    IndexGrid g(r, r);
    const Eigen::Index off = static_cast<Eigen::Index>(b.offsets[l]);
    for (int i = 0; i < r * r; ++i)
      g.values[i] = o.strategy == SampleStrategy::Greedy ? argmax(logits, off + i)
                                                          : draw_top_k(logits, off + i, o.top_k, rng);
    t.levels.push_back(std::move(g));
  }
  t.validate();
  return t;
}

}  // namespace hitok
