#include "hitok/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <random>
#include <string>

namespace hitok {

MultiScaleFeatures multiscale_features(const Image& img, const PatchCodec& codec,
                                       const ScaleSchedule& schedule) {
  const int side = schedule.native() * PatchCodec::kPatch;
  require(img.height() == side && img.width() == side,
          "multiscale_features: image is " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
              ", schedule expects " + std::to_string(side) + "x" + std::to_string(side));
  MultiScaleFeatures feats;
  for (int n = 0; n < schedule.scales(); ++n) {
    const int s = schedule.scale_side(n) * PatchCodec::kPatch;
    feats.per_scale.push_back(codec.encode(s == side ? img : resize_area(img, s, s)));
  }
  return feats;
}

namespace {

TokenSequence encode_features(const MultiScaleFeatures& f, const ScaleSchedule& schedule, const Codebook& cb,
                              const PhiBank& phi, TokenMode mode, EncodeTrace* trace) {
  if (mode == TokenMode::Baseline) return encode_nextscale(f.per_scale.back(), schedule, cb, phi, trace);
  return encode_hierarchical(f, schedule, cb, phi, trace);
}

}  // namespace

TokenSequence tokenize_image(const Image& img, const Tokenizer& tok, TokenMode mode) {
  return encode_features(multiscale_features(img, tok.codec, tok.schedule), tok.schedule, tok.codebook, tok.phi,
                         mode, nullptr);
}

Image reconstruct_at_scale(const TokenSequence& t, int scale, const Tokenizer& tok, ScaleDecode mode) {
  return tok.codec.decode(decode_at_scale(t, scale, tok.codebook, tok.phi, mode));
}

Image reference_at_scale(const Image& img, const ScaleSchedule& schedule, int scale) {
  require(scale >= 1 && scale <= schedule.scales(), "reference_at_scale: scale out of range");
  const int side = schedule.scale_side(scale - 1) * PatchCodec::kPatch;
  if (side == img.height()) return img;
  return resize_area(img, side, side);
}

bool CodebookTrainingReport::monotone() const {
  for (std::size_t e = 1; e < epochs.size(); ++e)
    if (epochs[e].mean_residual > epochs[e - 1].mean_residual * 1.01) return false;
  return true;
}

namespace {

void append_cells(const LatentGrid& g, std::vector<std::vector<double>>& out) {
  for (int i = 0; i < g.height(); ++i)
    for (int j = 0; j < g.width(); ++j) out.push_back(g.cell(i, j));
}

// Level inputs under perfect quantization (each level removes exactly its
// downsampled residual); a cheap proxy for the residual distribution.
std::vector<std::vector<double>> idealized_pool(const std::vector<MultiScaleFeatures>& corpus,
                                                const ScaleSchedule& schedule, const PhiBank& phi,
                                                TokenMode mode) {
  std::vector<std::vector<double>> pool;
  for (const auto& f : corpus) {
    const int first_scale = mode == TokenMode::Baseline ? schedule.scales() - 1 : 0;
    int tokenized = 0;
    for (int n = first_scale; n < schedule.scales(); ++n) {
      const LatentGrid& z = f.per_scale[n];
      const int side = z.height();
      LatentGrid residual = z;
      const int last = mode == TokenMode::Baseline ? schedule.levels() - 1 : schedule.group_last(n);
      for (int l = 0; l <= last; ++l) {
        const int r = schedule.side(l);
        LatentGrid down = area_downsample(residual, {r, r});
        if (l >= tokenized) append_cells(down, pool);
        residual -= phi_refine(bicubic_upsample(down, {side, side}), phi.for_level(l));
      }
      tokenized = last + 1;
    }
  }
  return pool;
}

struct FarFeature {
  double distance;
  std::vector<double> vector;
  bool operator>(const FarFeature& o) const { return distance > o.distance; }
};

// Mean over scales of the residual left after each scale's last level; for the
// baseline this is the single native-scale residual.
double scale_mean_residual(const EncodeTrace& trace, int scales) {
  std::vector<double> last(scales, -1.0);
  for (std::size_t i = 0; i < trace.residual_after.size(); ++i) last[trace.residual_scale[i]] = trace.residual_after[i];
  double sum = 0.0;
  int n = 0;
  for (double v : last)
    if (v >= 0.0) {
      sum += v;
      ++n;
    }
  return sum / n;
}

}  // namespace

double mean_encoding_residual(const std::vector<MultiScaleFeatures>& corpus, const ScaleSchedule& schedule,
                              const Codebook& cb, const PhiBank& phi, TokenMode mode) {
  require(!corpus.empty(), "mean_encoding_residual: empty corpus");
  double total = 0.0;
  for (const auto& f : corpus) {
    EncodeTrace trace;
    encode_features(f, schedule, cb, phi, mode, &trace);
    total += scale_mean_residual(trace, schedule.scales());
  }
  return total / static_cast<double>(corpus.size());
}

Codebook train_codebook(const std::vector<MultiScaleFeatures>& corpus, const ScaleSchedule& schedule,
                        const PhiBank& phi, const CodebookTrainingOptions& options,
                        CodebookTrainingReport* report) {
  require(!corpus.empty(), "train_codebook: empty corpus");
  for (const auto& f : corpus) f.check(schedule);

  auto pool = idealized_pool(corpus, schedule, phi, options.mode);
  require(static_cast<int>(pool.size()) >= options.size,
          "train_codebook: corpus yields " + std::to_string(pool.size()) + " vectors, fewer than K=" +
              std::to_string(options.size));
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ull);
  if (pool.size() > options.max_init_samples) {
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::max<std::size_t>(options.max_init_samples, static_cast<std::size_t>(options.size)));
  }
  Codebook cb = init_codebook(pool, options.size, options.seed, {options.lloyd_iterations, options.metric});
  pool.clear();
  pool.shrink_to_fit();

  CodebookTrainingReport local;
  local.initial_residual = mean_encoding_residual(corpus, schedule, cb, phi, options.mode);

  EmaState state = EmaState::from(cb);
  const int dim = cb.dim();
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<std::size_t> usage(cb.size(), 0);
    // Min-heap of the K farthest features seen this epoch.
    std::priority_queue<FarFeature, std::vector<FarFeature>, std::greater<>> far;
    double residual_sum = 0.0, relative_sum = 0.0;
    for (const auto& f : corpus) {
      EncodeTrace trace;
      const TokenSequence t = encode_features(f, schedule, cb, phi, options.mode, &trace);
      residual_sum += scale_mean_residual(trace, schedule.scales());
      relative_sum += trace.residual_after.back() / std::max(1e-12, trace.latent_norm.back());

      std::vector<double> features;
      std::vector<std::uint32_t> indices;
      std::vector<double> weights;
      std::vector<double> group_cells(schedule.scales(), 0.0);
      double total_cells = 0.0;
      auto group_key = [&](int level) { return options.mode == TokenMode::Baseline ? 0 : schedule.group_of(level); };
      for (std::size_t q = 0; q < trace.quantized_levels.size(); ++q) {
        const double cells = static_cast<double>(trace.quantizer_inputs[q].plane_size());
        group_cells[group_key(trace.quantized_levels[q])] += cells;
        total_cells += cells;
      }
      const double groups = static_cast<double>(
          std::count_if(group_cells.begin(), group_cells.end(), [](double c) { return c > 0.0; }));
      for (std::size_t q = 0; q < trace.quantized_levels.size(); ++q) {
        const LatentGrid& in = trace.quantizer_inputs[q];
        const IndexGrid& idx = t.levels[trace.quantized_levels[q]];
        const double weight = options.balance_scales
                                  ? total_cells / (groups * group_cells[group_key(trace.quantized_levels[q])])
                                  : 1.0;
        for (int i = 0; i < in.height(); ++i)
          for (int j = 0; j < in.width(); ++j) {
            auto v = in.cell(i, j);
            const std::uint32_t k = idx.at(i, j);
            ++usage[k];
            double d2 = 0.0;
            auto r = cb.row(static_cast<int>(k));
            for (int c = 0; c < dim; ++c) d2 += (v[c] - r[c]) * (v[c] - r[c]);
            if (static_cast<int>(far.size()) < cb.size() || d2 > far.top().distance) {
              far.push({d2, v});
              if (static_cast<int>(far.size()) > cb.size()) far.pop();
            }
            features.insert(features.end(), v.begin(), v.end());
            indices.push_back(k);
            weights.push_back(weight);
          }
      }
      ema_update(cb, state, features, indices, options.decay, weights);
    }

    std::vector<std::vector<double>> candidates;
    while (!far.empty()) {
      candidates.push_back(far.top().vector);
      far.pop();
    }
    std::reverse(candidates.begin(), candidates.end());  // farthest first
    int dead = 0;
    for (int k = 0; k < cb.size(); ++k) {
      if (usage[k] != 0) continue;
      ++dead;
      if (static_cast<std::size_t>(dead) > candidates.size()) continue;
      const auto& v = candidates[dead - 1];
      cb.set_row(k, v);
      state.counts[k] = 1.0;
      auto r = cb.row(k);
      std::copy(r.begin(), r.end(), state.sums.begin() + static_cast<std::ptrdiff_t>(k) * dim);
    }
    const double count = static_cast<double>(corpus.size());
    local.epochs.push_back({epoch + 1, residual_sum / count, relative_sum / count, dead});
  }
  cb.round_to_float();
  if (report) *report = std::move(local);
  return cb;
}

}  // namespace hitok
