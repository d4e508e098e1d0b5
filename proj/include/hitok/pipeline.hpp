#pragma once

#include <cstdint>
#include <vector>

#include "hitok/hit.hpp"
#include "hitok/toycodec.hpp"

namespace hitok {

// Everything needed to map images to token sequences and back.
struct Tokenizer {
  ScaleSchedule schedule;
  PatchCodec codec;
  Codebook codebook;
  PhiBank phi;

  // Image side expected at the native latent resolution.
  int image_side() const { return schedule.native() * PatchCodec::kPatch; }
};

// Encodes the image resized (area) to every target scale.
MultiScaleFeatures multiscale_features(const Image& img, const PatchCodec& codec,
                                       const ScaleSchedule& schedule);

TokenSequence tokenize_image(const Image& img, const Tokenizer& tok, TokenMode mode);

// Decoded image at scale n (1-based); side = s_n * native * 16.
Image reconstruct_at_scale(const TokenSequence& t, int scale, const Tokenizer& tok,
                           ScaleDecode mode = ScaleDecode::Native);

// Ground-truth image at scale n: area resize of the native-resolution image.
Image reference_at_scale(const Image& img, const ScaleSchedule& schedule, int scale);

struct CodebookTrainingOptions {
  int size = 512;
  Metric metric = Metric::L2;
  std::uint64_t seed = 0;
  int epochs = 6;
  double decay = 0.95;
  TokenMode mode = TokenMode::Hierarchical;
  std::size_t max_init_samples = 20000;
  int lloyd_iterations = 8;
  // Give every scale group equal total weight in each update (the
  // per-scale losses are averaged separately, then summed).
  bool balance_scales = true;
};

struct CodebookEpoch {
  int epoch = 0;
  double mean_residual = 0.0;      // corpus mean of the per-scale final residual norms
  double relative_residual = 0.0;  // mean of residual / latent norm
  int dead_codes = 0;
};

struct CodebookTrainingReport {
  std::vector<CodebookEpoch> epochs;
  double initial_residual = 0.0;  // mean residual with the seeded codebook
  // Every epoch's mean residual within 1% of (or below) the previous one.
  bool monotone() const;
};

// k-means++ on residuals of an idealized pass, then EMA epochs over real
// encodings; codes unused for a whole epoch are re-seeded to the features
// farthest from their assigned code. The result is rounded to float32.
Codebook train_codebook(const std::vector<MultiScaleFeatures>& corpus, const ScaleSchedule& schedule,
                        const PhiBank& phi, const CodebookTrainingOptions& options,
                        CodebookTrainingReport* report = nullptr);

// Corpus mean of the per-scale final residual norms when encoding with `cb`.
double mean_encoding_residual(const std::vector<MultiScaleFeatures>& corpus, const ScaleSchedule& schedule,
                              const Codebook& cb, const PhiBank& phi, TokenMode mode);

}  // namespace hitok
