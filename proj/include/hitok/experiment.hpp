#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hitok/arsr.hpp"
#include "hitok/config.hpp"

namespace hitok {

std::vector<Image> training_images(const ExperimentConfig& c);
std::vector<Image> test_images(const ExperimentConfig& c);

Codebook train_codebook_for(const ExperimentConfig& c, const std::vector<Image>& images,
                            CodebookTrainingReport* report = nullptr);

// Degradation of image `index` in a corpus: the configured one with a
// per-image seed.
Degradation degradation_for(const Degradation& base, std::size_t index);

// An HR/LR pair and everything the AR model consumes for it.
struct SrExample {
  Image hr;
  Image lr;
  LatentGrid cond;
  TokenSequence hr_tokens;
  TokenSequence lr_tokens;  // upsampled LR tokenized hierarchically
  ArSample sample;
};

SrExample make_sr_example(const Image& hr, const Image& lr, const Tokenizer& tok);
std::vector<SrExample> make_sr_examples(const std::vector<Image>& hr, const Degradation& degradation,
                                        const Tokenizer& tok);
std::vector<ArSample> ar_samples(const std::vector<SrExample>& examples);

struct SrOutput {
  TokenSequence tokens;
  std::vector<Image> scales;  // one image per target scale, smallest first
};

// One sampling pass, decoded at every scale.
SrOutput super_resolve(const ArModel& m, const Tokenizer& tok, const Image& lr, const SamplingOptions& o);

struct SweepRow {
  ScaleSchedule schedule;
  std::size_t token_count = 0;
  std::vector<double> psnr;  // mean PSNR per target scale, smallest first
  double full_psnr() const { return psnr.back(); }
};

// The schedules that keep the resolution list and use the last k target
// scales, for k = 1..N.
std::vector<ScaleSchedule> scale_partitions(const ScaleSchedule& s);

// HIT reconstruction quality of each schedule with one codebook.
std::vector<SweepRow> sweep_allocation(const std::vector<ScaleSchedule>& schedules, const PatchCodec& codec,
                                       const Codebook& cb, const PhiBank& phi, const std::vector<Image>& images);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace hitok
