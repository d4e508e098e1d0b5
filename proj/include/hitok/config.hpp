#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hitok/arsr.hpp"
#include "hitok/pipeline.hpp"

namespace hitok {

struct CorpusConfig {
  int train_count = 32;
  int test_count = 8;
  std::uint64_t seed = 1;
};

struct ArTrainingConfig {
  ArConfig model;
  // CE and DPO weighted equally.
  TrainOptions train{.objective = {.dpo_weight = 1.0}};
  std::uint64_t seed = 0;  // parameter initialization
};

struct OutputConfig {
  std::filesystem::path dir = "out";
  std::filesystem::path codebook() const { return dir / "codebook.htcb"; }
  std::filesystem::path checkpoint() const { return dir / "model.htar"; }
  std::filesystem::path train_log() const { return dir / "train_log.jsonl"; }
};

// One experiment. Every field has a default, so "{}" is a valid config.
struct ExperimentConfig {
  ScaleSchedule schedule = ScaleSchedule::standard();
  CodebookTrainingOptions codebook;
  int codec_channels = 32;
  std::uint64_t codec_seed = 11;
  Degradation degradation;
  ArTrainingConfig ar;
  SamplingOptions sampling;
  CorpusConfig corpus;
  OutputConfig output;

  int image_side() const { return schedule.native() * PatchCodec::kPatch; }
  PatchCodec codec() const { return PatchCodec(codec_channels, codec_seed); }
  // AR model settings with vocab and widths tied to the codebook and codec.
  ArConfig ar_model() const;
  // Replaces every data, training and sampling seed with one derived from
  // `seed`. The codec seed is kept: the codec plays a fixed pretrained model.
  void reseed(std::uint64_t seed);
};

// Parses and validates; unknown keys are rejected. Relative output paths
// stay relative to the working directory.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& c);

}  // namespace hitok
