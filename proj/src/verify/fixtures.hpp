#pragma once

#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>

#include "hitok/experiment.hpp"
#include "hitok/verify.hpp"

namespace hitok::verify::detail {

// Default-schedule setup shared by several criteria: K = 512 codebook
// trained on 32 synthetic 512x512 images, 20 more for evaluation.
struct TrainedSetup {
  ExperimentConfig config;
  PatchCodec codec;
  Codebook codebook;
  PhiBank phi;
  std::vector<Image> test;
  CodebookTrainingReport report;
};

const TrainedSetup& trained_setup();

// The reduced toy schedule used by the end-to-end criteria.
ScaleSchedule toy_schedule();

template <typename... Args>
std::string format(const char* fmt, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

LatentGrid random_latent(int channels, int side, double sigma, std::mt19937_64& rng);

}  // namespace hitok::verify::detail
