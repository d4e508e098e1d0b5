#include <doctest.h>

#include <json.hpp>

#include "hitok/config.hpp"
#include "hitok/error.hpp"
#include "hitok/experiment.hpp"
#include "oracles.hpp"

using namespace hitok;

namespace {

ExperimentConfig small_config() {
  return parse_config(R"({
    "schedule": {"resolutions": [1, 2, 4], "scales": [0.5, 1.0]},
    "codec": {"channels": 8, "seed": 3},
    "codebook": {"size": 16, "dim": 8, "seed": 5, "epochs": 3},
    "corpus": {"train_count": 6, "test_count": 2, "seed": 9}
  })");
}

}  // namespace

TEST_CASE("empty config yields the defaults") {
  const ExperimentConfig c = parse_config("{}");
  CHECK(c.schedule == ScaleSchedule::standard());
  CHECK(c.image_side() == 512);
  CHECK(c.codebook.size == 512);
  CHECK(c.ar.train.objective.beta == doctest::Approx(0.2));
  CHECK(c.ar.train.objective.dpo_weight == 1.0);
  CHECK(c.degradation.factor == 4);
  const ArConfig a = c.ar_model();
  CHECK(a.vocab == 512);
  CHECK(a.code_dim == 32);
  CHECK(a.cond_side == 32);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(parse_config(R"({"schedule": {"resolutions": [4, 3], "scales": [1.0]}})"), PreconditionError);
  CHECK_THROWS_AS(parse_config(R"({"codebook": {"colour": 1}})"), PreconditionError);
  CHECK_THROWS_AS(parse_config(R"({"extra": {}})"), PreconditionError);
  CHECK_THROWS_AS(parse_config(R"({"codebook": {"size": 0}})"), PreconditionError);
  CHECK_THROWS_AS(parse_config(R"({"codebook": {"dim": 16}})"), PreconditionError);  // differs from codec channels
  CHECK_THROWS_AS(parse_config(R"({"ar": {"width": 30, "heads": 4}})"), PreconditionError);
  CHECK_THROWS_AS(parse_config(R"({"sampling": {"strategy": "beam"}})"), PreconditionError);
  CHECK_THROWS_AS(parse_config("{not json"), PreconditionError);
  CHECK_THROWS_AS(load_config("/nonexistent/hitok.json"), IoError);
}

TEST_CASE("config serialization round trips") {
  const ExperimentConfig c = small_config();
  const std::string text = config_to_json(c);
  CHECK(config_to_json(parse_config(text)) == text);
  CHECK(nlohmann::json::parse(text).at("codebook").at("size") == 16);
}

TEST_CASE("reseeding is deterministic and leaves the codec fixed") {
  ExperimentConfig a = small_config(), b = small_config();
  a.reseed(42);
  b.reseed(42);
  CHECK(config_to_json(a) == config_to_json(b));
  const ExperimentConfig base = small_config();
  CHECK(a.codebook.seed != base.codebook.seed);
  CHECK(a.corpus.seed != base.corpus.seed);
  CHECK(a.ar.seed != base.ar.seed);
  CHECK(a.codec_seed == base.codec_seed);
}

TEST_CASE("codebook training is seeded, reduces residuals, and handles K = 1") {
  const ExperimentConfig c = small_config();
  const auto images = training_images(c);
  CHECK(images.size() == 6);
  CHECK(images[0].height() == 64);
  CodebookTrainingReport report;
  const Codebook cb = train_codebook_for(c, images, &report);
  CHECK(cb == train_codebook_for(c, images));
  CHECK(report.epochs.size() == 3);
  CHECK(report.monotone());

  std::vector<MultiScaleFeatures> feats;
  for (const Image& img : images) feats.push_back(multiscale_features(img, c.codec(), c.schedule));
  const Codebook random(16, 8, Metric::L2, oracle::gaussian(128, 1));
  const PhiBank phi = PhiBank::identity(8);
  CHECK(mean_encoding_residual(feats, c.schedule, cb, phi, TokenMode::Hierarchical) <
        mean_encoding_residual(feats, c.schedule, random, phi, TokenMode::Hierarchical));

  ExperimentConfig one = c;
  one.codebook.size = 1;
  CHECK(train_codebook_for(one, images).size() == 1);
}

TEST_CASE("reconstruction sizes and reference images") {
  const ExperimentConfig c = small_config();
  const auto images = training_images(c);
  const Tokenizer tok{c.schedule, c.codec(), train_codebook_for(c, images), PhiBank::identity(8)};
  const TokenSequence t = tokenize_image(images[0], tok, TokenMode::Hierarchical);
  const Image r1 = reconstruct_at_scale(t, 1, tok), r2 = reconstruct_at_scale(t, 2, tok);
  CHECK(r1.height() == 32);
  CHECK(r2.height() == 64);
  CHECK(reference_at_scale(images[0], c.schedule, 1) == resize_area(images[0], 32, 32));
  CHECK(reconstruct_at_scale(t, 2, tok) == clamp01(decode_latent(decode_accumulate(t, tok.codebook, tok.phi, 3), tok.codec)));
  CHECK_THROWS_AS(reconstruct_at_scale(t, 3, tok), PreconditionError);
  CHECK_THROWS_AS(tokenize_image(Image(48, 48), tok, TokenMode::Baseline), PreconditionError);
}

TEST_CASE("allocation sweep rows") {
  const ExperimentConfig c = small_config();
  const auto images = training_images(c);
  const Codebook cb = train_codebook_for(c, images);
  const auto parts = scale_partitions(c.schedule);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].scales() == 1);
  const auto rows = sweep_allocation(parts, c.codec(), cb, PhiBank::identity(8), test_images(c));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].token_count == 1 + 4 + 16);
  CHECK(rows[1].psnr.size() == 2);
  const std::string csv = sweep_csv(rows);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("super-resolution examples pair HR and LR tokens") {
  ExperimentConfig c = small_config();
  const auto images = training_images(c);
  const Tokenizer tok{c.schedule, c.codec(), train_codebook_for(c, images), PhiBank::identity(8)};
  const auto examples = make_sr_examples({images[0], images[1]}, c.degradation, tok);
  REQUIRE(examples.size() == 2);
  CHECK(examples[0].lr.height() == 16);
  CHECK(examples[0].hr_tokens.flatten() == examples[0].sample.batch.targets);
  CHECK(examples[0].lr_tokens.flatten() == examples[0].sample.lr_tokens);
  CHECK(examples[0].cond.height() == 4);
  CHECK(degradation_for(c.degradation, 1).seed != degradation_for(c.degradation, 2).seed);
}
