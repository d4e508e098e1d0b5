#include <doctest.h>

#include <filesystem>

#include "hitok/error.hpp"
#include "hitok/hit.hpp"
#include "hitok/msrq.hpp"
#include "oracles.hpp"

using namespace hitok;

namespace {

Codebook random_codebook(int k, int dim, std::uint64_t seed) {
  return Codebook(k, dim, Metric::L2, oracle::gaussian(static_cast<std::size_t>(k) * dim, seed));
}

std::vector<double> row_vec(const Codebook& cb, std::uint32_t k) { return {cb.row(k).begin(), cb.row(k).end()}; }

}  // namespace

TEST_CASE("default schedule constants") {
  const ScaleSchedule s = ScaleSchedule::standard();
  CHECK(s.resolutions() == std::vector<int>{4, 6, 8, 10, 14, 16, 20, 24, 28, 32});
  CHECK(s.token_count() == 3452);
  CHECK(s.group_boundaries() == std::vector<std::size_t>{116, 668, 3452});
  CHECK(s.scale_side(0) == 8);
  CHECK(s.scale_side(1) == 16);
  CHECK(s.scale_side(2) == 32);
  for (int l = 0; l < 10; ++l) CHECK(s.group_of(l) == (l < 3 ? 0 : l < 6 ? 1 : 2));
  CHECK(s.group_first(1) == 3);
  CHECK(s.group_last(1) == 5);
  CHECK(s.level_offset(0) == 0);
  CHECK(s.level_offset(2) == 16 + 36);
  const ScaleSchedule t = s.truncated(2);
  CHECK(t.levels() == 6);
  CHECK(t.native() == 16);
  CHECK(t.token_count() == 668);
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(ScaleSchedule({4, 4, 8}, {1.0}), PreconditionError);
  CHECK_THROWS_AS(ScaleSchedule({4, 8}, {0.5}), PreconditionError);        // must end at 1
  CHECK_THROWS_AS(ScaleSchedule({4, 8}, {0.75, 1.0}), PreconditionError);  // 6 is not a side
  CHECK_THROWS_AS(ScaleSchedule({4, 8}, {1.0, 0.5}), PreconditionError);
  CHECK_THROWS_AS(ScaleSchedule({}, {1.0}), PreconditionError);
  CHECK_NOTHROW(ScaleSchedule({1, 2, 4, 8}, {0.25, 0.5, 1.0}));
}

TEST_CASE("two-level residual quantization unrolled by hand") {
  // sides (1, 2), single scale, 2x2 latent, K = 4, identity refinement.
  const int dim = 3;
  const Codebook cb = random_codebook(4, dim, 50);
  const std::vector<double> rows(cb.rows().begin(), cb.rows().end());
  const LatentGrid z = oracle::random_grid(dim, 2, 2, 51);
  const ScaleSchedule s({1, 2}, {1.0});
  const TokenSequence t = encode_nextscale(z, s, cb, PhiBank::identity(dim));

  // Level 1 quantizes the mean vector; its bicubic upsample is constant.
  std::vector<double> mean(dim, 0.0);
  for (int c = 0; c < dim; ++c)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) mean[c] += z.at(c, i, j) / 4.0;
  const std::uint32_t q1 = oracle::nearest_l2(mean, rows, 4, dim);
  REQUIRE(t.levels[0].at(0, 0) == q1);

  double final_sq = 0.0, level1_sq = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      std::vector<double> r(dim);
      for (int c = 0; c < dim; ++c) r[c] = z.at(c, i, j) - rows[q1 * dim + c];
      for (double v : r) level1_sq += v * v;
      const std::uint32_t q2 = oracle::nearest_l2(r, rows, 4, dim);
      CHECK(t.levels[1].at(i, j) == q2);
      for (int c = 0; c < dim; ++c) final_sq += std::pow(r[c] - rows[q2 * dim + c], 2);
    }
  const auto norms = residual_norms(z, t, cb, PhiBank::identity(dim));
  REQUIRE(norms.size() == 2);
  CHECK(norms[0] == doctest::Approx(std::sqrt(level1_sq)).epsilon(1e-12));
  CHECK(norms[1] == doctest::Approx(std::sqrt(final_sq)).epsilon(1e-12));
}

TEST_CASE("hierarchical encoding reuses coarse tokens and only subtracts their contribution") {
  // sides (1, 2), scales (0.5, 1): level 1 is tokenized from the 1x1 scale
  // latent, level 2 from the 2x2 latent minus level 1's contribution.
  const int dim = 2;
  const Codebook cb = random_codebook(4, dim, 60);
  const std::vector<double> rows(cb.rows().begin(), cb.rows().end());
  const LatentGrid small = oracle::random_grid(dim, 1, 1, 61), big = oracle::random_grid(dim, 2, 2, 62);
  const ScaleSchedule s({1, 2}, {0.5, 1.0});
  const TokenSequence t = encode_hierarchical(MultiScaleFeatures{{small, big}}, s, cb, PhiBank::identity(dim));
  const std::uint32_t q1 = oracle::nearest_l2(small.cell(0, 0), rows, 4, dim);
  REQUIRE(t.levels[0].at(0, 0) == q1);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      std::vector<double> r = big.cell(i, j);
      for (int c = 0; c < dim; ++c) r[c] -= rows[q1 * dim + c];
      CHECK(t.levels[1].at(i, j) == oracle::nearest_l2(r, rows, 4, dim));
    }
  // Scale-1 decode is the level-1 code itself.
  const LatentGrid d1 = decode_at_scale(t, 1, cb, PhiBank::identity(dim));
  CHECK(d1.cell(0, 0) == row_vec(cb, q1));
}

TEST_CASE("prefix sharing holds for random latents and codebooks") {
  const ScaleSchedule s({2, 3, 4, 6, 8}, {0.5, 1.0});
  for (int trial = 0; trial < 10; ++trial) {
    const Codebook cb = random_codebook(16, 4, 70 + trial);
    const MultiScaleFeatures f{{oracle::random_grid(4, 4, 4, 80 + trial), oracle::random_grid(4, 8, 8, 90 + trial)}};
    const TokenSequence full = encode_hierarchical(f, s, cb, PhiBank::identity(4));
    const TokenSequence small = encode_hierarchical(f.truncated(1), s.truncated(1), cb, PhiBank::identity(4));
    CHECK(prefix_overlap_check(full, small, 1));
    CHECK(prefix_overlap_check(full, full, 2));
  }
}

TEST_CASE("single-scale hierarchical encoding equals next-scale encoding") {
  const ScaleSchedule s({1, 2, 4}, {1.0});
  for (int trial = 0; trial < 10; ++trial) {
    const Codebook cb = random_codebook(8, 3, 100 + trial);
    const LatentGrid z = oracle::random_grid(3, 4, 4, 200 + trial);
    TokenSequence a = encode_nextscale(z, s, cb, PhiBank::identity(3));
    const TokenSequence b = encode_hierarchical(MultiScaleFeatures{{z}}, s, cb, PhiBank::identity(3));
    a.mode = b.mode;
    CHECK(a == b);
  }
}

TEST_CASE("last-scale decode equals full accumulation; decode is linear in contributions") {
  const ScaleSchedule s({2, 4, 8}, {0.5, 1.0});
  const Codebook cb = random_codebook(8, 3, 300);
  const PhiBank phi = PhiBank::shared(PhiParams::box(3));
  const LatentGrid z = oracle::random_grid(3, 8, 8, 301);
  const TokenSequence t = encode_hierarchical(MultiScaleFeatures{{area_downsample(z, {4, 4}), z}}, s, cb, phi);
  CHECK(decode_at_scale(t, 2, cb, phi) == decode_accumulate(t, cb, phi, 3));
  LatentGrid sum(3, 8, 8);
  for (int l = 0; l < 3; ++l) sum += level_contribution(t.levels[l], cb, phi.for_level(l), 8);
  CHECK(oracle::max_abs_diff(sum, decode_accumulate(t, cb, phi, 3)) < 1e-12);
  CHECK_THROWS_AS(decode_at_scale(t, 3, cb, phi), PreconditionError);
  CHECK_THROWS_AS(decode_at_scale(t, 0, cb, phi), PreconditionError);
}

TEST_CASE("token sequences flatten and persist exactly") {
  const ScaleSchedule s = ScaleSchedule::standard();
  const Codebook cb = random_codebook(32, 4, 400);
  const LatentGrid z = oracle::random_grid(4, 32, 32, 401);
  const TokenSequence t = encode_nextscale(z, s, cb, PhiBank::identity(4));
  const auto flat = t.flatten();
  CHECK(flat.size() == 3452);
  CHECK(flat[s.level_offset(3)] == t.levels[3].at(0, 0));
  CHECK(unflatten(s, t.vocab, flat, t.mode) == t);

  const auto path = std::filesystem::temp_directory_path() / "hitok_unit_tokens.htts";
  save_tokens(t, path);
  CHECK(load_tokens(path) == t);
  std::filesystem::resize_file(path, 20);
  CHECK_THROWS_AS(load_tokens(path), IoError);
  std::filesystem::remove(path);

  TokenSequence bad = t;
  bad.levels[2].values[0] = 32;
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
}

TEST_CASE("encoders reject mismatched inputs") {
  const ScaleSchedule s({2, 4}, {0.5, 1.0});
  const Codebook cb = random_codebook(4, 3, 500);
  CHECK_THROWS_AS(encode_nextscale(oracle::random_grid(3, 5, 5, 1), s, cb, PhiBank::identity(3)), PreconditionError);
  CHECK_THROWS_AS(encode_nextscale(oracle::random_grid(2, 4, 4, 1), s, cb, PhiBank::identity(2)), PreconditionError);
  const MultiScaleFeatures wrong{{oracle::random_grid(3, 3, 3, 2), oracle::random_grid(3, 4, 4, 3)}};
  CHECK_THROWS_AS(encode_hierarchical(wrong, s, cb, PhiBank::identity(3)), PreconditionError);
}
