#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "hitok/codebook.hpp"
#include "hitok/error.hpp"
#include "oracles.hpp"

using namespace hitok;

namespace {

std::filesystem::path temp(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("hitok_unit_" + name);
}

}  // namespace

TEST_CASE("nearest code matches an exhaustive scan (L2)") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> kd(1, 8), dd(1, 6);
  for (int trial = 0; trial < 500; ++trial) {
    const int k = kd(rng), dim = dd(rng);
    const auto rows = oracle::gaussian(static_cast<std::size_t>(k) * dim, 1000 + trial);
    const Codebook cb(k, dim, Metric::L2, rows);
    const auto v = oracle::gaussian(dim, 5000 + trial);
    REQUIRE(nearest_code(v, cb) == oracle::nearest_l2(v, rows, k, dim));
  }
}

TEST_CASE("nearest code under cosine maximizes normalized similarity") {
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 6, dim = 4;
    const auto rows = oracle::gaussian(k * dim, 300 + trial);
    const Codebook cb(k, dim, Metric::Cosine, rows);
    const auto v = oracle::gaussian(dim, 900 + trial);
    std::uint32_t best = 0;
    double best_s = -1e300;
    for (int i = 0; i < k; ++i) {
      double dot = 0.0, nn = 0.0;
      for (int c = 0; c < dim; ++c) dot += v[c] * rows[i * dim + c], nn += rows[i * dim + c] * rows[i * dim + c];
      if (dot / std::sqrt(nn) > best_s) best_s = dot / std::sqrt(nn), best = i;
    }
    REQUIRE(nearest_code(v, cb) == best);
  }
  const Codebook cb(3, 2, Metric::Cosine, {1.0, 0.0, 0.0, 1.0, -1.0, 0.0});
  const std::vector<double> zero{0.0, 0.0};
  CHECK(nearest_code(zero, cb) == 0);
}

TEST_CASE("ties resolve to the smallest index") {
  const Codebook cb(3, 1, Metric::L2, {-1.0, 1.0, 1.0});
  const std::vector<double> zero{0.0}, one{1.0};
  CHECK(nearest_code(zero, cb) == 0);
  CHECK(nearest_code(one, cb) == 1);
}

TEST_CASE("quantize_grid assigns every cell independently") {
  const int k = 5, dim = 3;
  const auto rows = oracle::gaussian(k * dim, 17);
  const Codebook cb(k, dim, Metric::L2, rows);
  const LatentGrid g = oracle::random_grid(dim, 2, 2, 18);
  const QuantizationResult q = quantize_grid(g, cb);
  double sq = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const auto cell = g.cell(i, j);
      const std::uint32_t idx = oracle::nearest_l2(cell, rows, k, dim);
      CHECK(q.indices.at(i, j) == idx);
      for (int c = 0; c < dim; ++c) {
        CHECK(q.embeddings.at(c, i, j) == rows[idx * dim + c]);
        sq += (cell[c] - rows[idx * dim + c]) * (cell[c] - rows[idx * dim + c]);
      }
    }
  CHECK(q.residual_norm == doctest::Approx(std::sqrt(sq)).epsilon(1e-12));
  CHECK(embed(q.indices, cb) == q.embeddings);
}

TEST_CASE("k-means recovers two separated clusters exactly") {
  std::vector<std::vector<double>> samples;
  for (double x : {0.0, 1.0})
    for (double y : {0.0, 1.0}) {
      samples.push_back({x, y});
      samples.push_back({x + 100.0, y - 50.0});
    }
  const Codebook cb = init_codebook(samples, 2, 3);
  std::set<std::pair<double, double>> got{{cb.row(0)[0], cb.row(0)[1]}, {cb.row(1)[0], cb.row(1)[1]}};
  CHECK(got == std::set<std::pair<double, double>>{{0.5, 0.5}, {100.5, -49.5}});
}

TEST_CASE("k-means seeding is deterministic given the seed") {
  std::vector<std::vector<double>> samples;
  const auto v = oracle::gaussian(400, 4);
  for (int i = 0; i < 100; ++i) samples.push_back({v[4 * i], v[4 * i + 1], v[4 * i + 2], v[4 * i + 3]});
  CHECK(init_codebook(samples, 8, 21) == init_codebook(samples, 8, 21));
  CHECK_FALSE(init_codebook(samples, 8, 21) == init_codebook(samples, 8, 22));
  CHECK(init_codebook(samples, 1, 5).size() == 1);
}

TEST_CASE("EMA update by hand") {
  Codebook cb(3, 2, Metric::L2, {0.0, 0.0, 10.0, 10.0, -5.0, 5.0});
  EmaState st = EmaState::from(cb);
  const std::vector<double> feats{1.0, 2.0, 3.0, 4.0, 9.0, 11.0};
  const std::vector<std::uint32_t> idx{0, 0, 1};
  ema_update(cb, st, feats, idx, 0.9);
  // counts: 0.9 * 1 + 0.1 * n ; sums: 0.9 * row + 0.1 * sum
  CHECK(cb.row(0)[0] == doctest::Approx(0.4 / 1.1));
  CHECK(cb.row(0)[1] == doctest::Approx(0.6 / 1.1));
  CHECK(cb.row(1)[0] == doctest::Approx((9.0 + 0.9) / 1.0));
  CHECK(cb.row(1)[1] == doctest::Approx((9.0 + 1.1) / 1.0));
  CHECK(cb.row(2)[0] == -5.0);
  CHECK(cb.row(2)[1] == 5.0);
  CHECK(st.counts[2] == doctest::Approx(0.9));

  const std::vector<double> w{2.0};
  Codebook single(1, 1, Metric::L2, {0.0});
  EmaState s1 = EmaState::from(single);
  const std::vector<double> f{1.0};
  const std::vector<std::uint32_t> i0{0};
  ema_update(single, s1, f, i0, 0.5, w);
  CHECK(single.row(0)[0] == doctest::Approx(1.0 / 1.5));
  CHECK_THROWS_AS(ema_update(single, s1, f, i0, 1.0), PreconditionError);
}

TEST_CASE("commitment loss gradient matches finite differences") {
  const Codebook cb(4, 3, Metric::L2, oracle::gaussian(12, 30));
  LatentGrid g = oracle::random_grid(3, 2, 2, 31);
  const QuantizationResult q = quantize_grid(g, cb);
  const CommitmentLoss l = commitment_loss(g, q);
  double sq = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) sq += std::pow(g.values()[k] - q.embeddings.values()[k], 2);
  CHECK(l.value == doctest::Approx(sq / g.size()).epsilon(1e-14));
  const double h = 1e-6;
  for (std::size_t k = 0; k < g.size(); ++k) {
    LatentGrid p = g, m = g;
    p.values()[k] += h;
    m.values()[k] -= h;
    const double fd = (commitment_loss(p, q).value - commitment_loss(m, q).value) / (2 * h);
    CHECK(std::abs(fd - l.gradient.values()[k]) < 1e-7);
  }
}

TEST_CASE("codebook file round trip and corruption") {
  Codebook cb(7, 5, Metric::Cosine, oracle::gaussian(35, 40));
  cb.round_to_float();
  const auto path = temp("cb.htcb");
  save_codebook(cb, path);
  CHECK(load_codebook(path) == cb);

  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  CHECK_THROWS_AS(load_codebook(path), IoError);
  {
    std::ofstream bad(path, std::ios::binary);
    bad << "NOPE";
  }
  CHECK_THROWS_AS(load_codebook(path), IoError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_codebook(temp("does_not_exist")), IoError);
}

TEST_CASE("codebook construction preconditions") {
  CHECK_THROWS_AS(Codebook(2, 2, Metric::L2, {1.0, 2.0, 3.0}), PreconditionError);
  CHECK_THROWS_AS(Codebook(0, 2, Metric::L2, {}), PreconditionError);
  CHECK(parse_metric("cosine") == Metric::Cosine);
  CHECK(std::string(metric_name(Metric::L2)) == "l2");
  CHECK_THROWS_AS(parse_metric("manhattan"), PreconditionError);
}
