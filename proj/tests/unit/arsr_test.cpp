#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "hitok/arsr.hpp"
#include "hitok/error.hpp"
#include "oracles.hpp"

using namespace hitok;

namespace {

struct Toy {
  ScaleSchedule schedule{{1, 2, 4}, {0.5, 1.0}};
  Codebook cb{5, 3, Metric::L2, oracle::gaussian(15, 1)};
  PhiBank phi = PhiBank::identity(3);
  ArConfig config;

  Toy() {
    config.width = 16;
    config.depth = 2;
    config.heads = 2;
    config.vocab = 5;
    config.code_dim = 3;
    config.cond_dim = 3;
    config.cond_side = 2;
    config.init_std = 0.3;
    config.zero_head = false;
  }

  TokenSequence random_tokens(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::uint32_t> u(0, 4);
    TokenSequence t{schedule, 5, TokenMode::Hierarchical, {}};
    for (int l = 0; l < schedule.levels(); ++l) {
      IndexGrid g(schedule.side(l), schedule.side(l));
      for (auto& v : g.values) v = u(rng);
      t.levels.push_back(g);
    }
    return t;
  }

  PackedBatch batch(std::uint64_t seed) const {
    return pack_sequence(random_tokens(seed), oracle::random_grid(3, 2, 2, seed + 100), cb, phi);
  }
};

// Central difference of f along a random direction of every parameter
// tensor, compared with the analytic directional derivative.
template <typename Loss>
double worst_relative_fd_error(ArModel& m, const PackedBatch& b, Loss loss) {
  ForwardCache cache;
  const Matrix logits = m.forward(b, cache);
  ArWeights grad = m.weights().zeros_like();
  m.backward(b, cache, loss(logits).dlogits, grad);

  std::vector<Matrix> g_copy;
  grad.visit([&](const auto&, const auto& g) { g_copy.emplace_back(g); });

  double worst = 0.0;
  std::size_t index = 0;
  std::mt19937_64 rng(77);
  m.weights().visit([&](const auto&, auto& p) {
    const Matrix& g = g_copy[index++];
    Matrix dir(p.rows(), p.cols());
    std::normal_distribution<double> nd;
    for (Eigen::Index k = 0; k < dir.size(); ++k) dir.data()[k] = nd(rng);
    const double analytic = (g.array() * dir.array()).sum();
    const double h = 1e-5;
    for (Eigen::Index k = 0; k < p.size(); ++k) p.data()[k] += h * dir.data()[k];
    const double up = loss(m.forward(b)).value;
    for (Eigen::Index k = 0; k < p.size(); ++k) p.data()[k] -= 2 * h * dir.data()[k];
    const double down = loss(m.forward(b)).value;
    for (Eigen::Index k = 0; k < p.size(); ++k) p.data()[k] += h * dir.data()[k];
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale > 1e-8) worst = std::max(worst, std::abs(analytic - numeric) / scale);
  });
  return worst;
}

}  // namespace

TEST_CASE("block-causal mask on a 5-position sequence") {
  // sides (1, 2), no conditioning: 1 + 4 positions.
  const BlockMask m = block_causal_mask(ScaleSchedule({1, 2}, {1.0}), 0);
  const int expected[5][5] = {{1, 0, 0, 0, 0}, {1, 1, 1, 1, 1}, {1, 1, 1, 1, 1}, {1, 1, 1, 1, 1}, {1, 1, 1, 1, 1}};
  REQUIRE(m.positions() == 5);
  for (int p = 0; p < 5; ++p)
    for (int q = 0; q < 5; ++q) CHECK(m.allows(p, q) == (expected[p][q] == 1));
}

TEST_CASE("conditioning positions see only conditioning") {
  const BlockMask m = block_causal_mask(ScaleSchedule({1, 2}, {1.0}), 2);
  REQUIRE(m.positions() == 7);
  for (int q = 0; q < 7; ++q) {
    CHECK(m.allows(0, q) == (q < 2));
    CHECK(m.allows(2, q) == (q < 3));
    CHECK(m.allows(6, q));
  }
  CHECK(m.level_of(1) == -1);
  CHECK(m.level_of(2) == 0);
  CHECK(m.level_of(5) == 1);
  CHECK(block_causal_mask(ScaleSchedule::standard(), 1024).positions() == 4476);
}

TEST_CASE("teacher-forced inputs are downsampled partial reconstructions") {
  const ScaleSchedule s({1, 2}, {1.0});
  const Codebook cb(3, 2, Metric::L2, {1.0, 2.0, -1.0, 0.5, 0.0, 3.0});
  TokenSequence t{s, 3, TokenMode::Hierarchical, {IndexGrid(1, 1, 2), IndexGrid(2, 2, 1)}};
  const LatentGrid cond(2, 2, 2, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  const PackedBatch b = pack_sequence(t, cond, cb, PhiBank::identity(2));
  CHECK(b.cond_len() == 4);
  CHECK(b.tokens() == 5);
  CHECK(b.inputs(0, 0) == doctest::Approx(2.5));  // mean conditioning feature
  CHECK(b.inputs(0, 1) == doctest::Approx(6.5));
  for (int r = 1; r < 5; ++r) {
    CHECK(b.inputs(r, 0) == doctest::Approx(0.0));  // code 2 = (0, 3), upsampled constant
    CHECK(b.inputs(r, 1) == doctest::Approx(3.0));
  }
  CHECK(b.targets == std::vector<std::uint32_t>{2, 1, 1, 1, 1});
}

TEST_CASE("cross-entropy and DPO hand values") {
  Matrix logits(1, 3);
  logits << 0.0, std::log(2.0), 0.0;
  const std::uint32_t one[] = {1};
  CHECK(ce_loss(logits, one).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  Matrix l2 = Matrix::Zero(1, 4);
  l2(0, 2) = 5.0;
  const std::uint32_t hr[] = {2}, lr[] = {0};
  CHECK(std::abs(dpo_loss(l2, hr, lr, 0.2).value - 0.5 * std::log1p(std::exp(-1.0))) < 1e-12);
  CHECK(std::abs(dpo_loss(l2, hr, hr, 0.2).value - 0.5 * std::log(2.0)) < 1e-12);
  CHECK(dpo_loss(l2, hr, hr, 0.2).dlogits.norm() == 0.0);

  Matrix two = Matrix::Zero(2, 4);
  two(0, 2) = 5.0;
  two(1, 2) = 5.0;
  const std::uint32_t hr2[] = {2, 2}, lr2[] = {0, 0};
  CHECK(std::abs(dpo_loss(two, hr2, lr2, 0.2, true).value - std::log1p(std::exp(-2.0))) < 1e-12);
  CHECK(preference_margin(two, hr2, lr2) == doctest::Approx(5.0));

  const std::uint32_t bad[] = {9};
  CHECK_THROWS_AS(ce_loss(logits, bad), PreconditionError);
  CHECK_THROWS_AS(dpo_loss(l2, hr, lr, 0.0), PreconditionError);
}

TEST_CASE("loss gradients with respect to logits match finite differences") {
  const Matrix logits = Eigen::Map<const Matrix>(oracle::gaussian(12, 3).data(), 3, 4);
  const std::uint32_t hr[] = {0, 3, 1}, lr[] = {2, 3, 0};
  for (int which = 0; which < 3; ++which) {
    const auto f = [&](const Matrix& x) {
      return which == 0 ? ce_loss(x, hr) : dpo_loss(x, hr, lr, 0.7, which == 2);
    };
    const Matrix g = f(logits).dlogits;
    for (Eigen::Index k = 0; k < logits.size(); ++k) {
      Matrix p = logits, m = logits;
      p.data()[k] += 1e-6;
      m.data()[k] -= 1e-6;
      CHECK(std::abs((f(p).value - f(m).value) / 2e-6 - g.data()[k]) < 1e-8);
    }
  }
}

TEST_CASE("parameter gradients match finite differences") {
  const Toy toy;
  ArModel m(toy.config, toy.schedule, 3);
  const PackedBatch b = toy.batch(4);
  const auto lr = toy.random_tokens(9).flatten();
  CHECK(worst_relative_fd_error(m, b, [&](const Matrix& x) { return ce_loss(x, b.targets); }) < 1e-4);
  CHECK(worst_relative_fd_error(m, b, [&](const Matrix& x) { return dpo_loss(x, b.targets, lr, 0.2); }) < 1e-4);
  CHECK(worst_relative_fd_error(m, b, [&](const Matrix& x) {
          LossValue a = ce_loss(x, b.targets), d = dpo_loss(x, b.targets, lr, 0.2);
          return LossValue{a.value + d.value, a.dlogits + d.dlogits};
        }) < 1e-4);
}

TEST_CASE("objective gradient equals the per-sample average") {
  const Toy toy;
  const ArModel m(toy.config, toy.schedule, 5);
  std::vector<ArSample> samples;
  for (int i = 0; i < 3; ++i) samples.push_back({toy.batch(20 + i), toy.random_tokens(40 + i).flatten()});
  const ObjectiveOptions o{1.0, 0.2, false};
  const ObjectiveValue all = evaluate_objective(m, samples, o);
  double ce = 0.0;
  ArWeights sum = m.weights().zeros_like();
  for (const ArSample& s : samples) {
    const ObjectiveValue one = evaluate_objective(m, std::span(&s, 1), o);
    ce += one.ce / 3.0;
    sum.add_scaled(one.grad, 1.0 / 3.0);
  }
  CHECK(all.ce == doctest::Approx(ce).epsilon(1e-12));
  sum.add_scaled(all.grad, -1.0);
  CHECK(std::sqrt(sum.squared_norm()) < 1e-12);
  CHECK(all.total == doctest::Approx(all.ce + all.dpo).epsilon(1e-12));
}

TEST_CASE("future levels do not change current logits") {
  const Toy toy;
  const ArModel m(toy.config, toy.schedule, 6);
  const PackedBatch b = toy.batch(7);
  const Matrix base = m.forward(b);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  for (int level = 0; level < 2; ++level) {
    PackedBatch p = b;
    for (Eigen::Index r = b.offsets[level + 1]; r < static_cast<Eigen::Index>(b.tokens()); ++r)
      for (Eigen::Index c = 0; c < p.inputs.cols(); ++c) p.inputs(r, c) += nd(rng);
    const Matrix got = m.forward(p);
    const Eigen::Index rows = static_cast<Eigen::Index>(b.offsets[level + 1]);
    CHECK(std::memcmp(got.data(), base.data(), sizeof(double) * rows * got.cols()) == 0);
    CHECK(got.bottomRows(got.rows() - rows) != base.bottomRows(got.rows() - rows));
  }
}

TEST_CASE("zero head starts at uniform cross-entropy") {
  Toy toy;
  toy.config.zero_head = true;
  const ArModel m(toy.config, toy.schedule, 1);
  const PackedBatch b = toy.batch(2);
  CHECK(ce_loss(m.forward(b), b.targets).value == doctest::Approx(std::log(5.0)).epsilon(1e-14));
}

TEST_CASE("training lowers the objective and is seeded") {
  const Toy toy;
  std::vector<ArSample> samples;
  for (int i = 0; i < 4; ++i) samples.push_back({toy.batch(50 + i), {}});
  TrainOptions o;
  o.steps = 40;
  o.lr = 1e-2;
  o.batch_size = 2;
  o.seed = 3;
  ArModel a(toy.config, toy.schedule, 2), b(toy.config, toy.schedule, 2);
  const auto ra = train_ar(a, samples, o), rb = train_ar(b, samples, o);
  REQUIRE(ra.size() >= 2);
  CHECK(ra.back().ce < ra.front().ce);
  CHECK(ra.front().step == 0);
  CHECK(ra.back().step == 39);
  CHECK(a.forward(samples[0].batch) == b.forward(samples[0].batch));
  CHECK(train_record_json(ra.front()).find("\"ce\"") != std::string::npos);
}

TEST_CASE("sampling is deterministic and decodable") {
  const Toy toy;
  const ArModel m(toy.config, toy.schedule, 12);
  const LatentGrid cond = oracle::random_grid(3, 2, 2, 13);
  const TokenSequence a = sample_nextscale(m, cond, toy.cb, toy.phi);
  CHECK(a == sample_nextscale(m, cond, toy.cb, toy.phi));
  CHECK_NOTHROW(a.validate());

  // Greedy picks the argmax of the teacher-forced logits of its own prefix.
  const PackedBatch b = pack_sequence(a, cond, toy.cb, toy.phi);
  const Matrix logits = m.forward(b);
  const auto flat = a.flatten();
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logits.cols(); ++k)
      if (logits(r, k) > logits(r, best)) best = k;
    CHECK(flat[r] == static_cast<std::uint32_t>(best));
  }

  SamplingOptions topk;
  topk.strategy = SampleStrategy::TopK;
  topk.top_k = 3;
  topk.seed = 4;
  CHECK(sample_nextscale(m, cond, toy.cb, toy.phi, topk) == sample_nextscale(m, cond, toy.cb, toy.phi, topk));
}

TEST_CASE("checkpoint round trip") {
  const Toy toy;
  const ArModel m(toy.config, toy.schedule, 14);
  const auto path = std::filesystem::temp_directory_path() / "hitok_unit_model.htar";
  save_checkpoint(m, path);
  const ArModel back = load_checkpoint(path);
  const PackedBatch b = toy.batch(15);
  CHECK((m.forward(b) - back.forward(b)).cwiseAbs().maxCoeff() < 1e-4);
  CHECK(back.schedule() == toy.schedule);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 1);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("model rejects mismatched batches") {
  const Toy toy;
  const ArModel m(toy.config, toy.schedule, 1);
  PackedBatch b = toy.batch(1);
  b.cond = Matrix::Zero(3, 3);
  CHECK_THROWS_AS(m.forward(b), PreconditionError);
  ArConfig bad = toy.config;
  bad.heads = 3;
  CHECK_THROWS_AS(ArModel(bad, toy.schedule, 1), PreconditionError);
}
