#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <limits>
#include <mutex>

#include "fixtures.hpp"
#include "hitok/error.hpp"

namespace hitok::verify {

namespace detail {

ScaleSchedule toy_schedule() { return ScaleSchedule({1, 2, 4, 8}, {0.25, 0.5, 1.0}); }

LatentGrid random_latent(int channels, int side, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, sigma);
  LatentGrid g(channels, side, side);
  for (double& v : g.values()) v = nd(rng);
  return g;
}

const TrainedSetup& trained_setup() {
  static std::once_flag once;
  static TrainedSetup s{ExperimentConfig{}, PatchCodec(), Codebook(), PhiBank(), {}, {}};
  std::call_once(once, [] {
    s.config.corpus.train_count = 32;
    s.config.corpus.test_count = 20;
    s.config.corpus.seed = 1;
    s.config.codebook.size = 512;
    s.config.codebook.seed = 7;
    s.codec = s.config.codec();
    s.phi = PhiBank::identity(s.config.codec_channels);
    s.codebook = train_codebook_for(s.config, training_images(s.config), &s.report);
    s.test = test_images(s.config);
  });
  return s;
}

}  // namespace detail

namespace {

using namespace detail;

// ---- AC-1 -----------------------------------------------------------------

void ac1(CheckResult& r) {
  const ScaleSchedule s = ScaleSchedule::standard();
  bool ok = true;
  std::ostringstream d;
  const std::vector<std::size_t> bounds = s.group_boundaries();
  ok &= s.token_count() == 3452;
  ok &= bounds == std::vector<std::size_t>{116, 668, 3452};
  const std::vector<int> groups{0, 0, 0, 1, 1, 1, 2, 2, 2, 2};
  for (int l = 0; l < s.levels(); ++l) ok &= s.group_of(l) == groups[l];
  d << "tokens=" << s.token_count() << " boundaries=(" << bounds[0] << "," << bounds[1] << "," << bounds[2] << ")";

  // Conditioning from a 128x128 LR image upsampled to 512x512.
  const PatchCodec codec;
  const Image hr = synthetic_image(512, 3);
  const Image lr = degrade(hr, Degradation{});
  ok &= lr.height() == 128 && lr.width() == 128;
  const LatentGrid cond = conditioning_latent(lr, codec, 512);
  const std::size_t cond_tokens = static_cast<std::size_t>(grid_tokens(cond).rows());
  ok &= cond_tokens == 1024;

  std::mt19937_64 rng(5);
  std::vector<double> rows(4 * 32);
  std::normal_distribution<double> nd;
  for (double& v : rows) v = nd(rng);
  const Codebook cb(4, 32, Metric::L2, rows);
  TokenSequence t;
  t.schedule = s;
  t.vocab = 4;
  for (int l = 0; l < s.levels(); ++l) t.levels.emplace_back(s.side(l), s.side(l));
  const PackedBatch b = pack_sequence(t, cond, cb, PhiBank::identity(32));
  ok &= b.targets.size() == 3452 && b.positions() == 3452 + 1024;
  ok &= b.offsets[3] == 116 && b.offsets[6] == 668 && b.offsets[10] == 3452;
  d << " cond_tokens=" << cond_tokens << " packed_positions=" << b.positions() << " groups={1-3},{4-6},{7-10}";
  r.passed = ok;
  r.detail = d.str();
}

// ---- AC-2 -----------------------------------------------------------------

void ac2(CheckResult& r) {
  const TrainedSetup& ts = trained_setup();
  const ScaleSchedule& s = ts.config.schedule;
  const std::vector<Image> images = synthetic_corpus(50, ts.config.image_side(), 2024);
  int checks = 0, equal = 0;
  for (const Image& img : images) {
    const MultiScaleFeatures f = multiscale_features(img, ts.codec, s);
    const TokenSequence full = encode_hierarchical(f, s, ts.codebook, ts.phi);
    for (int n = 1; n <= s.scales(); ++n) {
      const TokenSequence small = encode_hierarchical(f.truncated(n), s.truncated(n), ts.codebook, ts.phi);
      ++checks;
      equal += prefix_overlap_check(full, small, n);
    }
  }
  r.passed = equal == checks;
  r.detail = format("%d/%d (image, scale) prefixes index-identical", equal, checks);
}

// ---- AC-3 -----------------------------------------------------------------

void ac3(CheckResult& r) {
  const TrainedSetup& ts = trained_setup();
  const Tokenizer tok{ts.config.schedule, ts.codec, ts.codebook, ts.phi};
  double hit = 0.0, base = 0.0;
  int wins = 0;
  for (const Image& img : ts.test) {
    const Image ref = reference_at_scale(img, tok.schedule, 1);
    const double h = psnr(reconstruct_at_scale(tokenize_image(img, tok, TokenMode::Hierarchical), 1, tok), ref);
    const double b = psnr(reconstruct_at_scale(tokenize_image(img, tok, TokenMode::Baseline), 1, tok), ref);
    hit += h;
    base += b;
    wins += h > b;
  }
  const double n = static_cast<double>(ts.test.size());
  hit /= n;
  base /= n;
  const double win_rate = wins / n;
  r.passed = hit - base >= 3.0 && win_rate >= 0.9;
  r.detail = format("scale-1 PSNR hit=%.2f dB baseline=%.2f dB gap=%.2f dB (need >= 3); hit better on %d/%d",
                    hit, base, hit - base, wins, static_cast<int>(ts.test.size()));
}

// ---- AC-4 -----------------------------------------------------------------

void ac4(CheckResult& r) {
  const TrainedSetup& ts = trained_setup();
  const ScaleSchedule& s = ts.config.schedule;
  // Random latents at the corpus latent scale.
  double sq = 0.0;
  std::size_t count = 0;
  for (const Image& img : ts.test) {
    const LatentGrid z = ts.codec.encode(img);
    for (double v : z.values()) sq += v * v;
    count += z.size();
  }
  const double sigma = std::sqrt(sq / static_cast<double>(count));
  std::mt19937_64 rng(404);
  int base_violations = 0, hit_violations = 0;
  for (int k = 0; k < 100; ++k) {
    const LatentGrid z = random_latent(ts.config.codec_channels, s.native(), sigma, rng);
    const TokenSequence t = encode_nextscale(z, s, ts.codebook, ts.phi);
    const std::vector<double> norms = residual_norms(z, t, ts.codebook, ts.phi);
    double prev = frobenius_norm(z);
    for (double v : norms) {
      base_violations += v > prev;
      prev = v;
    }

    MultiScaleFeatures f;
    for (int n = 0; n < s.scales(); ++n)
      f.per_scale.push_back(area_downsample(z, {s.scale_side(n), s.scale_side(n)}));
    EncodeTrace trace;
    encode_hierarchical(f, s, ts.codebook, ts.phi, &trace);
    for (int n = 0; n < s.scales(); ++n) {
      prev = trace.group_entry[n];
      for (std::size_t i = 0; i < trace.residual_after.size(); ++i) {
        if (trace.residual_scale[i] != n || trace.residual_level[i] < s.group_first(n)) continue;
        hit_violations += trace.residual_after[i] > prev;
        prev = trace.residual_after[i];
      }
    }
  }
  r.passed = base_violations == 0 && hit_violations == 0;
  r.detail = format("100 latents (sigma %.3f): baseline violations=%d, hit within-group violations=%d", sigma,
                    base_violations, hit_violations);
}

// ---- AC-5 -----------------------------------------------------------------

std::uint32_t oracle_nearest(const std::vector<double>& v, const std::vector<double>& rows, int k_count,
                             Metric metric) {
  const std::size_t dim = v.size();
  std::uint32_t best = 0;
  double best_score = 0.0;
  for (int k = 0; k < k_count; ++k) {
    double score = 0.0;
    if (metric == Metric::L2) {
      for (std::size_t c = 0; c < dim; ++c) score += (v[c] - rows[k * dim + c]) * (v[c] - rows[k * dim + c]);
    } else {
      double dot = 0.0, nr = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        dot += v[c] * rows[k * dim + c];
        nr += rows[k * dim + c] * rows[k * dim + c];
      }
      score = -dot / std::sqrt(nr);
    }
    if (k == 0 || score < best_score) {
      best_score = score;
      best = static_cast<std::uint32_t>(k);
    }
  }
  return best;
}

void ac5(CheckResult& r) {
  std::mt19937_64 rng(55);
  std::uniform_int_distribution<int> kd(1, 8), sd(1, 2), dd(1, 6), md(0, 1);
  std::normal_distribution<double> nd;
  int mismatches = 0, cases = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = kd(rng), h = sd(rng), w = sd(rng), dim = dd(rng);
    const Metric metric = md(rng) ? Metric::Cosine : Metric::L2;
    std::vector<double> rows(static_cast<std::size_t>(k) * dim);
    for (double& v : rows) v = nd(rng);
    const Codebook cb(k, dim, metric, rows);
    std::vector<double> stored(cb.rows().begin(), cb.rows().end());
    LatentGrid g(dim, h, w);
    for (double& v : g.values()) v = nd(rng);
    const QuantizationResult q = quantize_grid(g, cb);
    bool ok = true;
    double sq = 0.0;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const std::vector<double> v = g.cell(i, j);
        const std::uint32_t want = oracle_nearest(v, stored, k, metric);
        ok &= nearest_code(v, cb) == want && q.indices.at(i, j) == want;
        for (int c = 0; c < dim; ++c) {
          ok &= q.embeddings.at(c, i, j) == stored[want * dim + c];
          sq += (v[c] - stored[want * dim + c]) * (v[c] - stored[want * dim + c]);
        }
      }
    ok &= std::abs(q.residual_norm - std::sqrt(sq)) <= 1e-12 * (1.0 + std::sqrt(sq));
    mismatches += !ok;
    ++cases;
  }
  r.passed = mismatches == 0;
  r.detail = format("%d/%d random cases disagree with the exhaustive scan", mismatches, cases);
}

// ---- AC-6 -----------------------------------------------------------------

enum class LossKind { Ce, Dpo, Composite };

struct ToyProblem {
  ArModel model;
  std::vector<ArSample> samples;
};

ToyProblem toy_problem(std::uint64_t seed) {
  const ScaleSchedule s({1, 2, 4}, {0.5, 1.0});
  ArConfig c;
  c.width = 32;
  c.depth = 2;
  c.heads = 4;
  c.vocab = 7;
  c.code_dim = 5;
  c.cond_dim = 5;
  c.cond_side = 2;
  c.init_std = 0.3;
  c.zero_head = false;
  ToyProblem p{ArModel(c, s, seed), {}};
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<std::uint32_t> tok(0, 6);
  for (int n = 0; n < 2; ++n) {
    ArSample a;
    a.batch.cond = Matrix(4, 5);
    a.batch.inputs = Matrix(21, 5);
    for (Eigen::Index i = 0; i < a.batch.cond.size(); ++i) a.batch.cond.data()[i] = nd(rng);
    for (Eigen::Index i = 0; i < a.batch.inputs.size(); ++i) a.batch.inputs.data()[i] = nd(rng);
    a.batch.sides = {1, 2, 4};
    a.batch.offsets = {0, 1, 5, 21};
    for (int i = 0; i < 21; ++i) {
      a.batch.targets.push_back(tok(rng));
      a.lr_tokens.push_back(tok(rng));
    }
    p.samples.push_back(std::move(a));
  }
  return p;
}

double loss_and_grad(const ArModel& m, const std::vector<ArSample>& samples, LossKind kind, ArWeights* grad) {
  ObjectiveOptions o;
  if (kind != LossKind::Dpo) {
    o.dpo_weight = kind == LossKind::Composite ? 1.0 : 0.0;
    ObjectiveValue v = evaluate_objective(m, samples, o, grad != nullptr);
    if (grad) *grad = std::move(v.grad);
    return v.total;
  }
  double total = 0.0;
  if (grad) *grad = m.weights().zeros_like();
  for (const ArSample& s : samples) {
    ForwardCache cache;
    const Matrix logits = m.forward(s.batch, cache);
    LossValue d = dpo_loss(logits, s.batch.targets, s.lr_tokens, o.beta);
    total += d.value / static_cast<double>(samples.size());
    if (grad) m.backward(s.batch, cache, d.dlogits / static_cast<double>(samples.size()), *grad);
  }
  return total;
}

// Worst relative disagreement between the analytic gradient and central
// differences, along one random direction per parameter array. Gradients
// that vanish identically (both sides below 1e-8) count as agreement.
double worst_fd_error(ToyProblem& p, LossKind kind, std::string& worst_name) {
  ArWeights grad;
  loss_and_grad(p.model, p.samples, kind, &grad);
  std::vector<const double*> g;
  grad.visit([&](const std::string&, const auto& m) { g.push_back(m.data()); });
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd;
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t k = 0;
  p.model.weights().visit([&](const std::string& name, auto& w) {
    const double* gk = g[k++];
    std::vector<double> dir(static_cast<std::size_t>(w.size()));
    double analytic = 0.0;
    for (std::size_t i = 0; i < dir.size(); ++i) {
      dir[i] = nd(rng);
      analytic += dir[i] * gk[i];
    }
    for (std::size_t i = 0; i < dir.size(); ++i) w.data()[i] += h * dir[i];
    const double up = loss_and_grad(p.model, p.samples, kind, nullptr);
    for (std::size_t i = 0; i < dir.size(); ++i) w.data()[i] -= 2.0 * h * dir[i];
    const double down = loss_and_grad(p.model, p.samples, kind, nullptr);
    for (std::size_t i = 0; i < dir.size(); ++i) w.data()[i] += h * dir[i];
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    const double err = scale < 1e-8 ? 0.0 : std::abs(analytic - numeric) / scale;
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  });
  return worst;
}

void ac6(CheckResult& r) {
  bool ok = true;
  std::ostringstream d;
  d.precision(3);

  ToyProblem p = toy_problem(6);
  {
    // z_hr == z_lr: constant loss, zero gradient.
    double worst_loss_err = 0.0, worst_grad = 0.0;
    for (const ArSample& s : p.samples) {
      ForwardCache cache;
      const Matrix logits = p.model.forward(s.batch, cache);
      LossValue v = dpo_loss(logits, s.batch.targets, s.batch.targets, 0.2);
      ArWeights g = p.model.weights().zeros_like();
      p.model.backward(s.batch, cache, v.dlogits, g);
      worst_loss_err = std::max(worst_loss_err, std::abs(v.value - 0.5 * std::log(2.0)));
      worst_grad = std::max(worst_grad, std::sqrt(g.squared_norm()));
    }
    ok &= worst_loss_err <= 1e-9 && worst_grad < 1e-7;
    d << "equal-seq |loss-0.5ln2|=" << std::scientific << worst_loss_err << " |grad|=" << worst_grad;
  }
  {
    Matrix logits = Matrix::Zero(1, 4);
    logits(0, 2) = 5.0;
    const std::uint32_t hr[] = {2}, lr[] = {0};
    const double v = dpo_loss(logits, hr, lr, 0.2).value;
    const double want = 0.5 * std::log1p(std::exp(-1.0));
    ok &= std::abs(v - want) <= 1e-9;
    d << "; hand case " << std::fixed << std::setprecision(9) << v << " vs " << want;
  }
  d << std::scientific << std::setprecision(2);
  for (auto [kind, name] : {std::pair{LossKind::Ce, "ce"}, std::pair{LossKind::Dpo, "dpo"},
                            std::pair{LossKind::Composite, "ce+dpo"}}) {
    std::string where;
    const double err = worst_fd_error(p, kind, where);
    ok &= err <= 1e-4;
    d << "; " << name << " fd rel err " << err << (where.empty() ? "" : " (" + where + ")");
  }
  r.passed = ok;
  r.detail = d.str();
}

// ---- AC-7 -----------------------------------------------------------------

void ac7(CheckResult& r) {
  const ScaleSchedule s = toy_schedule();
  ArConfig c;
  c.width = 32;
  c.depth = 2;
  c.heads = 4;
  c.vocab = 16;
  c.code_dim = 8;
  c.cond_dim = 8;
  c.cond_side = 4;
  c.zero_head = false;
  const ArModel m(c, s, 77);
  std::mt19937_64 rng(707);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<std::uint32_t> tok(0, 15);
  std::uniform_int_distribution<int> lev(0, s.levels() - 2);

  PackedBatch base;
  base.cond = Matrix(16, 8);
  for (Eigen::Index i = 0; i < base.cond.size(); ++i) base.cond.data()[i] = nd(rng);
  base.offsets = {0};
  for (int l = 0; l < s.levels(); ++l) {
    base.sides.push_back(s.side(l));
    base.offsets.push_back(base.offsets.back() + static_cast<std::size_t>(s.side(l)) * s.side(l));
  }
  base.inputs = Matrix(static_cast<Eigen::Index>(base.offsets.back()), 8);
  for (Eigen::Index i = 0; i < base.inputs.size(); ++i) base.inputs.data()[i] = nd(rng);
  for (std::size_t i = 0; i < base.offsets.back(); ++i) base.targets.push_back(tok(rng));
  const Matrix ref = m.forward(base);

  int violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int l = lev(rng);
    PackedBatch p = base;
    const Eigen::Index keep = static_cast<Eigen::Index>(p.offsets[l + 1]);
    for (Eigen::Index i = keep; i < p.inputs.rows(); ++i)
      for (Eigen::Index j = 0; j < p.inputs.cols(); ++j) p.inputs(i, j) += 10.0 * nd(rng);
    for (std::size_t i = static_cast<std::size_t>(keep); i < p.targets.size(); ++i) p.targets[i] = tok(rng);
    const Matrix out = m.forward(p);
    violations += std::memcmp(out.data(), ref.data(), sizeof(double) * static_cast<std::size_t>(keep * ref.cols())) != 0;
  }
  r.passed = violations == 0;
  r.detail = format("200 future-level perturbations, %d changed current-level logits", violations);
}

// ---- AC-8 -----------------------------------------------------------------

void ac8(CheckResult& r) {
  ExperimentConfig c;
  c.schedule = toy_schedule();
  c.codebook.size = 768;
  c.codebook.epochs = 30;
  c.codebook.seed = 7;
  c.corpus.train_count = 10;
  c.corpus.seed = 42;
  const PatchCodec codec = c.codec();
  const std::vector<Image> hr = training_images(c);
  const Tokenizer tok{c.schedule, codec, train_codebook_for(c, hr), PhiBank::identity(c.codec_channels)};
  const std::vector<SrExample> ex = make_sr_examples(hr, c.degradation, tok);

  c.ar.model.width = 64;
  c.ar.model.depth = 2;
  c.ar.model.heads = 4;
  c.ar.train.steps = 400;
  c.ar.train.lr = 3e-3;
  c.ar.train.objective.dpo_weight = 0.0;  // pure memorization
  ArModel m(c.ar_model(), c.schedule, 1);
  const std::vector<ArSample> samples = ar_samples(ex);
  const std::vector<TrainRecord> log = train_ar(m, samples, c.ar.train);

  int reproduced = 0;
  double sr = 0.0, bilinear = 0.0;
  for (const SrExample& e : ex) {
    const SrOutput out = super_resolve(m, tok, e.lr, SamplingOptions{});
    if (out.tokens.levels != e.hr_tokens.levels) continue;
    ++reproduced;
    sr += psnr(out.scales.back(), e.hr);
    bilinear += psnr(resize_bilinear(e.lr, e.hr.height(), e.hr.width()), e.hr);
  }
  if (reproduced > 0) {
    sr /= reproduced;
    bilinear /= reproduced;
  }
  r.passed = reproduced >= 9 && sr - bilinear >= 2.0;
  r.detail = format("final ce=%.4f; reproduced %d/10; x4 PSNR %.2f dB vs bilinear %.2f dB (gap %.2f, need >= 2)",
                    log.back().ce, reproduced, sr, bilinear, sr - bilinear);
}

// ---- AC-9 -----------------------------------------------------------------

void ac9(CheckResult& r) {
  ExperimentConfig c;
  c.schedule = toy_schedule();
  c.codebook.size = 256;
  c.codebook.epochs = 10;
  c.codebook.seed = 7;
  c.corpus.train_count = 48;
  c.corpus.test_count = 10;
  c.corpus.seed = 42;
  const PatchCodec codec = c.codec();
  const std::vector<Image> train = training_images(c);
  const Tokenizer tok{c.schedule, codec, train_codebook_for(c, train), PhiBank::identity(c.codec_channels)};
  const std::vector<ArSample> tr = ar_samples(make_sr_examples(train, c.degradation, tok));
  Degradation held_deg = c.degradation;
  held_deg.seed += 1;
  const std::vector<SrExample> held = make_sr_examples(test_images(c), held_deg, tok);

  c.ar.train.steps = 400;
  c.ar.train.batch_size = 8;
  c.ar.train.seed = 3;
  double margin[2] = {0.0, 0.0};
  for (int dpo = 0; dpo < 2; ++dpo) {
    TrainOptions o = c.ar.train;
    o.objective.dpo_weight = dpo;
    ArModel m(c.ar_model(), c.schedule, 1);
    train_ar(m, tr, o);
    for (const SrExample& e : held)
      margin[dpo] += preference_margin(m.forward(e.sample.batch), e.sample.batch.targets, e.sample.lr_tokens);
    margin[dpo] /= static_cast<double>(held.size());
  }
  r.passed = margin[1] > margin[0];
  r.detail = format("held-out mean margin logit[hr]-logit[lr]: dpo=%.4f, ce-only=%.4f", margin[1], margin[0]);
}

// ---- AC-10 ----------------------------------------------------------------

void ac10(CheckResult& r) {
  const TrainedSetup& ts = trained_setup();
  const std::vector<SweepRow> rows =
      sweep_allocation(scale_partitions(ts.config.schedule), ts.codec, ts.codebook, ts.phi, ts.test);
  bool ok = true;
  std::ostringstream d;
  d.precision(2);
  d << std::fixed << "full-res PSNR by scale count:";
  for (const SweepRow& row : rows) {
    d << " N=" << row.schedule.scales() << ":" << row.full_psnr();
    if (row.schedule.scales() > 1) ok &= rows.front().full_psnr() > row.full_psnr();
  }
  r.passed = ok && rows.front().schedule.scales() == 1;
  r.detail = d.str();
}

}  // namespace

std::vector<Check> acceptance_checks() {
  return {
      {"AC-1", "structural constants", 1.0, ac1},
      {"AC-2", "prefix sharing across scales", 60.0, ac2},
      {"AC-3", "intermediate-scale decodability", 600.0, ac3},
      {"AC-4", "monotone residuals", 60.0, ac4},
      {"AC-5", "exhaustive quantization oracle", 10.0, ac5},
      {"AC-6", "DPO values and loss gradients", 120.0, ac6},
      {"AC-7", "block causality", 60.0, ac7},
      {"AC-8", "end-to-end toy super-resolution", 900.0, ac8},
      {"AC-9", "DPO ablation direction", 1200.0, ac9},
      {"AC-10", "allocation sweep structure", 600.0, ac10},
  };
}

CheckResult run_check(const Check& c) {
  CheckResult r;
  r.id = c.id;
  r.title = c.title;
  r.budget_seconds = c.budget_seconds;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    c.run(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (r.budget_seconds > 0.0 && r.seconds > r.budget_seconds) {
    r.passed = false;
    r.detail += format(" [over time budget: %.1f s > %.0f s]", r.seconds, r.budget_seconds);
  }
  return r;
}

std::string format_result(const CheckResult& r) {
  return format("%s %-6s %-36s (%7.2f s / %4.0f s)  ", r.passed ? "PASS" : "FAIL", r.id.c_str(), r.title.c_str(),
                r.seconds, r.budget_seconds) +
         r.detail;
}

}  // namespace hitok::verify
