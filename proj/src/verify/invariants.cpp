#include <cmath>
#include <filesystem>

#include "fixtures.hpp"
#include "hitok/error.hpp"
#include "hitok/kernels.hpp"

namespace hitok::verify {

namespace {

using namespace detail;

Codebook random_codebook(int k, int dim, Metric metric, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> rows(static_cast<std::size_t>(k) * dim);
  for (double& v : rows) v = nd(rng);
  return Codebook(k, dim, metric, rows);
}

std::filesystem::path scratch_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("hitok_verify_" + name);
}

void resampling(CheckResult& r) {
  std::mt19937_64 rng(1);
  const LatentGrid g = random_latent(3, 12, 1.0, rng);
  const LatentGrid down = area_downsample(g, {5, 5});
  const auto means_g = channel_means(g), means_d = channel_means(down);
  double mean_err = 0.0;
  for (std::size_t c = 0; c < means_g.size(); ++c) mean_err = std::max(mean_err, std::abs(means_g[c] - means_d[c]));
  LatentGrid constant(2, 3, 3, 0.7);
  const LatentGrid up = bicubic_upsample(constant, {7, 7});
  double const_err = 0.0;
  for (double v : up.values()) const_err = std::max(const_err, std::abs(v - 0.7));
  const bool identity_phi = phi_refine(g, PhiParams::identity(3)) == g;
  r.passed = mean_err < 1e-12 && const_err < 1e-12 && identity_phi;
  r.detail = format("area mean err %.1e, bicubic constant err %.1e, identity phi %s", mean_err, const_err,
                    identity_phi ? "exact" : "differs");
}

void kernel_equivalence(CheckResult& r) {
  std::mt19937_64 rng(2);
  const Codebook cb = random_codebook(64, 16, Metric::L2, rng);
  std::normal_distribution<double> nd;
  std::vector<double> q(500 * 16);
  for (double& v : q) v = nd(rng);
  std::vector<std::uint32_t> a(500), b(500);
  kernels::serial::assign_nearest(q, cb.view(), a);
  kernels::parallel::assign_nearest(q, cb.view(), b);
  const LatentGrid g = random_latent(5, 20, 1.0, rng);
  const ResampleTaps rows = bicubic_taps(20, 33), cols = bicubic_taps(20, 33);
  LatentGrid rs(5, 33, 33), rp(5, 33, 33);
  kernels::serial::resample(g, rows, cols, rs);
  kernels::parallel::resample(g, rows, cols, rp);
  const PhiParams phi = PhiParams::box(5);
  LatentGrid cs(5, 20, 20), cp(5, 20, 20);
  kernels::serial::conv3x3(g, phi, cs);
  kernels::parallel::conv3x3(g, phi, cp);
  r.passed = a == b && rs == rp && cs == cp;
  r.detail = "serial and parallel kernels bit-identical: " + std::string(r.passed ? "yes" : "no");
}

void codebook_persistence(CheckResult& r) {
  std::mt19937_64 rng(3);
  Codebook cb = random_codebook(9, 4, Metric::L2, rng);
  cb.round_to_float();
  const auto path = scratch_file("codebook.htcb");
  save_codebook(cb, path);
  const bool same = load_codebook(path) == cb;
  std::filesystem::remove(path);

  // EMA leaves codes without assignments untouched.
  Codebook ema = cb;
  EmaState st = EmaState::from(ema);
  const std::vector<double> feats{1.0, 2.0, 3.0, 4.0};
  const std::vector<std::uint32_t> idx{0};
  ema_update(ema, st, feats, idx, 0.9);
  bool untouched = true;
  for (int k = 1; k < ema.size(); ++k)
    for (int c = 0; c < 4; ++c) untouched &= ema.row(k)[c] == cb.row(k)[c];
  r.passed = same && untouched;
  r.detail = format("save/load round trip %s; unassigned EMA codes %s", same ? "exact" : "differs",
                    untouched ? "unchanged" : "moved");
}

void token_persistence(CheckResult& r) {
  std::mt19937_64 rng(4);
  const ScaleSchedule s = ScaleSchedule::standard();
  const Codebook cb = random_codebook(16, 32, Metric::L2, rng);
  const LatentGrid z = random_latent(32, 32, 1.0, rng);
  const TokenSequence t = encode_nextscale(z, s, cb, PhiBank::identity(32));
  const auto path = scratch_file("tokens.htts");
  save_tokens(t, path);
  const bool same = load_tokens(path) == t;
  std::filesystem::remove(path);
  const bool flat = unflatten(s, t.vocab, t.flatten(), t.mode) == t && t.flatten().size() == 3452;
  r.passed = same && flat;
  r.detail = format("token file round trip %s; flatten/unflatten %s", same ? "exact" : "differs",
                    flat ? "exact" : "differs");
}

void single_scale_equivalence(CheckResult& r) {
  std::mt19937_64 rng(5);
  const ScaleSchedule s({2, 4, 8}, {1.0});
  const Codebook cb = random_codebook(32, 6, Metric::L2, rng);
  const PhiBank phi = PhiBank::identity(6);
  int mismatches = 0;
  for (int k = 0; k < 20; ++k) {
    const LatentGrid z = random_latent(6, 8, 1.0, rng);
    TokenSequence a = encode_nextscale(z, s, cb, phi);
    TokenSequence b = encode_hierarchical(MultiScaleFeatures{{z}}, s, cb, phi);
    a.mode = b.mode;
    mismatches += !(a == b);
  }
  r.passed = mismatches == 0;
  r.detail = format("single-scale hierarchical vs next-scale: %d/20 differ", mismatches);
}

void full_scale_decode(CheckResult& r) {
  std::mt19937_64 rng(6);
  const ScaleSchedule s({2, 4, 6, 8}, {0.5, 1.0});
  const Codebook cb = random_codebook(32, 6, Metric::L2, rng);
  const PhiBank phi = PhiBank::identity(6);
  const LatentGrid z = random_latent(6, 8, 1.0, rng);
  const MultiScaleFeatures f{{area_downsample(z, {4, 4}), z}};
  const TokenSequence t = encode_hierarchical(f, s, cb, phi);
  const bool same = decode_at_scale(t, 2, cb, phi) == decode_accumulate(t, cb, phi, s.levels());
  r.passed = same;
  r.detail = std::string("decode at the last scale equals the full accumulation: ") + (same ? "yes" : "no");
}

void mask_structure(CheckResult& r) {
  const ScaleSchedule s = ScaleSchedule::standard();
  const BlockMask m = block_causal_mask(s, 16);
  bool ok = m.positions() == 16 + 3452;
  // Sampled pairs: allowed only toward the same or an earlier level.
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> pos(0, m.positions() - 1);
  for (int k = 0; k < 20000; ++k) {
    const std::size_t p = pos(rng), q = pos(rng);
    const int lp = m.level_of(p), lq = m.level_of(q);
    const bool expect = lp < 0 ? lq < 0 : lq <= lp;
    ok &= m.allows(p, q) == expect;
  }
  r.passed = ok;
  r.detail = std::string("mask is block lower-triangular with conditioning visible to all: ") + (ok ? "yes" : "no");
}

void loss_properties(CheckResult& r) {
  const int k = 6;
  Matrix uniform = Matrix::Zero(5, k);
  const std::vector<std::uint32_t> targets{0, 1, 2, 3, 4};
  const double ce = ce_loss(uniform, targets).value;
  bool ok = std::abs(ce - std::log(static_cast<double>(k))) < 1e-12;

  const std::uint32_t hr[] = {1}, lr[] = {3};
  double prev = std::numeric_limits<double>::infinity();
  for (int step = -20; step <= 20; ++step) {
    Matrix logits = Matrix::Zero(1, k);
    logits(0, 1) = 0.5 * step;
    const double v = dpo_loss(logits, hr, lr, 0.2).value;
    ok &= v < prev;
    prev = v;
  }
  Matrix gap = Matrix::Zero(1, k);
  gap(0, 1) = 2.0;
  ok &= dpo_loss(gap, hr, lr, 0.4).value < dpo_loss(gap, hr, lr, 0.2).value;
  r.passed = ok;
  r.detail = format("uniform CE %.6f vs ln K %.6f; DPO strictly decreasing in the gap and in beta", ce,
                    std::log(static_cast<double>(k)));
}

void ar_roundtrip(CheckResult& r) {
  const ScaleSchedule s = toy_schedule();
  ArConfig c;
  c.width = 16;
  c.depth = 1;
  c.heads = 2;
  c.vocab = 8;
  c.code_dim = 4;
  c.cond_dim = 4;
  c.zero_head = false;
  const ArModel m(c, s, 8);
  std::mt19937_64 rng(8);
  const Codebook cb = random_codebook(8, 4, Metric::L2, rng);
  const PhiBank phi = PhiBank::identity(4);
  const LatentGrid cond = random_latent(4, 8, 1.0, rng);
  const TokenSequence a = sample_nextscale(m, cond, cb, phi), b = sample_nextscale(m, cond, cb, phi);
  const bool greedy_same = a == b;

  const auto path = scratch_file("model.htar");
  save_checkpoint(m, path);
  const ArModel back = load_checkpoint(path);
  std::filesystem::remove(path);
  const PackedBatch batch = pack_sequence(a, cond, cb, phi);
  const double diff = (m.forward(batch) - back.forward(batch)).cwiseAbs().maxCoeff();
  const bool uniform = [&] {
    ArConfig z = c;
    z.zero_head = true;
    const Matrix logits = ArModel(z, s, 9).forward(batch);
    return std::abs(ce_loss(logits, batch.targets).value - std::log(8.0)) < 1e-12;
  }();
  r.passed = greedy_same && diff < 1e-4 && uniform;
  r.detail = format("greedy repeat %s; checkpoint logit drift %.2e; zero head CE = ln K %s",
                    greedy_same ? "identical" : "differs", diff, uniform ? "yes" : "no");
}

}  // namespace

std::vector<Check> invariant_checks() {
  return {
      {"INV-1", "resampling identities", 5.0, resampling},
      {"INV-2", "serial/parallel kernel identity", 5.0, kernel_equivalence},
      {"INV-3", "codebook persistence and EMA", 5.0, codebook_persistence},
      {"INV-4", "token sequence persistence", 5.0, token_persistence},
      {"INV-5", "single-scale hierarchical = next-scale", 5.0, single_scale_equivalence},
      {"INV-6", "last-scale decode = full decode", 5.0, full_scale_decode},
      {"INV-7", "block-causal mask structure", 5.0, mask_structure},
      {"INV-8", "CE and DPO loss properties", 5.0, loss_properties},
      {"INV-9", "sampling determinism and checkpoints", 10.0, ar_roundtrip},
  };
}

}  // namespace hitok::verify
