#include "hitok/experiment.hpp"

#include <iomanip>
#include <sstream>

#include "hitok/error.hpp"

namespace hitok {

std::vector<Image> training_images(const ExperimentConfig& c) {
  return synthetic_corpus(c.corpus.train_count, c.image_side(), c.corpus.seed);
}

std::vector<Image> test_images(const ExperimentConfig& c) {
  return synthetic_corpus(c.corpus.test_count, c.image_side(), c.corpus.seed + 1);
}

Codebook train_codebook_for(const ExperimentConfig& c, const std::vector<Image>& images,
                            CodebookTrainingReport* report) {
  const PatchCodec codec = c.codec();
  std::vector<MultiScaleFeatures> feats;
  feats.reserve(images.size());
  for (const Image& img : images) feats.push_back(multiscale_features(img, codec, c.schedule));
  return train_codebook(feats, c.schedule, PhiBank::identity(c.codec_channels), c.codebook, report);
}

Degradation degradation_for(const Degradation& base, std::size_t index) {
  Degradation d = base;
  d.seed = base.seed * 1000003ull + index;
  return d;
}

SrExample make_sr_example(const Image& hr, const Image& lr, const Tokenizer& tok) {
  const int side = tok.image_side();
  SrExample e;
  e.hr = hr;
  e.lr = lr;
  e.hr_tokens = tokenize_image(hr, tok, TokenMode::Hierarchical);
  const MultiScaleFeatures lf = multiscale_features(resize_bilinear(lr, side, side), tok.codec, tok.schedule);
  e.cond = lf.per_scale.back();
  e.lr_tokens = encode_hierarchical(lf, tok.schedule, tok.codebook, tok.phi);
  e.sample.batch = pack_sequence(e.hr_tokens, e.cond, tok.codebook, tok.phi);
  e.sample.lr_tokens = e.lr_tokens.flatten();
  return e;
}

std::vector<SrExample> make_sr_examples(const std::vector<Image>& hr, const Degradation& degradation,
                                        const Tokenizer& tok) {
  std::vector<SrExample> out;
  out.reserve(hr.size());
  for (std::size_t i = 0; i < hr.size(); ++i)
    out.push_back(make_sr_example(hr[i], degrade(hr[i], degradation_for(degradation, i)), tok));
  return out;
}

std::vector<ArSample> ar_samples(const std::vector<SrExample>& examples) {
  std::vector<ArSample> out;
  out.reserve(examples.size());
  for (const SrExample& e : examples) out.push_back(e.sample);
  return out;
}

SrOutput super_resolve(const ArModel& m, const Tokenizer& tok, const Image& lr, const SamplingOptions& o) {
  require(m.schedule() == tok.schedule, "super_resolve: checkpoint schedule differs from the configured schedule");
  const LatentGrid cond = conditioning_latent(lr, tok.codec, tok.image_side());
  SrOutput out;
  out.tokens = sample_nextscale(m, cond, tok.codebook, tok.phi, o);
  for (int n = 1; n <= tok.schedule.scales(); ++n) out.scales.push_back(reconstruct_at_scale(out.tokens, n, tok));
  return out;
}

std::vector<ScaleSchedule> scale_partitions(const ScaleSchedule& s) {
  std::vector<ScaleSchedule> out;
  const auto& all = s.target_scales();
  for (int k = 1; k <= s.scales(); ++k)
    out.emplace_back(s.resolutions(), std::vector<double>(all.end() - k, all.end()));
  return out;
}

std::vector<SweepRow> sweep_allocation(const std::vector<ScaleSchedule>& schedules, const PatchCodec& codec,
                                       const Codebook& cb, const PhiBank& phi, const std::vector<Image>& images) {
  require(!images.empty(), "sweep_allocation: no images");
  std::vector<SweepRow> rows;
  for (const ScaleSchedule& s : schedules) {
    const Tokenizer tok{s, codec, cb, phi};
    SweepRow row{s, s.token_count(), std::vector<double>(s.scales(), 0.0)};
    for (const Image& img : images) {
      const TokenSequence t = tokenize_image(img, tok, TokenMode::Hierarchical);
      for (int n = 1; n <= s.scales(); ++n)
        row.psnr[n - 1] += psnr(reconstruct_at_scale(t, n, tok), reference_at_scale(img, s, n));
    }
    for (double& p : row.psnr) p /= static_cast<double>(images.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  auto join = [](const auto& v) {
    std::ostringstream ss;
    for (std::size_t i = 0; i < v.size(); ++i) ss << (i ? " " : "") << v[i];
    return ss.str();
  };
  std::ostringstream out;
  out << "schedule,resolutions,scales,token_count,psnr_by_scale,psnr_full\n";
  out << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const SweepRow& r = rows[i];
    std::ostringstream ps;
    ps << std::fixed << std::setprecision(4);
    for (std::size_t n = 0; n < r.psnr.size(); ++n) ps << (n ? " " : "") << r.psnr[n];
    out << i << ',' << join(r.schedule.resolutions()) << ',' << join(r.schedule.target_scales()) << ','
        << r.token_count << ',' << ps.str() << ',' << r.full_psnr() << '\n';
  }
  return out.str();
}

}  // namespace hitok
